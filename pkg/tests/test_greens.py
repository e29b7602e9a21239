import numpy as np
import pytest

import oracles as o
from tqsim.greens import (
    GreensFunction,
    delta_from_music_frequency,
    evaluate_G,
    greens_from_series,
    lehmann_exact,
    merge_poles,
    spectral_function,
)
from tqsim.models import XXZParams, build_xxz
from tqsim.music import music
from tqsim.operators import PauliString
from tqsim.states import eigendecompose_with_parity, ground_state, thermal_state
from tqsim.tqs import CorrelatorSeries

DT = np.pi / 20


@pytest.fixture(scope="module")
def xxz6():
    lh = build_xxz(XXZParams(N=6, J_X=1.0, J_Z=2.0, h=1.0))
    return lh, eigendecompose_with_parity(lh.H, lh.P)


def test_lehmann_synthesis_matches_time_series(xxz6):
    lh, es = xxz6
    A, B = PauliString("XIIIII"), PauliString("IIYIII")
    times = DT * np.arange(200)
    th = thermal_state(es, 0.6)
    gf = lehmann_exact(es, th, A, B)
    ref = o.lehmann_series(lh.H, o.gibbs(lh.H, 0.6), A.to_dense(), B.to_dense(), times)
    assert np.max(np.abs(gf.synthesize(times) - ref)) <= 1e-9
    # same poles from a dense state
    gf2 = lehmann_exact(es, th.rho, A, B)
    assert np.allclose(gf2.synthesize(times), ref, atol=1e-9)


def test_ground_state_weights_are_positive(xxz6):
    lh, es = xxz6
    psi, _, E0 = ground_state(es)
    A = PauliString("XIIIII")
    gf = lehmann_exact(es, np.outer(psi, psi.conj()), A, A)
    assert np.allclose(gf.weights.imag, 0, atol=1e-12)
    assert np.all(gf.weights.real > -1e-14)
    # gaps above the ground state are positive and total weight is <A^2> = 1
    real = gf.significant(1e-12)
    assert np.all(real.deltas > 0)
    assert gf.weights.sum().real == pytest.approx(1.0)
    E = np.linalg.eigvalsh(lh.H)
    for d in real.deltas:
        assert np.min(np.abs(E - E0 - d)) < 1e-9


def test_greens_from_series_recovers_weights():
    deltas = np.array([-1.3, 0.2, 0.75, 2.0])
    weights = np.array([0.1, 0.5 - 0.2j, 0.3, 0.05j])
    true = GreensFunction(deltas, weights)
    times = DT * np.arange(300)
    series = CorrelatorSeries(times, true.synthesize(times))
    fit = greens_from_series(series, deltas)
    assert np.max(np.abs(fit.weights - weights)) <= 1e-6
    assert fit.residual < 1e-10
    with pytest.raises(np.linalg.LinAlgError):
        greens_from_series(series, [0.2, 0.2 + 1e-11], merge_tol=1e-14)
    with pytest.raises(ValueError):
        greens_from_series(CorrelatorSeries(times[:2], series.values[:2]), deltas)


def test_music_frequencies_map_to_poles():
    # a pole at delta gives exp(i delta t), i.e. a MUSIC tone exp(-i f n) with f = -delta dt
    deltas = np.array([1.0, 3.0])
    gf = GreensFunction(deltas, [0.6, 0.4])
    times = DT * np.arange(1, 401)
    res = music(gf.synthesize(times), rank=2)
    fit = greens_from_series(CorrelatorSeries(times, gf.synthesize(times)), res.estimates)
    big = fit.significant(0.05)
    assert len(big) == 2
    assert np.allclose(big.deltas, deltas, atol=20 * res.estimates.grid_step)
    assert delta_from_music_frequency(-0.05, 0.05) == pytest.approx(1.0)


def test_evaluate_G_and_spectral_function():
    gf = GreensFunction([-1.0, 2.0], [0.25, 0.75])
    z = np.array([0.3 + 0.1j, -2.0 + 0.5j])
    ref = 0.25 / (z + 1.0) + 0.75 / (z - 2.0)
    assert np.allclose(evaluate_G(gf, z), ref)
    assert isinstance(evaluate_G(gf, 0.5j), complex)
    with pytest.raises(ZeroDivisionError):
        evaluate_G(gf, 2.0)
    om = np.linspace(-3, 4, 701)
    eta = 0.05
    curve = spectral_function(gf, om, eta)
    lor = sum(2 * w * eta / ((om - d) ** 2 + eta ** 2) for d, w in zip(gf.deltas, gf.weights.real))
    assert np.allclose(curve.values, lor)
    assert np.allclose(curve.peaks(), [-1.0, 2.0], atol=0.011)
    with pytest.raises(ValueError):
        spectral_function(gf, om, 0.0)


def test_json_round_trip(tmp_path):
    gf = GreensFunction([0.5, -0.1], [1 + 2j, -0.3])
    back = GreensFunction.from_json(gf.to_json())
    assert np.array_equal(back.deltas, gf.deltas) and np.array_equal(back.weights, gf.weights)
    gf.save(tmp_path / "g.json")
    back = GreensFunction.load(tmp_path / "g.json")
    assert np.array_equal(back.weights, gf.weights)
    assert list(back.deltas) == [-0.1, 0.5]


def test_merge_poles():
    d, w = merge_poles([0.0, 1e-10, 1.0, 1.0 + 2e-10, 5.0], [1.0, 1.0, 0.5, -0.5, 2.0], 1e-9, 1e-12)
    assert np.allclose(d, [5e-11, 5.0]) and np.allclose(w, [2.0, 2.0])
    d, w = merge_poles([], [], 1e-9)
    assert len(d) == 0


def test_greens_function_validation():
    with pytest.raises(ValueError):
        GreensFunction([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        GreensFunction([0.0], [np.inf])
