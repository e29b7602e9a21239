import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tqsim.music import (
    DEFAULT_GRID,
    Signal,
    build_hankel,
    correlation_R,
    find_minima,
    frequency_grid,
    music,
    noise_space,
    read_signal_csv,
    steering,
    write_minima_json,
    write_R_csv,
    write_signal_csv,
)


def tones(freqs, amps, n_samples):
    n = np.arange(1, n_samples + 1)
    return np.exp(-1j * np.outer(n, freqs)) @ np.asarray(amps, dtype=complex)


def test_hankel_layout():
    s = np.arange(1, 9) + 0j  # s_1..s_8, N = 4
    M = build_hankel(s)
    ref = np.array([[s[m + n - 1] for n in range(1, 5)] for m in range(1, 5)])
    assert np.array_equal(M, ref)
    assert M[0, 0] == 2  # s_1 never enters
    with pytest.raises(ValueError):
        build_hankel(np.ones(7))


def test_signal_validation():
    assert Signal.even_length(np.ones(9)).N == 4
    with pytest.raises(ValueError):
        Signal(np.ones(2))
    with pytest.raises(ValueError):
        Signal(np.array([1, 2, np.nan, 4]))


def test_noise_space_threshold_and_rank():
    s = tones([0.3, -0.8], [2.0, 1.0], 64)
    M = build_hankel(s)
    ns = noise_space(M, threshold=1.0)
    assert ns.retained_rank == 2
    assert ns.basis.shape == (32, 30)
    assert np.allclose(ns.signal_basis.conj().T @ ns.basis, 0)
    assert noise_space(M, rank=5).retained_rank == 5
    with pytest.raises(ValueError):
        noise_space(M, rank=40)
    with pytest.raises(ValueError, match="empty"):
        noise_space(np.eye(4) * 10, threshold=1.0)


def test_R_is_projection_norm():
    rng = np.random.default_rng(0)
    s = tones([0.2, 1.0], [1.0, 0.5j], 40) + 0.1 * rng.normal(size=40)
    ns = noise_space(build_hankel(s), rank=2)
    om = np.linspace(-1, 1, 17)
    a = steering(om, ns.N)
    ref = np.linalg.norm(ns.basis.conj().T @ a, axis=0)
    assert np.allclose(correlation_R(ns, om, chunk=5), ref)
    with pytest.raises(ValueError):
        correlation_R(ns, [4.0])


def test_constant_signal_has_rank_one_and_minimum_at_zero():
    res = music(np.full(40, 3.0 + 0j), omegas=np.linspace(-np.pi / 2, np.pi / 2, 801))
    assert res.noise.retained_rank == 1
    est = res.estimates
    k = np.argmin(est.R_values)
    assert est.frequencies[k] == pytest.approx(0.0, abs=1e-12)
    assert est.R_values[k] == pytest.approx(0.0, abs=1e-10)
    # the remaining minima are sidelobes of the steering projection
    assert np.min(np.delete(est.R_values, k)) > 0.1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.4, 1.4), min_size=1, max_size=4, unique=True),
       st.integers(0, 2 ** 32 - 1))
def test_noiseless_tones_are_recovered(freqs, seed):
    freqs = np.sort(freqs)
    if len(freqs) > 1 and np.min(np.diff(freqs)) < 0.1:
        freqs = freqs[:1]
    rng = np.random.default_rng(seed)
    amps = rng.uniform(0.5, 2, len(freqs)) * np.exp(2j * np.pi * rng.random(len(freqs)))
    res = music(tones(freqs, amps, 128), rank=len(freqs))
    est = res.estimates
    deep = est.frequencies[np.argsort(est.R_values)[: len(freqs)]]
    step = res.omegas[1] - res.omegas[0]
    assert np.max(np.abs(np.sort(deep) - freqs)) <= step


def test_refinement_hits_parabola_vertex():
    om = np.linspace(-1, 1, 21)
    R = np.sqrt((om - 0.037) ** 2 + 1e-6)
    coarse = find_minima(R, om)
    fine = find_minima(R, om, refine=True)
    assert coarse.frequencies[0] == pytest.approx(0.0)
    assert fine.frequencies[0] == pytest.approx(0.037, abs=1e-9)
    assert fine.R_values[0] == pytest.approx(1e-3, rel=1e-6)
    assert len(find_minima(R, om, max_value=1e-4)) == 0


def test_find_minima_ignores_edges_and_plateaus():
    om = np.arange(6.0)
    assert len(find_minima([0, 1, 2, 2, 1, 0], om)) == 0
    assert list(find_minima([3, 1, 2, 0.5, 4, 5], om).indices) == [1, 3]
    with pytest.raises(ValueError):
        find_minima([1, 2], [0, 1])


def test_frequency_grid():
    g = frequency_grid()
    assert len(g) == DEFAULT_GRID and g[0] == -np.pi / 2 and g[-1] == np.pi / 2
    with pytest.raises(ValueError):
        frequency_grid(10, (0, 4))


def test_csv_round_trip(tmp_path):
    s = tones([0.4], [1 + 1j], 11)  # odd length, last sample dropped on read
    p = tmp_path / "sig.csv"
    write_signal_csv(p, s)
    back = read_signal_csv(p)
    assert back.N == 5
    assert np.array_equal(back.samples, s[:10])


def test_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("index,real,imag\n")
    with pytest.raises(ValueError, match="no samples"):
        read_signal_csv(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0.5,0\n2,oops,0\n")
    with pytest.raises(ValueError, match="malformed"):
        read_signal_csv(bad)
    short = tmp_path / "short.csv"
    short.write_text("1,0.5\n")
    with pytest.raises(ValueError):
        read_signal_csv(short)


def test_writers(tmp_path):
    import json

    res = music(tones([0.5], [1.0], 32), rank=1, omegas=np.linspace(-1, 1, 201))
    write_R_csv(tmp_path / "r.csv", res.omegas, res.R)
    assert (tmp_path / "r.csv").read_text().startswith("omega,R\n")
    write_minima_json(tmp_path / "m.json", res.estimates, {"rank": 1})
    data = json.loads((tmp_path / "m.json").read_text())
    k = int(np.argmin(data["R_values"]))
    assert data["rank"] == 1 and data["frequencies"][k] == pytest.approx(0.5)
