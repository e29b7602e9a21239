"""Green's functions as pole lists: exact Lehmann sums and fits to time series.

Convention: a pole (delta, w) contributes w exp(i delta t) to C(A, B, t) and
w / (z - delta) to G(z).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .states import SpectralBasis, ThermalState


@dataclass
class GreensFunction:
    deltas: np.ndarray
    weights: np.ndarray
    residual: float | None = None

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=complex).ravel()
        if self.deltas.shape != self.weights.shape:
            raise ValueError("deltas and weights differ in length")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        order = np.argsort(self.deltas, kind="stable")
        self.deltas, self.weights = self.deltas[order], self.weights[order]

    def __len__(self):
        return len(self.deltas)

    def synthesize(self, times) -> np.ndarray:
        """C(t) = sum_k w_k exp(i delta_k t)."""
        t = np.asarray(times, dtype=float)
        return np.exp(1j * np.outer(t, self.deltas)) @ self.weights

    def significant(self, cut: float) -> "GreensFunction":
        keep = np.abs(self.weights) > cut
        return GreensFunction(self.deltas[keep], self.weights[keep])

    def to_json(self) -> list[dict]:
        return [
            {"delta": float(d), "weight_re": float(w.real), "weight_im": float(w.imag)}
            for d, w in zip(self.deltas, self.weights)
        ]

    @classmethod
    def from_json(cls, items) -> "GreensFunction":
        return cls([it["delta"] for it in items], [it["weight_re"] + 1j * it["weight_im"] for it in items])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GreensFunction":
        return cls.from_json(json.loads(Path(path).read_text()))


def merge_poles(deltas, weights, merge_tol: float, drop_tol: float = 0.0):
    """Merge poles closer than ``merge_tol`` (chained), summing weights.

    The merged position is the |weight|-weighted mean of the group.
    """
    deltas = np.asarray(deltas, dtype=float)
    weights = np.asarray(weights, dtype=complex)
    if len(deltas) == 0:
        return deltas, weights
    order = np.argsort(deltas, kind="stable")
    d, w = deltas[order], weights[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(d) > merge_tol) + 1])
    wsum = np.add.reduceat(w, starts)
    aw = np.abs(w)
    norm = np.add.reduceat(aw, starts)
    dmean = np.add.reduceat(aw * d, starts) / np.where(norm > 0, norm, 1)
    dmean = np.where(norm > 0, dmean, d[starts])
    keep = np.abs(wsum) > drop_tol
    return dmean[keep], wsum[keep]


def _eigenframe(es: SpectralBasis, op) -> np.ndarray:
    from .tqs import split_scale

    unit, scale = split_scale(op)
    return scale * es.to_eigenbasis(unit)


def lehmann_exact(es: SpectralBasis, rho, O_a, O_b, merge_tol: float | None = None,
                  drop_tol: float = 1e-16) -> GreensFunction:
    """Poles of C(t) = Tr(rho O_a O_b(t)) from an eigendecomposition.

    Pair (n, m) has weight (rho O_a)_{nm} (O_b)_{mn} in the eigenbasis and
    frequency delta = E_m - E_n.
    """
    E = es.energies
    if merge_tol is None:
        merge_tol = 1e-11 * max(1.0, float(np.max(np.abs(E))))
    A = _eigenframe(es, O_a)
    B = _eigenframe(es, O_b)
    if isinstance(rho, ThermalState) and rho.weights is not None:
        X = rho.weights[:, None] * A
    else:
        rho = rho.rho if isinstance(rho, ThermalState) else np.asarray(rho)
        if rho.ndim == 1:
            if len(rho) != es.dim:
                raise ValueError("state dimension mismatch")
            X = rho[:, None] * A
        else:
            if rho.shape != (es.dim, es.dim):
                raise ValueError("state dimension mismatch")
            X = es.to_eigenbasis(rho) @ A
    W = X * B.T
    n, m = np.nonzero(np.abs(W) > drop_tol)
    deltas, weights = merge_poles(E[m] - E[n], W[n, m], merge_tol, drop_tol)
    return GreensFunction(deltas, weights)


def evaluate_G(gf: GreensFunction, z, pole_tol: float = 1e-12):
    """G(z) = sum_k w_k / (z - delta_k); scalar or array z."""
    z = np.asarray(z, dtype=complex)
    diff = z[..., None] - gf.deltas
    if np.any(np.abs(diff) < pole_tol):
        raise ZeroDivisionError("z coincides with a pole")
    out = np.sum(gf.weights / diff, axis=-1)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectralCurve:
    omegas: np.ndarray
    values: np.ndarray
    eta: float

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "S"])
            for o, s in zip(self.omegas, self.values):
                w.writerow([f"{o:.16e}", f"{s:.16e}"])

    def peaks(self) -> np.ndarray:
        v = self.values
        idx = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])) + 1
        return self.omegas[idx]


def spectral_function(gf: GreensFunction, omegas, eta: float) -> SpectralCurve:
    """S(w, eta) = -2 Im G(w + i eta)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    omegas = np.asarray(omegas, dtype=float)
    values = -2 * np.imag(evaluate_G(gf, omegas + 1j * eta))
    return SpectralCurve(omegas, np.atleast_1d(values), float(eta))


def delta_from_music_frequency(f, dt: float):
    """MUSIC tones exp(-i f n) at spacing dt correspond to poles delta = -f/dt."""
    return -np.asarray(f, dtype=float) / dt


def greens_from_series(series, freqs, dt: float | None = None, merge_tol: float = 1e-6,
                       rcond: float = 1e-10) -> GreensFunction:
    """Least-squares weights for known pole positions.

    ``freqs`` is either an array of deltas or MUSIC :class:`FrequencyEstimates`
    (converted with the grid spacing ``dt``, by default the series spacing).
    The residual ||C - sum w e^{i delta t}|| / sqrt(n_t) is stored on the result.
    """
    from .music import FrequencyEstimates

    times = np.asarray(series.times, dtype=float)
    values = np.asarray(series.values, dtype=complex)
    if isinstance(freqs, FrequencyEstimates):
        if dt is None:
            dt = float(times[1] - times[0])
        deltas = delta_from_music_frequency(freqs.frequencies, dt)
    else:
        deltas = np.asarray(freqs, dtype=float)
    deltas, _ = merge_poles(deltas, np.ones(len(deltas)), merge_tol)
    if len(times) < len(deltas):
        raise ValueError("fewer samples than frequencies")
    D = np.exp(1j * np.outer(times, deltas))
    w, _, rank, sv = np.linalg.lstsq(D, values, rcond=None)
    if len(deltas) and (rank < len(deltas) or sv[-1] < rcond * sv[0]):
        raise np.linalg.LinAlgError("design matrix is rank deficient (near-duplicate frequencies)")
    residual = float(np.linalg.norm(D @ w - values) / np.sqrt(len(times)))
    return GreensFunction(deltas, w, residual)
