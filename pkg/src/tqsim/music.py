"""MUSIC line-spectral estimation on a Hankel-embedded signal.

Signal model: s_n = sum_k c_k exp(-i f_k n), n = 1..2N.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import hankel, svd

DEFAULT_GRID = 4096
DEFAULT_WINDOW = (-np.pi / 2, np.pi / 2)


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex).ravel()
        if len(s) < 4 or len(s) % 2:
            raise ValueError(f"signal length must be even and >= 4, got {len(s)}")
        if not np.all(np.isfinite(s)):
            raise ValueError("signal has non-finite samples")
        object.__setattr__(self, "samples", s)

    @classmethod
    def even_length(cls, samples) -> "Signal":
        """Drop the final sample when the length is odd."""
        s = np.asarray(samples)
        return cls(s[: len(s) - len(s) % 2])

    @property
    def N(self) -> int:
        return len(self.samples) // 2


def build_hankel(sig) -> np.ndarray:
    """M[m, n] = s_{m+n} for m, n = 1..N (so s_1 is never used)."""
    if not isinstance(sig, Signal):
        s = np.asarray(sig)
        if len(s) % 2:
            raise ValueError("Hankel embedding needs an even number of samples")
        sig = Signal(s)
    s, N = sig.samples, sig.N
    return hankel(s[1:N + 1], s[N:2 * N])


@dataclass(frozen=True)
class NoiseSpace:
    """Left singular basis split into retained signal columns and the noise complement."""

    U: np.ndarray
    singular_values: np.ndarray
    retained_rank: int

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def signal_basis(self) -> np.ndarray:
        return self.U[:, : self.retained_rank]

    @property
    def basis(self) -> np.ndarray:
        return self.U[:, self.retained_rank:]


def noise_space(M: np.ndarray, threshold: float = 1.0, rank: int | None = None) -> NoiseSpace:
    """SVD of M; signal columns are those with sigma > threshold, or the top ``rank``."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("noise_space expects a square matrix")
    U, S, _ = svd(M)
    N = M.shape[0]
    if rank is not None:
        if not 0 <= rank <= N:
            raise ValueError(f"rank must lie in [0, {N}]")
        k = int(rank)
    else:
        k = int(np.count_nonzero(S > threshold))
        if k == N:
            raise ValueError("every singular value exceeds the threshold; noise space is empty")
    return NoiseSpace(U, S, k)


def steering(omegas: np.ndarray, N: int) -> np.ndarray:
    """Columns a(w) = [exp(-i w n)]_{n=1..N}."""
    n = np.arange(1, N + 1)
    return np.exp(-1j * np.outer(n, np.asarray(omegas)))


def correlation_R(ns: NoiseSpace, omegas, chunk: int = 512) -> np.ndarray:
    """R(w) = ||(I - U_s U_s^dag) a(w)||, the noise-space component of the steering vector."""
    omegas = np.asarray(omegas, dtype=float)
    if ns.retained_rank >= ns.N:
        raise ValueError("noise space is empty")
    if np.any(np.abs(omegas) > np.pi + 1e-12):
        raise ValueError("frequency grid must lie in [-pi, pi]")
    Us = ns.signal_basis
    out = np.empty(len(omegas))
    for s in range(0, len(omegas), chunk):
        a = steering(omegas[s:s + chunk], ns.N)
        if Us.shape[1]:
            a = a - Us @ (Us.conj().T @ a)
        out[s:s + chunk] = np.linalg.norm(a, axis=0)
    return out


@dataclass(frozen=True)
class FrequencyEstimates:
    frequencies: np.ndarray
    R_values: np.ndarray
    grid_step: float
    indices: np.ndarray

    def __len__(self):
        return len(self.frequencies)

    def to_dict(self) -> dict:
        return {
            "frequencies": [float(f) for f in self.frequencies],
            "R_values": [float(r) for r in self.R_values],
            "grid_indices": [int(i) for i in self.indices],
            "grid_step": float(self.grid_step),
        }


def find_minima(R, omegas, refine: bool = False, max_value: float | None = None) -> FrequencyEstimates:
    """Strict interior local minima of R on the grid.

    ``refine`` fits a parabola to R^2 (smooth near a root, unlike R) over the
    three surrounding grid points. ``max_value`` drops minima above that level.
    """
    R = np.asarray(R, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    if len(R) < 3 or len(R) != len(omegas):
        raise ValueError("need matching R and grid with at least 3 points")
    h = float(omegas[1] - omegas[0])
    mid = R[1:-1]
    idx = np.flatnonzero((mid < R[:-2]) & (mid < R[2:])) + 1
    if max_value is not None:
        idx = idx[R[idx] <= max_value]
    freqs = omegas[idx].copy()
    vals = R[idx].copy()
    if refine and len(idx):
        y0, y1, y2 = R[idx - 1] ** 2, R[idx] ** 2, R[idx + 1] ** 2
        curv = y0 - 2 * y1 + y2
        off = np.where(curv > 0, 0.5 * (y0 - y2) / np.where(curv > 0, curv, 1), 0.0)
        off = np.clip(off, -0.5, 0.5)
        freqs = freqs + off * h
        vals = np.sqrt(np.maximum(y1 - 0.25 * (y0 - y2) * off, 0.0))
    return FrequencyEstimates(freqs, vals, h, idx)


def frequency_grid(n: int = DEFAULT_GRID, window=DEFAULT_WINDOW) -> np.ndarray:
    lo, hi = float(window[0]), float(window[1])
    if not -np.pi - 1e-12 <= lo < hi <= np.pi + 1e-12:
        raise ValueError("window must be an interval inside [-pi, pi]")
    return np.linspace(lo, hi, int(n))


@dataclass(frozen=True)
class MusicResult:
    omegas: np.ndarray
    R: np.ndarray
    noise: NoiseSpace
    estimates: FrequencyEstimates


def music(samples, threshold: float = 1.0, rank: int | None = None, omegas=None,
          refine: bool = False, max_value: float | None = None) -> MusicResult:
    sig = samples if isinstance(samples, Signal) else Signal.even_length(samples)
    omegas = frequency_grid() if omegas is None else np.asarray(omegas, dtype=float)
    ns = noise_space(build_hankel(sig), threshold=threshold, rank=rank)
    R = correlation_R(ns, omegas)
    return MusicResult(omegas, R, ns, find_minima(R, omegas, refine, max_value))


# ---------------------------------------------------------------- files


def read_signal_csv(path) -> Signal:
    """Rows of ``index, real, imag``; a header row is skipped if present."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1]), float(row[2])))
            except ValueError:
                if rows:
                    raise ValueError(f"malformed signal row {row!r} in {path}") from None
            except IndexError:
                raise ValueError(f"signal rows need index, real, imag: {row!r}") from None
    if not rows:
        raise ValueError(f"no samples in {path}")
    data = np.array(sorted(rows))
    return Signal.even_length(data[:, 1] + 1j * data[:, 2])


def write_signal_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "real", "imag"])
        for n, s in enumerate(np.asarray(samples), start=1):
            w.writerow([n, f"{s.real:.16e}", f"{s.imag:.16e}"])


def write_R_csv(path, omegas, R) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "R"])
        for o, r in zip(omegas, R):
            w.writerow([f"{o:.16e}", f"{r:.16e}"])


def write_minima_json(path, est: FrequencyEstimates, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(est.to_dict() | (extra or {}), indent=2, sort_keys=True) + "\n")
