"""Exact and product-formula propagators, and the phase-sum series engine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .models import LayeredHamiltonian
from .operators import parity_sectors
from .states import (
    EigenSystem,
    SpectralBasis,
    _commutator_norm,
    _sort_system,
    resolve_parity_clusters,
)

METHODS = ("exact", "trotter1", "trotter2")


@dataclass(frozen=True)
class PropagatorSpec:
    method: str = "exact"
    dt: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method != "exact" and (self.dt is None or not self.dt > 0):
            raise ValueError("product-formula propagation needs dt > 0")

    @property
    def order(self) -> int:
        return {"trotter1": 1, "trotter2": 2}.get(self.method, 0)


@dataclass(frozen=True)
class EffectiveEigenSystem(SpectralBasis):
    """Eigendecomposition of a single-step unitary, U = W diag(e^{-i E dt}) W^dag.

    Series evaluated through it are exact only at integer multiples of ``dt``.
    """

    dt: float = 1.0

    @property
    def phases(self) -> np.ndarray:
        return -self.energies * self.dt


def exact_step(es: SpectralBasis, dt: float) -> np.ndarray:
    return es.from_diagonal(np.exp(-1j * es.energies * dt))


def _layer_exp(layer: np.ndarray, tau: float):
    """e^{-i layer tau}; returns a vector when the layer is diagonal."""
    diag = np.diagonal(layer)
    if not np.count_nonzero(layer - np.diag(diag)):
        return np.exp(-1j * tau * diag.real)
    w, v = np.linalg.eigh(layer)
    return (v * np.exp(-1j * tau * w)) @ v.conj().T


def _product(factors) -> np.ndarray:
    out = None
    for f in factors:
        if out is None:
            out = np.diag(f) if f.ndim == 1 else f.astype(complex)
        elif f.ndim == 1:
            out = out * f[None, :]
        else:
            out = out @ f
    return out


def _trotter_block(layers, dt, order):
    if order == 1:
        return _product([_layer_exp(L, dt) for L in layers])
    halves = [_layer_exp(L, dt / 2) for L in layers[:-1]]
    return _product(halves + [_layer_exp(layers[-1], dt)] + halves[::-1])


def trotter_step(lh: LayeredHamiltonian, dt: float, order: int = 1) -> np.ndarray:
    """One product-formula step, layers multiplied in ascending order.

    order 1: U = e^{-i T_1 dt} e^{-i T_2 dt} ... e^{-i T_G dt};
    order 2: the symmetric product with half steps on all but the last layer.
    When P is diagonal the step is built block by block, so entries between
    parity sectors are exactly zero.
    """
    if order not in (1, 2):
        raise ValueError(f"unsupported product-formula order {order}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    d = lh.dim
    sectors = parity_sectors(lh.P)
    if sectors is None:
        return _trotter_block(lh.layers, dt, order)
    even, odd = sectors
    for k, L in enumerate(lh.layers):
        if np.any(L[np.ix_(even, odd)]):
            raise ValueError(f"layer {k} does not commute with the parity operator")
    U = np.zeros((d, d), dtype=complex)
    for idx in sectors:
        if len(idx):
            U[np.ix_(idx, idx)] = _trotter_block([L[np.ix_(idx, idx)] for L in lh.layers], dt, order)
    return U


def _phase_clusters(angles: np.ndarray, tol: float):
    """Order of the eigenphases and clusters of near-equal ones on the circle."""
    order = np.argsort(angles, kind="stable")
    a = angles[order]
    n = len(a)
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    # start after the widest gap so no cluster straddles the branch cut
    shift = (int(np.argmax(gaps)) + 1) % n
    order = np.roll(order, -shift)
    a = np.unwrap(angles[order])
    clusters, start = [], 0
    for k in range(1, n + 1):
        if k == n or a[k] - a[k - 1] >= tol:
            clusters.append((start, k))
            start = k
    return order, clusters


def effective_eigensystem(
    U: np.ndarray,
    P,
    dt: float,
    degeneracy_tol: float = 1e-9,
    unitary_tol: float = 1e-9,
    method: str = "auto",
    parity_tol: float = 1e-8,
) -> EffectiveEigenSystem:
    """Diagonalize a parity-conserving unitary step by complex Schur decomposition.

    Eigenphases theta in (-pi, pi] become effective energies -theta/dt.
    """
    U = np.asarray(U)
    d = U.shape[0]
    if not dt > 0:
        raise ValueError("dt must be positive")
    sectors = parity_sectors(P)
    if method == "auto":
        method = "blocks" if sectors is not None else "cluster"
    if _commutator_norm(U, P) > unitary_tol:
        raise ValueError("U does not commute with P")

    if method == "blocks":
        if sectors is None:
            raise ValueError("block method needs a diagonal +-1 parity operator")
        W = np.zeros((d, d), dtype=complex)
        lam_all, par_all, blocks, col = [], [], [], 0
        for idx, p in zip(sectors, (1, -1)):
            if not len(idx):
                continue
            Ub = U[np.ix_(idx, idx)]
            _check_unitary(Ub, unitary_tol)
            T, Z = schur(Ub, output="complex")
            _check_normal(T, unitary_tol)
            cols = np.arange(col, col + len(idx))
            W[np.ix_(idx, cols)] = Z
            lam_all.append(np.diagonal(T).copy())
            par_all.append(np.full(len(idx), p))
            blocks.append((idx, cols))
            col += len(idx)
        lam = np.concatenate(lam_all)
        energies = -np.angle(lam) / dt
        parts = _sort_system(energies, W, np.concatenate(par_all), tuple(blocks))
        return EffectiveEigenSystem(*parts, dt=dt)
    if method != "cluster":
        raise ValueError(f"unknown method {method!r}")

    _check_unitary(U, unitary_tol)
    T, Z = schur(U, output="complex")
    _check_normal(T, unitary_tol)
    lam = np.diagonal(T).copy()
    order, clusters = _phase_clusters(np.angle(lam), degeneracy_tol)
    Z, parities, lam = resolve_parity_clusters(Z[:, order], lam[order], P, clusters, parity_tol)
    energies = -np.angle(lam) / dt
    return EffectiveEigenSystem(*_sort_system(energies, Z, parities), dt=dt)


def _check_unitary(U, tol):
    err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if err > tol:
        raise ValueError(f"step is not unitary (residual {err:.2e})")


def _check_normal(T, tol):
    off = np.max(np.abs(np.triu(T, 1)), initial=0.0)
    if off > tol:
        raise ValueError(f"Schur form is not diagonal (residual {off:.2e})")


def propagation_basis(
    lh: LayeredHamiltonian, spec: PropagatorSpec, es: EigenSystem | None = None
) -> SpectralBasis:
    """Spectral basis that generates the dynamics selected by ``spec``."""
    if spec.method == "exact":
        if es is None:
            from .states import eigendecompose_with_parity

            es = eigendecompose_with_parity(lh.H, lh.P)
        return es
    return effective_eigensystem(trotter_step(lh, spec.dt, spec.order), lh.P, spec.dt)


def check_times(basis: SpectralBasis, times: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Validate a time grid; effective systems only allow multiples of their step."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    if isinstance(basis, EffectiveEigenSystem):
        k = times / basis.dt
        if np.max(np.abs(k - np.round(k)), initial=0.0) > tol:
            raise ValueError("product-formula dynamics is only defined at multiples of dt")
    return times


class SeriesEngine:
    """Evaluate sum_{n,m} X_nm Y_mn e^{i(E_m - E_n) t} in O(d^2) per time point.

    X and Y are eigenbasis matrices; with X = V^dag rho' V and Y = V^dag B V
    this is Tr(rho' B(t)), B(t) = e^{iHt} B e^{-iHt}.
    """

    def __init__(self, basis: SpectralBasis, chunk_elems: int = 1 << 22):
        self.basis = basis
        self.energies = np.asarray(basis.energies)
        self.chunk = max(1, chunk_elems // max(1, basis.dim))
        par = np.asarray(basis.parities)
        self.sectors = (np.flatnonzero(par > 0), np.flatnonzero(par < 0))

    @property
    def dim(self) -> int:
        return self.basis.dim

    def to_eigenbasis(self, op) -> np.ndarray:
        return self.basis.to_eigenbasis(op)

    def phases(self, t: float) -> np.ndarray:
        return np.exp(1j * self.energies * t)

    def heisenberg(self, Y: np.ndarray, t: float) -> np.ndarray:
        """Eigenbasis matrix of Y(t) = e^{iHt} Y e^{-iHt}."""
        ph = self.phases(t)
        return ph[:, None] * Y * ph.conj()[None, :]

    def _parity_blocks(self, G):
        """Nonzero blocks (rows, cols, G[rows, cols]) when G is exactly parity-odd or -even."""
        e, o = self.sectors
        if not (len(e) and len(o)):
            return None
        odd = [(e, o), (o, e)]
        even = [(e, e), (o, o)]
        for keep, zero in ((odd, even), (even, odd)):
            if not any(np.any(G[np.ix_(r, c)]) for r, c in zero):
                return [(r, c, G[np.ix_(r, c)]) for r, c in keep]
        return None

    @staticmethod
    def _matmul(phi, G):
        if np.iscomplexobj(G):
            return phi @ G
        # two real products; contiguous copies keep numpy on the BLAS path
        re = np.ascontiguousarray(phi.real) @ G
        im = np.ascontiguousarray(phi.imag) @ G
        return re + 1j * im

    def phase_sum(self, X: np.ndarray, Y: np.ndarray, times) -> np.ndarray:
        times = check_times(self.basis, times)
        if X.shape != (self.dim, self.dim) or Y.shape != X.shape:
            raise ValueError("operator dimensions do not match the spectral basis")
        G = (X * Y.T).T  # G[m, n] = X_nm Y_mn
        if np.iscomplexobj(G) and not np.any(G.imag):
            G = G.real
        blocks = self._parity_blocks(G)
        if blocks is None:
            idx = np.arange(self.dim)
            blocks = [(idx, idx, G)]
        out = np.zeros(len(times), dtype=complex)
        for s in range(0, len(times), self.chunk):
            tc = times[s:s + self.chunk]
            phi = np.exp(1j * np.outer(tc, self.energies))
            for rows, cols, Gb in blocks:
                prod = self._matmul(phi[:, rows], Gb)
                out[s:s + self.chunk] += np.einsum("tn,tn->t", phi[:, cols].conj(), prod)
        return out


def expectation_series(rho_prime, B, basis: SpectralBasis, times) -> np.ndarray:
    """Tr(rho' e^{iHt} B e^{-iHt}) over ``times``."""
    engine = SeriesEngine(basis)
    for op in (rho_prime, B):
        shape = getattr(op, "shape", None) or (getattr(op, "dim", basis.dim),) * 2
        if tuple(shape) != (basis.dim, basis.dim):
            raise ValueError("dimension mismatch with the spectral basis")
    return engine.phase_sum(engine.to_eigenbasis(rho_prime), engine.to_eigenbasis(B), times)
