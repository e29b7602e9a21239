"""Parity-resolved diagonalization, Gibbs and sector thermal states, sector solving."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh as _eigh
from scipy.special import logsumexp

from .operators import PauliString, ScaledObservable, parity_sectors

FULL, SYMMETRIC, ASYMMETRIC, CUSTOM = "full", "symmetric", "asymmetric", "custom"


def _apply_left(P, M):
    if isinstance(P, PauliString):
        return P.apply(M)
    return np.asarray(P) @ M


def _apply_right(M, P):
    if isinstance(P, PauliString):
        return P.apply_right(M)
    return M @ np.asarray(P)


def _dense(op):
    if isinstance(op, PauliString):
        return op.to_dense(real_if_possible=True)
    if isinstance(op, ScaledObservable):
        return op.scale * op.pauli.to_dense(real_if_possible=True)
    return np.asarray(op)


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal eigenbasis (columns of ``basis``) with energies and parities.

    ``blocks`` optionally records exact block support: for each pair
    ``(rows, cols)`` the columns ``cols`` vanish identically outside ``rows``.
    """

    energies: np.ndarray
    basis: np.ndarray
    parities: np.ndarray
    blocks: tuple[tuple[np.ndarray, np.ndarray], ...] | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def _block_views(self):
        return [(r, c, self.basis[np.ix_(r, c)]) for r, c in self.blocks]

    def to_eigenbasis(self, op) -> np.ndarray:
        """V^dag op V."""
        V = self.basis
        if self.blocks is None:
            if isinstance(op, PauliString):
                return V.conj().T @ op.apply(V)
            return V.conj().T @ (_dense(op) @ V)
        op = _dense(op)
        views = self._block_views()
        out = np.zeros((self.dim, self.dim), dtype=np.result_type(op, V))
        for ra, ca, Va in views:
            for rb, cb, Vb in views:
                sub = op[np.ix_(ra, rb)]
                if np.any(sub):
                    out[np.ix_(ca, cb)] = Va.conj().T @ sub @ Vb
        return out

    def from_eigenbasis(self, X: np.ndarray) -> np.ndarray:
        """V X V^dag."""
        V = self.basis
        if self.blocks is None:
            return V @ X @ V.conj().T
        views = self._block_views()
        out = np.zeros((self.dim, self.dim), dtype=np.result_type(X, V))
        for ra, ca, Va in views:
            for rb, cb, Vb in views:
                sub = X[np.ix_(ca, cb)]
                if np.any(sub):
                    out[np.ix_(ra, rb)] = Va @ sub @ Vb.conj().T
        return out

    def from_diagonal(self, w: np.ndarray) -> np.ndarray:
        """V diag(w) V^dag, keeping exact zeros between blocks."""
        V = self.basis
        w = np.asarray(w)
        if self.blocks is None:
            return (V * w) @ V.conj().T
        out = np.zeros((self.dim, self.dim), dtype=np.result_type(w, V))
        for r, c, Vb in self._block_views():
            out[np.ix_(r, r)] = (Vb * w[c]) @ Vb.conj().T
        return out

    def sector(self, parity: int) -> np.ndarray:
        return np.flatnonzero(self.parities == parity)


@dataclass(frozen=True)
class EigenSystem(SpectralBasis):
    """Eigendecomposition of a Hamiltonian in which every vector has definite parity."""


def _check_hermitian(H, name="H"):
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12 * scale:
        raise ValueError(f"{name} is not Hermitian")


def _commutator_norm(H, P) -> float:
    return float(np.max(np.abs(_apply_right(H, P) - _apply_left(P, H)), initial=0.0))


def _sort_system(energies, basis, parities, blocks=None):
    order = np.argsort(energies, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    if blocks is not None:
        blocks = tuple((r, np.sort(inv[c])) for r, c in blocks)
    return energies[order], basis[:, order], parities[order], blocks


def eigendecompose_with_parity(
    H: np.ndarray,
    P,
    degeneracy_tol: float | None = None,
    method: str = "auto",
    commute_tol: float = 1e-10,
    parity_tol: float = 1e-8,
) -> EigenSystem:
    """Diagonalize H so that every eigenvector is also a parity eigenvector.

    ``method="cluster"`` runs a plain Hermitian eigendecomposition and then,
    inside every cluster of energies closer than ``degeneracy_tol``,
    diagonalizes the restriction of P and rotates the cluster basis.
    ``method="blocks"`` (chosen by ``"auto"`` when P is diagonal in the
    computational basis) diagonalizes the two parity blocks separately, so
    cross-parity entries of the basis are exactly zero.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if np.iscomplexobj(H) and not np.any(H.imag):
        H = H.real
    _check_hermitian(H)
    h_norm = float(np.max(np.abs(H), initial=0.0))
    if _commutator_norm(H, P) > commute_tol * max(1.0, h_norm):
        raise ValueError("H does not commute with P")

    sectors = parity_sectors(P)
    if method == "auto":
        method = "blocks" if sectors is not None else "cluster"
    if method == "blocks":
        if sectors is None:
            raise ValueError("block method needs a diagonal +-1 parity operator")
        return _blocks_method(H, sectors)
    if method != "cluster":
        raise ValueError(f"unknown method {method!r}")

    w, V = np.linalg.eigh(H)
    if degeneracy_tol is None:
        degeneracy_tol = 1e-8 * max(float(np.max(np.abs(w), initial=0.0)), 1e-300)
    V, parities, energies = resolve_parity_clusters(
        V, w, P, list(_clusters(w, degeneracy_tol)), parity_tol
    )
    return EigenSystem(*_sort_system(np.real(energies), V, parities))


def resolve_parity_clusters(V, values, P, clusters, parity_tol=1e-8):
    """Rotate each cluster of columns of V onto eigenvectors of P.

    ``clusters`` is a list of (start, stop) column ranges whose ``values``
    (energies or unitary eigenvalues) coincide within tolerance. Returns the
    rotated basis, the parities and the cluster-rotated values
    diag(u^dag diag(values) u).
    """
    PV = _apply_left(P, V)
    V = V.astype(np.result_type(V, PV))
    values = np.array(values, dtype=np.result_type(values, PV))
    parities = np.empty(len(values), dtype=int)
    for start, stop in clusters:
        Vc = V[:, start:stop]
        Pc = Vc.conj().T @ PV[:, start:stop]
        mu, u = np.linalg.eigh((Pc + Pc.conj().T) / 2)
        if np.max(np.abs(np.abs(mu) - 1)) > parity_tol:
            raise ValueError(
                f"parity restriction on cluster at {values[start]:.6g} has eigenvalues {mu}"
            )
        if stop - start > 1:
            V[:, start:stop] = Vc @ u
            values[start:stop] = np.einsum("ij,i,ij->j", u.conj(), values[start:stop], u)
        parities[start:stop] = np.where(mu > 0, 1, -1)
    return V, parities, values


def _clusters(w, tol):
    start = 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] >= tol:
            yield start, k
            start = k


def _blocks_method(H, sectors) -> EigenSystem:
    d = H.shape[0]
    even, odd = sectors
    energies, parities, blocks = [], [], []
    dtype = H.dtype
    V = np.zeros((d, d), dtype=dtype)
    col = 0
    for idx, p in ((even, 1), (odd, -1)):
        if len(idx) == 0:
            continue
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        cols = np.arange(col, col + len(idx))
        V[np.ix_(idx, cols)] = v
        energies.append(w)
        parities.append(np.full(len(idx), p))
        blocks.append((idx, cols))
        col += len(idx)
    return EigenSystem(
        *_sort_system(np.concatenate(energies), V, np.concatenate(parities), tuple(blocks))
    )


@dataclass(frozen=True)
class ThermalState:
    """Density matrix plus, when known, its eigenbasis weights."""

    rho: np.ndarray
    beta: float
    kind: str = FULL
    weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]


def gibbs_weights(energies: np.ndarray, beta: float) -> np.ndarray:
    """Normalized e^{-beta E}, shifted by the minimum energy for stability."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    logw = -beta * (energies - energies.min()) if beta else np.zeros(len(energies))
    return np.exp(logw - logsumexp(logw))


def _ground_index(es: SpectralBasis, sector=None, tol=None) -> int:
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(es.energies))))
    idx = np.arange(es.dim)
    if sector is not None:
        idx = es.sector(_parity_label(sector))
    E = es.energies[idx]
    order = np.argsort(E, kind="stable")
    if len(order) > 1 and E[order[1]] - E[order[0]] < tol:
        where = "" if sector is None else f" in the {sector} sector"
        raise ValueError(f"degenerate ground state{where}; choose a parity sector")
    return int(idx[order[0]])


def _parity_label(sector) -> int:
    if sector in (1, "even", "+", "symmetric"):
        return 1
    if sector in (-1, "odd", "-", "asymmetric"):
        return -1
    raise ValueError(f"unknown parity sector {sector!r}")


def ground_state(es: SpectralBasis, sector=None) -> tuple[np.ndarray, int, float]:
    """(vector, parity, energy) of the lowest state, optionally within one sector."""
    n = _ground_index(es, sector)
    return es.basis[:, n].copy(), int(es.parities[n]), float(es.energies[n])


def thermal_state(es: EigenSystem, beta: float, sector=None) -> ThermalState:
    """Gibbs state e^{-beta H}/Z; ``beta=np.inf`` gives the ground-state projector."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if np.isinf(beta):
        w = np.zeros(es.dim)
        w[_ground_index(es, sector)] = 1.0
    else:
        w = gibbs_weights(es.energies, beta)
    return ThermalState(es.from_diagonal(w), beta, FULL, w)


def sector_hamiltonians(H: np.ndarray, P) -> tuple[np.ndarray, np.ndarray]:
    """H_S = (H + HP)/2 and H_A = (H - HP)/2."""
    HP = _apply_right(np.asarray(H), P)
    return (H + HP) / 2, (H - HP) / 2


def sector_log_weights(es: SpectralBasis, beta: float, parity: int) -> np.ndarray:
    """Unnormalized log weights of the sector Hamiltonian's Gibbs state.

    States in the chosen sector carry e^{-beta E_n}; the other sector sees a
    vanishing Hamiltonian and weight one.
    """
    return np.where(es.parities == parity, -beta * es.energies, 0.0)


def sector_thermal_states(es: EigenSystem, beta: float) -> tuple[ThermalState, ThermalState]:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    out = []
    for parity, kind in ((1, SYMMETRIC), (-1, ASYMMETRIC)):
        logw = sector_log_weights(es, beta, parity)
        w = np.exp(logw - logsumexp(logw))
        out.append(ThermalState(es.from_diagonal(w), beta, kind, w))
    return out[0], out[1]


@dataclass(frozen=True)
class ParityTrace:
    """Outcome probabilities of a parity measurement; ``value`` is Tr(rho P).

    Keeping both probabilities (instead of only their difference) preserves
    relative precision when one outcome is extremely rare.
    """

    plus: float
    minus: float

    @classmethod
    def from_trace(cls, t: float) -> "ParityTrace":
        return cls((1 + t) / 2, (1 - t) / 2)

    @property
    def value(self) -> float:
        return self.plus - self.minus

    def factors(self) -> tuple[float, float]:
        """(1 + Tr(rho P), 1 - Tr(rho P))."""
        total = self.plus + self.minus
        return 2 * self.plus / total, 2 * self.minus / total


def measure_parity(rho: np.ndarray, P) -> ParityTrace:
    """Probabilities of the +1/-1 outcomes of P, i.e. Tr(rho (I +- P)/2)."""
    rho = np.asarray(rho)
    sectors = parity_sectors(P)
    if sectors is not None:
        diag = np.real(np.diagonal(rho))
        return ParityTrace(float(np.sum(diag[sectors[0]])), float(np.sum(diag[sectors[1]])))
    Pd = _dense(P)
    eye = np.eye(rho.shape[0])
    plus = np.real(np.sum(rho * ((eye + Pd) / 2).T))
    minus = np.real(np.sum(rho * ((eye - Pd) / 2).T))
    return ParityTrace(float(plus), float(minus))


@dataclass(frozen=True)
class SectorData:
    Z_S: float
    Z_A: float
    N_S: float
    N_A: float
    Z: float
    d: int

    @property
    def coeff_symmetric(self) -> float:
        """(Z_S + N_A)/Z, the weight of the symmetric-state quench term."""
        return (self.Z_S + self.N_A) / self.Z

    @property
    def coeff_asymmetric(self) -> float:
        return (self.N_S + self.Z_A) / self.Z

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("Z_S", "Z_A", "N_S", "N_A", "Z")} | {
            "d": self.d
        }


def _factors(tr) -> tuple[float, float]:
    if isinstance(tr, ParityTrace):
        up, down = tr.factors()
    else:
        up, down = 1 + float(tr), 1 - float(tr)
    if not (up > 0 and down > 0):
        raise ValueError(f"parity trace at +-1 ({tr}); a sector is empty or fully dominant")
    return up, down


def solve_sector_data(tr_rho_P, tr_rhoS_P, tr_rhoA_P, d: int, rtol: float = 1e-9) -> SectorData:
    """Recover (Z_S, Z_A, N_S, N_A) from three parity traces and the dimension.

    Arguments are floats Tr(rho P) or :class:`ParityTrace` records. The
    closed form with the common factor lambda and the ratio route (dimension
    ratio first, then the partition functions) are both evaluated and must
    agree to ``rtol``.
    """
    if d < 2:
        raise ValueError("dimension must be >= 2")
    r_up, r_dn = _factors(tr_rho_P)
    s_up, s_dn = _factors(tr_rhoS_P)
    a_up, a_dn = _factors(tr_rhoA_P)

    lam = d / (a_up * s_up * r_dn + a_dn * s_dn * r_up)
    closed = SectorData(
        Z_S=a_dn * s_up * r_up * lam,
        Z_A=a_dn * s_up * r_dn * lam,
        N_S=a_up * s_up * r_dn * lam,
        N_A=a_dn * s_dn * r_up * lam,
        Z=2 * a_dn * s_up * lam,
        d=d,
    )

    ratio = (a_up * s_up * r_dn) / (a_dn * s_dn * r_up)
    N_S = d * ratio / (1 + ratio)
    N_A = d / (1 + ratio)
    Z_S = N_A * s_up / s_dn
    Z_A = N_S * a_dn / a_up
    for name, other in (("Z_S", Z_S), ("Z_A", Z_A), ("N_S", N_S), ("N_A", N_A)):
        ref = getattr(closed, name)
        if abs(other - ref) > rtol * abs(ref):
            raise ArithmeticError(f"sector solutions disagree on {name}: {other} vs {ref}")
    return closed


def sector_data_from_spectrum(es: SpectralBasis, beta: float) -> SectorData:
    """Direct eigen-count of the sector partition functions and dimensions."""
    even = es.parities == 1
    Z_S = float(np.sum(np.exp(-beta * es.energies[even])))
    Z_A = float(np.sum(np.exp(-beta * es.energies[~even])))
    return SectorData(Z_S, Z_A, float(even.sum()), float((~even).sum()), Z_S + Z_A, es.dim)


def noise_state(d: int, seed) -> np.ndarray:
    """Random full-rank state e^{E~}/Tr e^{E~} with E~ traceless Hermitian, ||E~||_1 = 1.

    Entries of the raw matrix have i.i.d. standard-normal real and imaginary
    parts; it is Hermitized as (G + G^dag)/2 before the trace is removed.
    """
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    E = (G + G.conj().T) / 2
    del G
    E[np.diag_indices(d)] -= np.trace(E) / d
    # the MRRR driver is several times faster than numpy's for large complex inputs
    lam, U = _eigh(E, driver="evr", overwrite_a=True, check_finite=False)
    del E
    lam = lam / np.sum(np.abs(lam))
    w = np.exp(lam - lam.max())
    w /= w.sum()
    return (U * w) @ U.conj().T


def perturb_state(state, epsilon: float, seed=None, noise: np.ndarray | None = None) -> ThermalState:
    """Return (rho + epsilon * varrho) renormalized to unit trace.

    ``noise`` supplies a precomputed varrho so several states can share the
    same perturbation; otherwise one is drawn from ``seed``.
    """
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    rho = state.rho if isinstance(state, ThermalState) else np.asarray(state)
    beta = state.beta if isinstance(state, ThermalState) else np.nan
    if epsilon == 0:
        return state if isinstance(state, ThermalState) else ThermalState(rho, beta, CUSTOM)
    if noise is None:
        noise = noise_state(rho.shape[0], seed)
    out = rho + epsilon * noise
    out = out / np.real(np.trace(out))
    return ThermalState(out, beta, CUSTOM)
