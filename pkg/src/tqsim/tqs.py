"""Quench functions and correlator reconstruction from tailored quenches.

Every quantity is computed in the eigenframe of the dynamics: states and
observables are transformed once, after which each time point of a series
costs O(d^2) (see :class:`tqsim.evolution.SeriesEngine`).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .evolution import EffectiveEigenSystem, SeriesEngine, check_times
from .operators import PauliString, ScaledObservable, majorana_parts
from .states import (
    EigenSystem,
    ParityTrace,
    SectorData,
    SpectralBasis,
    _parity_label,
    gibbs_weights,
    sector_log_weights,
    solve_sector_data,
)

SQRT_HALF = np.sqrt(0.5)


class QuenchKind(Enum):
    IDENTITY = "I"
    PLAIN_A = "A"
    PLAIN_P = "P"
    IM = "(I+iA)/sqrt2"
    RE = "(P+A)/sqrt2"


class StationarityWarning(UserWarning):
    """The initial state does not commute with the Hamiltonian."""


def quench_operator(kind: QuenchKind, A, P=None) -> np.ndarray:
    """Dense quench operator for unit observable A and parity P."""
    A = _unit_dense(A)
    d = A.shape[0]
    if kind is QuenchKind.IDENTITY:
        return np.eye(d, dtype=complex)
    if kind is QuenchKind.PLAIN_A:
        return A.astype(complex)
    if kind is QuenchKind.IM:
        return (np.eye(d) + 1j * A) * SQRT_HALF
    if P is None:
        raise ValueError(f"{kind.value} needs the parity operator")
    Pd = _unit_dense(P)
    if kind is QuenchKind.PLAIN_P:
        return Pd.astype(complex)
    return ((Pd + A) * SQRT_HALF).astype(complex)


# ---------------------------------------------------------------- operands


def split_scale(op) -> tuple[object, float]:
    """Separate an observable into a unit part (squares to I) and a real scale."""
    if isinstance(op, ScaledObservable):
        return op.pauli, op.scale
    if isinstance(op, PauliString):
        if not op.is_hermitian:
            raise ValueError(f"{op} is not Hermitian")
        return op, 1.0
    return np.asarray(op), 1.0


def _unit_dense(op) -> np.ndarray:
    unit, _ = split_scale(op)
    return unit.to_dense() if isinstance(unit, PauliString) else unit


def _check_unit(op, name):
    unit, _ = split_scale(op)
    if isinstance(unit, PauliString):
        return
    _check_hermitian(unit, name)
    if np.max(np.abs(unit @ unit - np.eye(unit.shape[0]))) > 1e-10:
        raise ValueError(f"{name} must square to the identity")


def _check_hermitian(M, name):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if np.max(np.abs(M - M.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"{name} is not Hermitian")


def _as_hermitian(op):
    if isinstance(op, (PauliString, ScaledObservable)):
        unit, scale = split_scale(op)
        return scale * unit.to_dense()
    op = np.asarray(op)
    _check_hermitian(op, "B")
    return op


def _check_dim(op, d, name):
    if isinstance(op, (PauliString, ScaledObservable)):
        dim = 1 << op.n_sites
    else:
        dim = np.asarray(op).shape[0]
    if dim != d:
        raise ValueError(f"{name} has dimension {dim}, expected {d}")


def _anticommutes(a, b, tol=1e-10) -> bool:
    ua, _ = split_scale(a)
    ub, _ = split_scale(b)
    if isinstance(ua, PauliString) and isinstance(ub, PauliString):
        return not ua.commutes_with(ub)
    da, db = _unit_dense(a), _unit_dense(b)
    return np.max(np.abs(da @ db + db @ da)) <= tol


def frame_parities(basis: SpectralBasis, P, n_probe: int = 8, tol: float = 1e-8) -> np.ndarray:
    """Parities of the basis vectors, spot-checked against P on a few columns."""
    cols = np.linspace(0, basis.dim - 1, min(n_probe, basis.dim)).astype(int)
    V = basis.basis[:, cols]
    PV = P.apply(V) if isinstance(P, PauliString) else _unit_dense(P) @ V
    if np.max(np.abs(PV - V * basis.parities[cols])) > tol:
        raise ValueError("parity operator is not the symmetry used to build the basis")
    return basis.parities.astype(float)


# ---------------------------------------------------------------- kicks


def _a_products(X, A, sectors=None):
    """(A X, A X A) for a frame matrix or weight vector X.

    With ``sectors`` (even and odd frame indices) and a parity-odd A, the
    product A X A only needs the two off-diagonal blocks of A.
    """
    AX = A * X[None, :] if X.ndim == 1 else A @ X
    if sectors is None:
        return AX, AX @ A
    e, o = sectors
    AXA = np.zeros(AX.shape, dtype=np.result_type(AX, A))
    AXA[:, o] = AX[:, e] @ A[np.ix_(e, o)]
    AXA[:, e] = AX[:, o] @ A[np.ix_(o, e)]
    return AX, AXA


def _odd_sectors(A, p):
    """Even/odd index sets if A has exactly zero parity-diagonal blocks."""
    if p is None:
        return None
    e, o = np.flatnonzero(p > 0), np.flatnonzero(p < 0)
    if not (len(e) and len(o)):
        return None
    if np.any(A[np.ix_(e, e)]) or np.any(A[np.ix_(o, o)]):
        return None
    return e, o


def _kick_dense(kind: QuenchKind, X, A, p, products=None):
    """K X K^dag in the eigenframe; X is a matrix or a vector of diagonal weights."""
    diag = X.ndim == 1
    Xd = np.diag(X) if diag else X
    if kind is QuenchKind.IDENTITY:
        return Xd
    if kind is QuenchKind.PLAIN_P:
        return p[:, None] * Xd * p[None, :]
    AX, AXA = products if products is not None else _a_products(X, A)
    if kind is QuenchKind.PLAIN_A:
        return AXA
    XA = AX.conj().T
    if kind is QuenchKind.IM:
        return 0.5 * (Xd + AXA + 1j * (AX - XA))
    return 0.5 * (p[:, None] * Xd * p[None, :] + p[:, None] * XA + AX * p[None, :] + AXA)


def _kick_pure(kind: QuenchKind, psi, A, p):
    if kind is QuenchKind.IDENTITY:
        v = psi
    elif kind is QuenchKind.PLAIN_A:
        v = A @ psi
    elif kind is QuenchKind.PLAIN_P:
        v = p * psi
    elif kind is QuenchKind.IM:
        v = (psi + 1j * (A @ psi)) * SQRT_HALF
    else:
        v = (p * psi + A @ psi) * SQRT_HALF
    return np.outer(v, v.conj())


# ---------------------------------------------------------------- measurements


class StaticMeasurement:
    """Measurement of B(t) = e^{iHt} B e^{-iHt}."""

    def __init__(self, engine: SeriesEngine, B_e: np.ndarray):
        self.engine = engine
        self.B_e = B_e
        self.trace = complex(np.trace(B_e))

    def series(self, states: dict[str, Callable[[], np.ndarray]], times) -> dict[str, np.ndarray]:
        return {k: self.engine.phase_sum(make(), self.B_e, times) for k, make in states.items()}


class DressedMeasurement:
    """Measurement of B(t) A B(t), the dressed operator that turns an OTOC into a two-point function."""

    def __init__(self, engine: SeriesEngine, A_e, B_e, parities=None, tol: float = 1e-10):
        self.engine = engine
        self.A_e, self.B_e = A_e, B_e
        self.p = parities
        self.tol = tol
        # Tr(B A B) = Tr(A B^2) = Tr(A) for unit B
        self.trace = complex(np.trace(A_e))

    def at(self, t: float) -> np.ndarray:
        Bt = self.engine.heisenberg(self.B_e, t)
        M = Bt @ self.A_e @ Bt
        if self.p is not None:
            err = np.max(np.abs(self.p[:, None] * M + M * self.p[None, :]))
            if err > self.tol:
                raise ArithmeticError(f"dressed operator does not anticommute with P (t={t}, {err:.1e})")
        return M

    def series(self, states, times) -> dict[str, np.ndarray]:
        times = check_times(self.engine.basis, times)
        Xs = {k: make() for k, make in states.items()}
        out = {k: np.empty(len(times), dtype=complex) for k in Xs}
        for j, t in enumerate(times):
            Mt = self.at(t).T
            for k, X in Xs.items():
                out[k][j] = np.sum(X * Mt)
        return out


def _real_part(z: np.ndarray, name: str, rtol: float = 1e-10) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(z), initial=0.0)))
    if np.max(np.abs(z.imag), initial=0.0) > rtol * scale:
        raise ArithmeticError(f"quench series {name} has imaginary residue {np.max(np.abs(z.imag)):.2e}")
    return z.real.copy()


def _warn_if_not_stationary(X, basis: SpectralBasis, tol: float = 1e-10):
    if not isinstance(basis, EigenSystem) or X.ndim == 1:
        return
    E = basis.energies
    gap = np.abs(E[:, None] - E[None, :]) > 1e-8 * max(1.0, float(np.max(np.abs(E))))
    if np.max(np.abs(X[gap]), initial=0.0) > tol:
        warnings.warn("initial state does not commute with H", StationarityWarning, stacklevel=3)


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class ShotConfig:
    """Shots per time point; ``shots=None`` means exact expectation values."""

    shots: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.shots is not None and int(self.shots) < 1:
            raise ValueError("shots must be >= 1")

    @property
    def exact(self) -> bool:
        return self.shots is None


def emulate_shots(exact_Q, cfg: ShotConfig, rng: np.random.Generator | None = None):
    """Sample mean of +-1 outcomes whose mean is ``exact_Q``."""
    q = np.asarray(exact_Q, dtype=float)
    if np.any(np.abs(q) > 1 + 1e-9):
        raise ValueError("quench values must lie in [-1, 1] for +-1 measurements")
    if cfg.exact:
        return exact_Q
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = rng.binomial(int(cfg.shots), (1 + np.clip(q, -1, 1)) / 2)
    est = 2 * k / int(cfg.shots) - 1
    return float(est) if np.ndim(est) == 0 else est


def _apply_shots(channels: dict, shots: ShotConfig | None) -> dict:
    if shots is None or shots.exact:
        return channels
    seqs = np.random.SeedSequence(shots.seed).spawn(len(channels))
    return {
        k: emulate_shots(v, shots, np.random.default_rng(s))
        for (k, v), s in zip(sorted(channels.items()), seqs)
    }


@dataclass
class CorrelatorSeries:
    times: np.ndarray
    values: np.ndarray
    scale: float = 1.0
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)
    sector: SectorData | None = None
    parity: int | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("correlator values must be finite")

    def __len__(self):
        return len(self.times)

    def combine(self, other: "CorrelatorSeries", coeff: complex = 1.0) -> "CorrelatorSeries":
        """self + coeff * other on the same grid."""
        if not np.array_equal(self.times, other.times):
            raise ValueError("series live on different grids")
        return CorrelatorSeries(self.times, self.values + coeff * other.values, 1.0)


# ---------------------------------------------------------------- the frame


class QuenchFrame:
    """Unit observables in the eigenframe of the dynamics, shared by all channels."""

    def __init__(self, basis: SpectralBasis, A, B, P=None, dressed: bool = False, unit_B: bool = True):
        d = basis.dim
        for op, name in ((A, "A"), (B, "B")):
            _check_dim(op, d, name)
        _check_unit(A, "A")
        self.basis = basis
        self.engine = SeriesEngine(basis)
        self._memo = {}
        (uA, self.sA), (uB, self.sB) = split_scale(A), split_scale(B)
        if unit_B:
            _check_unit(B, "B")
        else:
            uB, self.sB = _as_hermitian(B), 1.0
        self.A_e = self.engine.to_eigenbasis(uA)
        same = uB is uA or (isinstance(uB, PauliString) and uB == uA)
        B_e = self.A_e if same else self.engine.to_eigenbasis(uB)
        self.p = None if P is None else frame_parities(basis, P)
        self._sectors = _odd_sectors(self.A_e, self.p)
        if dressed:
            self.measurement = DressedMeasurement(self.engine, self.A_e, B_e, self.p)
            self.scale = self.sA**2 * self.sB**2
        else:
            self.measurement = StaticMeasurement(self.engine, B_e)
            self.scale = self.sA * self.sB

    @property
    def dim(self) -> int:
        return self.basis.dim

    def state(self, rho) -> np.ndarray:
        """Eigenframe density (a weight vector passes through unchanged)."""
        rho = np.asarray(rho)
        if rho.ndim == 1:
            return rho
        X = self.engine.to_eigenbasis(rho)
        _warn_if_not_stationary(X, self.basis)
        return X

    def kicked(self, kind: QuenchKind, X) -> Callable[[], np.ndarray]:
        if kind in (QuenchKind.PLAIN_P, QuenchKind.RE) and self.p is None:
            raise ValueError(f"{kind.value} needs the parity operator")
        return lambda: _kick_dense(kind, X, self.A_e, self.p, self._products(X))

    def _products(self, X):
        # RE, IM and PLAIN_A kicks of one state share A X and A X A
        # single-entry cache keeps memory at a few d x d matrices
        key = id(X)
        if key not in self._memo:
            self._memo.clear()
            self._memo[key] = (X, _a_products(X, self.A_e, self._sectors))
        return self._memo[key][1]

    def kicked_pure(self, kind: QuenchKind, psi_e) -> Callable[[], np.ndarray]:
        if kind in (QuenchKind.PLAIN_P, QuenchKind.RE) and self.p is None:
            raise ValueError(f"{kind.value} needs the parity operator")
        return lambda: _kick_pure(kind, psi_e, self.A_e, self.p)

    def run(self, states: dict[str, Callable[[], np.ndarray]], times) -> dict[str, np.ndarray]:
        """Real quench series Q for each named kicked state."""
        try:
            raw = self.measurement.series(states, times)
        finally:
            self._memo.clear()
        return {k: _real_part(v, k) for k, v in raw.items()}


def quench_function(rho, kind: QuenchKind, A, B, times, basis: SpectralBasis, P=None) -> np.ndarray:
    """Q(rho, K, B(t)) = Tr(K rho K^dag B(t)) with K built from the unit part of A.

    B may be any Hermitian operator and enters with its scale; ``rho`` is a
    matrix in the computational basis or a vector of eigenframe weights.
    """
    frame = QuenchFrame(basis, split_scale(A)[0], B, P, unit_B=False)
    X = frame.state(rho)
    return frame.run({"q": frame.kicked(kind, X)}, times)["q"]


def im_correlator(rho, A, B, times, basis: SpectralBasis) -> np.ndarray:
    """Im C(A, B, t) = Q(rho, (I+iA)/sqrt2) - Q(rho, A)/2 - Q(rho, I)/2; any stationary rho."""
    frame = QuenchFrame(basis, A, B)
    X = frame.state(rho)
    q = frame.run({k.name: frame.kicked(k, X) for k in (QuenchKind.IM, QuenchKind.PLAIN_A, QuenchKind.IDENTITY)}, times)
    return frame.scale * (q["IM"] - 0.5 * q["PLAIN_A"] - 0.5 * q["IDENTITY"])


def re_correlator_parity(rho, P, A, B, times, basis: SpectralBasis, tol: float = 1e-10) -> np.ndarray:
    """Re C(PA, B, t) = Q(rho, (P+A)/sqrt2) - Q(rho, P)/2 - Q(rho, A)/2; needs [rho, P] = 0."""
    rho = np.asarray(rho)
    if rho.ndim == 2:
        Pd = _unit_dense(P)
        if np.max(np.abs(rho @ Pd - Pd @ rho)) > tol:
            raise ValueError("state does not commute with the parity operator")
    frame = QuenchFrame(basis, A, B, P)
    X = frame.state(rho)
    q = frame.run({k.name: frame.kicked(k, X) for k in (QuenchKind.RE, QuenchKind.PLAIN_P, QuenchKind.PLAIN_A)}, times)
    return frame.scale * (q["RE"] - 0.5 * q["PLAIN_P"] - 0.5 * q["PLAIN_A"])


def _check_protocol_ops(A, B, P):
    for op, name in ((A, "A"), (B, "B")):
        if not _anticommutes(op, P):
            raise ValueError(f"{name} must anticommute with the parity operator")


def eigenstate_correlator(
    psi, A, B, times, basis: SpectralBasis, P, parity: int | None = None,
    shots: ShotConfig | None = None, energy_tol: float = 1e-8,
) -> CorrelatorSeries:
    """C(A, B, t) = p Q(psi, (P+A)/sqrt2) + i Q(psi, (I+iA)/sqrt2) for a parity-p eigenstate.

    Under product-formula dynamics only definite parity is required, so the
    eigenstate check runs only against an exact eigensystem.
    """
    _check_protocol_ops(A, B, P)
    frame = QuenchFrame(basis, A, B, P)
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    psi_e = basis.basis.conj().T @ psi
    pop = np.abs(psi_e) ** 2
    p_val = float(np.sum(pop * frame.p))
    if abs(abs(p_val) - 1) > 1e-8:
        raise ValueError(f"state has no definite parity (<P> = {p_val:.3g})")
    if parity is not None and int(parity) != round(p_val):
        raise ValueError("declared parity disagrees with <P>")
    p = int(round(p_val))
    if isinstance(basis, EigenSystem):
        E = basis.energies
        mean = np.sum(pop * E)
        if np.sqrt(np.sum(pop * (E - mean) ** 2)) > energy_tol * max(1.0, np.max(np.abs(E))):
            raise ValueError("state is not an eigenstate of H")
    states = {"re": frame.kicked_pure(QuenchKind.RE, psi_e), "im": frame.kicked_pure(QuenchKind.IM, psi_e)}
    q = _apply_shots(frame.run(states, times), shots)
    values = frame.scale * (p * q["re"] + 1j * q["im"])
    return CorrelatorSeries(
        times, values, frame.scale, q,
        {"real": "parity * Q(psi, (P+A)/sqrt2, B(t))", "imag": "Q(psi, (I+iA)/sqrt2, B(t))"},
        parity=p,
    )


def trace_term(A, B, times, basis: SpectralBasis) -> np.ndarray:
    """Re Tr(A B(t)) = d Q((I+A)/d, I, B(t)) - Tr(B)."""
    frame = QuenchFrame(basis, A, B)
    q = frame.run({"trace": lambda: _trace_state(frame)}, times)["trace"]
    return frame.scale * (frame.dim * q - frame.measurement.trace.real)


def _trace_state(frame: QuenchFrame) -> np.ndarray:
    return (np.eye(frame.dim) + frame.A_e) / frame.dim


# ---------------------------------------------------------------- thermal


@dataclass
class PreparedStates:
    """Full, symmetric and asymmetric thermal states ready for quenching.

    Each entry is either a weight vector in the frame or a frame matrix; the
    matching computational-basis diagonals feed the parity measurement.
    """

    full: np.ndarray
    symmetric: np.ndarray
    asymmetric: np.ndarray
    diagonals: dict[str, np.ndarray]


def _log_normalized(logw):
    from scipy.special import logsumexp

    return np.exp(logw - logsumexp(logw))


def prepare_thermal_states(
    es: EigenSystem, beta: float, basis: SpectralBasis | None = None,
    epsilon: float = 0.0, noise: np.ndarray | None = None,
) -> PreparedStates:
    """rho_beta, rho_S, rho_A expressed in the frame of ``basis``.

    ``noise`` (with ``epsilon``) mixes the same random state into all three,
    (rho + epsilon * noise)/(1 + epsilon). It is given in the computational
    basis.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    basis = es if basis is None else basis
    weights = {
        "full": gibbs_weights(es.energies, beta),
        "symmetric": _log_normalized(sector_log_weights(es, beta, 1)),
        "asymmetric": _log_normalized(sector_log_weights(es, beta, -1)),
    }
    if beta == 0:
        # all three states are I/d; skip the rounding in |V|^2 w
        diagonals = {k: np.full(es.dim, 1.0 / es.dim) for k in weights}
    else:
        absV2 = np.abs(es.basis) ** 2
        diagonals = {k: absV2 @ w for k, w in weights.items()}
    noisy = epsilon and noise is not None
    if noisy:
        noise_diag = np.real(np.diagonal(noise))
        diagonals = {k: (v + epsilon * noise_diag) / (1 + epsilon) for k, v in diagonals.items()}
    if basis is es and not noisy:
        frames = weights
    else:
        noise_e = basis.to_eigenbasis(noise) if noisy else None
        frames = {}
        for k, w in weights.items():
            X = basis.to_eigenbasis(es.from_diagonal(w)) if basis is not es else np.diag(w).astype(complex)
            if noisy:
                X = (X + epsilon * noise_e) / (1 + epsilon)
            frames[k] = X
    return PreparedStates(frames["full"], frames["symmetric"], frames["asymmetric"], diagonals)


def _populations(diag: np.ndarray, p_diag: np.ndarray) -> ParityTrace:
    return ParityTrace(float(np.sum(diag[p_diag > 0])), float(np.sum(diag[p_diag < 0])))


def measure_sector_data(states: PreparedStates, P) -> SectorData:
    """Parity populations of the three prepared states, then the sector solve."""
    p_diag = P.diagonal() if isinstance(P, PauliString) else np.diagonal(_unit_dense(P))
    if p_diag is None or np.count_nonzero(_unit_dense(P) - np.diag(p_diag)):
        raise ValueError("parity operator must be diagonal in the computational basis")
    p_diag = np.real(p_diag)
    traces = [_populations(states.diagonals[k], p_diag) for k in ("full", "symmetric", "asymmetric")]
    return solve_sector_data(*traces, d=len(p_diag))


THERMAL_CHANNELS = ("im", "plain_a", "identity", "re_symmetric", "re_asymmetric", "trace")


def thermal_channels(frame: QuenchFrame, states: PreparedStates, times) -> dict[str, np.ndarray]:
    """The six unit quench series entering the finite-temperature reconstruction."""
    kick = frame.kicked
    plan = {
        "im": kick(QuenchKind.IM, states.full),
        "plain_a": kick(QuenchKind.PLAIN_A, states.full),
        "identity": kick(QuenchKind.IDENTITY, states.full),
        "re_symmetric": kick(QuenchKind.RE, states.symmetric),
        "re_asymmetric": kick(QuenchKind.RE, states.asymmetric),
        "trace": lambda: _trace_state(frame),
    }
    return frame.run(plan, times)


def assemble_thermal(channels: dict, sector: SectorData, trace_B: float, scale: float = 1.0) -> np.ndarray:
    """Combine unit channels into C(A, B, t) (times ``scale``)."""
    tr_AB = sector.d * channels["trace"] - trace_B
    re = (
        sector.coeff_symmetric * channels["re_symmetric"]
        - sector.coeff_asymmetric * channels["re_asymmetric"]
        + tr_AB / sector.Z
    )
    im = channels["im"] - 0.5 * channels["plain_a"] - 0.5 * channels["identity"]
    return scale * (re + 1j * im)


_THERMAL_PROVENANCE = {
    "real": "c_S Q(rho_S,(P+A)/sqrt2,M) - c_A Q(rho_A,(P+A)/sqrt2,M) + [d Q((I+A)/d,I,M) - Tr M]/Z",
    "imag": "Q(rho,(I+iA)/sqrt2,M) - Q(rho,A,M)/2 - Q(rho,I,M)/2",
}


def _thermal_run(frame, es, P, beta, times, epsilon, noise, shots) -> CorrelatorSeries:
    states = prepare_thermal_states(es, beta, frame.basis, epsilon, noise)
    sector = measure_sector_data(states, P)
    channels = _apply_shots(thermal_channels(frame, states, times), shots)
    values = assemble_thermal(channels, sector, frame.measurement.trace.real, frame.scale)
    return CorrelatorSeries(times, values, frame.scale, channels, dict(_THERMAL_PROVENANCE), sector)


def thermal_correlator(
    es: EigenSystem, P, beta: float, A, B, times, basis: SpectralBasis | None = None,
    epsilon: float = 0.0, noise: np.ndarray | None = None, shots: ShotConfig | None = None,
) -> CorrelatorSeries:
    """Tr(rho_beta A B(t)) from quenches of rho_beta, rho_S, rho_A and (I+A)/d.

    ``es`` supplies the (exact) thermal states; ``basis`` the dynamics, which
    defaults to ``es`` and may be a product-formula effective system.
    """
    _check_protocol_ops(A, B, P)
    basis = es if basis is None else basis
    frame = QuenchFrame(basis, A, B, P)
    return _thermal_run(frame, es, P, beta, check_times(basis, times), epsilon, noise, shots)


def otoc(
    es: EigenSystem, P, A, B, times, beta: float = np.inf, basis: SpectralBasis | None = None,
    sector=None, epsilon: float = 0.0, noise: np.ndarray | None = None,
    shots: ShotConfig | None = None, degenerate: str = "error",
) -> CorrelatorSeries:
    """Tr[rho A B(t) A B(t)] as the two-point function C(A, B(t) A B(t)).

    ``beta=np.inf`` uses the ground state (optionally of one parity sector).
    A must anticommute with P; the dressed measurement's anticommutation is
    asserted at every time point.
    """
    if np.isinf(beta):
        return ground_state_correlator(es, P, A, B, times, basis, sector, degenerate, epsilon, noise,
                                       shots, dressed=True)
    uA = split_scale(A)[0]
    if not _anticommutes(uA, P):
        raise ValueError("A must anticommute with the parity operator")
    basis = es if basis is None else basis
    times = check_times(basis, times)
    frame = QuenchFrame(basis, A, B, P, dressed=True)
    return _thermal_run(frame, es, P, beta, times, epsilon, noise, shots)


# ---------------------------------------------------------------- ground manifold


def ground_manifold(es: EigenSystem, sector=None, degenerate: str = "error", tol: float | None = None):
    """Indices, parity and energy of the lowest level (optionally inside one sector).

    A degenerate level raises unless ``degenerate="manifold"``, in which case
    the whole level is returned; it must then carry a single parity.
    """
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(es.energies))))
    idx = np.arange(es.dim) if sector is None else es.sector(_parity_label(sector))
    E = es.energies[idx]
    level = idx[E - E.min() < tol]
    if len(level) > 1:
        if degenerate != "manifold":
            where = "" if sector is None else " inside the chosen sector"
            raise ValueError(f"ground level is {len(level)}-fold degenerate{where}; "
                             "select a parity sector or the ground manifold")
        if len(set(es.parities[level])) > 1:
            raise ValueError("degenerate ground level mixes parities; select a sector")
    return level, int(es.parities[level[0]]), float(es.energies[level].mean())


def ground_state_correlator(
    es: EigenSystem, P, A, B, times, basis: SpectralBasis | None = None, sector=None,
    degenerate: str = "error", epsilon: float = 0.0, noise: np.ndarray | None = None,
    shots: ShotConfig | None = None, dressed: bool = False,
) -> CorrelatorSeries:
    """p Q(rho, (P+A)/sqrt2) + i Q(rho, (I+iA)/sqrt2) for the ground state or ground manifold.

    Every state of one level that shares parity p satisfies rho P = p rho, which
    is all the reconstruction needs, so an equal mixture over a degenerate
    level works as well as a single eigenvector. ``noise`` (computational
    basis) perturbs rho as (rho + epsilon * noise)/(1 + epsilon).
    """
    basis = es if basis is None else basis
    times = check_times(basis, times)
    if not dressed:
        _check_protocol_ops(A, B, P)
    elif not _anticommutes(A, P):
        raise ValueError("A must anticommute with the parity operator")
    frame = QuenchFrame(basis, A, B, P, dressed=dressed)
    level, p, _ = ground_manifold(es, sector, degenerate)
    noisy = bool(epsilon) and noise is not None
    if len(level) == 1 and not noisy:
        psi_e = basis.basis.conj().T @ es.basis[:, level[0]]
        states = {k: frame.kicked_pure(kind, psi_e) for k, kind in (("re", QuenchKind.RE), ("im", QuenchKind.IM))}
    else:
        w = np.zeros(es.dim)
        w[level] = 1.0 / len(level)
        if basis is es and not noisy:
            X = w
        else:
            X = basis.to_eigenbasis(es.from_diagonal(w)) if basis is not es else np.diag(w).astype(complex)
            if noisy:
                X = (X + epsilon * basis.to_eigenbasis(noise)) / (1 + epsilon)
        states = {k: frame.kicked(kind, X) for k, kind in (("re", QuenchKind.RE), ("im", QuenchKind.IM))}
    q = _apply_shots(frame.run(states, times), shots)
    meas = "M" if dressed else "B(t)"
    return CorrelatorSeries(
        times, frame.scale * (p * q["re"] + 1j * q["im"]), frame.scale, q,
        {"real": f"parity * Q(rho_0,(P+A)/sqrt2,{meas})", "imag": f"Q(rho_0,(I+iA)/sqrt2,{meas})"},
        parity=p,
    )


# ---------------------------------------------------------------- fermions


def fermionic_correlator(
    i: int, i_prime: int, es: EigenSystem, P, times, beta: float = np.inf,
    basis: SpectralBasis | None = None, sector=None, degenerate: str = "error",
) -> CorrelatorSeries:
    """C(c_i, c_{i'}^dag, t) from four Majorana-pair correlators.

    With c = (A + iB)/2: C = [C(A_i,A_i') + C(B_i,B_i') - i C(A_i,B_i') + i C(B_i,A_i')]/4.
    ``beta=np.inf`` selects the ground state.
    """
    n_modes = int(np.log2(es.dim))
    Ai, Bi = majorana_parts(i, n_modes)
    Aj, Bj = majorana_parts(i_prime, n_modes)
    basis = es if basis is None else basis
    times = check_times(basis, times)

    def corr(X, Y):
        X, Y = X.pauli, Y.pauli
        if np.isinf(beta):
            return ground_state_correlator(es, P, X, Y, times, basis, sector, degenerate).values
        return thermal_correlator(es, P, beta, X, Y, times, basis).values

    values = 0.25 * (corr(Ai, Aj) + corr(Bi, Bj) - 1j * corr(Ai, Bj) + 1j * corr(Bi, Aj))
    return CorrelatorSeries(times, values, 0.25, provenance={"decomposition": "majorana pairs"})
