"""Pauli-string algebra, Jordan-Wigner fermions and parity operators.

Basis convention: each qubit is ordered |0>, |1>, and site 0 is the leftmost
Kronecker factor (most significant bit of the basis index).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

_LETTERS = "IXYZ"
_PHASES = (1, 1j, -1, -1j)

# product table for single-site Paulis: (a, b) -> (phase, a*b)
_SITE_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


def _as_phase(value) -> complex:
    value = complex(value)
    for p in _PHASES:
        if abs(value - p) < 1e-12:
            return complex(p)
    raise ValueError(f"phase must be a fourth root of unity, got {value}")


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(x) & 1).astype(np.int64)


@dataclass(frozen=True)
class PauliString:
    """A phase times a tensor product of single-site Paulis.

    >>> PauliString("XY", 1j)
    PauliString('iXY')
    """

    letters: str
    phase: complex = 1

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or any(c not in _LETTERS for c in letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "phase", _as_phase(self.phase))

    @classmethod
    def from_text(cls, text: str) -> "PauliString":
        """Parse ``"ZZXI"``, ``"-XY"``, ``"iZ"``, ``"-iXX"`` or ``"+ZZ"``."""
        s = text.strip()
        for prefix, phase in (("-i", -1j), ("+i", 1j), ("i", 1j), ("-", -1), ("+", 1)):
            if s.startswith(prefix):
                return cls(s[len(prefix):], phase)
        return cls(s, 1)

    @classmethod
    def single(cls, letter: str, site: int, n_sites: int) -> "PauliString":
        if not 0 <= site < n_sites:
            raise IndexError(f"site {site} out of range for {n_sites} sites")
        return cls("I" * site + letter + "I" * (n_sites - site - 1))

    @property
    def n_sites(self) -> int:
        return len(self.letters)

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    def __str__(self):
        prefix = {1: "", -1: "-", 1j: "i", -1j: "-i"}[self.phase]
        return prefix + self.letters

    def __repr__(self):
        return f"PauliString({str(self)!r})"

    def __mul__(self, other):
        if isinstance(other, PauliString):
            if other.n_sites != self.n_sites:
                raise ValueError("Pauli strings act on different numbers of sites")
            phase = self.phase * other.phase
            out = []
            for a, b in zip(self.letters, other.letters):
                p, c = _SITE_PRODUCT[a, b]
                phase *= p
                out.append(c)
            return PauliString("".join(out), phase)
        return NotImplemented

    def __neg__(self):
        return PauliString(self.letters, -self.phase)

    @property
    def is_hermitian(self) -> bool:
        return self.phase.imag == 0

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    def dagger(self) -> "PauliString":
        return PauliString(self.letters, self.phase.conjugate())

    def commutes_with(self, other: "PauliString") -> bool:
        clashes = sum(
            a != "I" and b != "I" and a != b for a, b in zip(self.letters, other.letters)
        )
        return clashes % 2 == 0

    @cached_property
    def _masks(self):
        n = self.n_sites
        x_mask = z_mask = 0
        for j, c in enumerate(self.letters):
            bit = 1 << (n - 1 - j)
            if c in "XY":
                x_mask |= bit
            if c in "YZ":
                z_mask |= bit
        return x_mask, z_mask

    @cached_property
    def _action(self):
        # P|x> = vals[x] |x ^ x_mask>
        x_mask, z_mask = self._masks
        cols = np.arange(self.dim, dtype=np.int64)
        n_y = self.letters.count("Y")
        signs = 1 - 2 * _popcount_parity(cols & z_mask)
        vals = self.phase * (1j ** n_y) * signs
        return cols ^ x_mask, vals

    def to_dense(self, real_if_possible: bool = False) -> np.ndarray:
        rows, vals = self._action
        if real_if_possible and not np.any(vals.imag):
            vals = vals.real
        out = np.zeros((self.dim, self.dim), dtype=vals.dtype)
        out[rows, np.arange(self.dim)] = vals
        return out

    def diagonal(self) -> np.ndarray | None:
        """Diagonal of the dense form if the string is diagonal, else None."""
        if self._masks[0]:
            return None
        return self._action[1].copy()

    def apply(self, m: np.ndarray) -> np.ndarray:
        """Return ``dense(self) @ m`` in O(d * cols)."""
        rows, vals = self._action
        perm = np.arange(self.dim) ^ self._masks[0]
        m = np.asarray(m)
        src = vals[perm]
        if m.ndim == 1:
            return src * m[perm]
        return src[:, None] * m[perm]

    def apply_right(self, m: np.ndarray) -> np.ndarray:
        """Return ``m @ dense(self)``."""
        rows, vals = self._action
        return np.asarray(m)[:, rows] * vals[None, :]


def pauli_to_dense(p: PauliString | str) -> np.ndarray:
    if isinstance(p, str):
        p = PauliString.from_text(p)
    return p.to_dense()


class PauliSum:
    """Linear combination of unit Pauli words, keyed by letter string.

    Only what the model builders need: addition, scalar and operator
    products, adjoint and dense realization.
    """

    def __init__(self, terms: Mapping[str, complex] | None = None, n_sites: int | None = None):
        self.terms: dict[str, complex] = {}
        self.n_sites = n_sites
        for letters, coeff in (terms or {}).items():
            self._add(letters, coeff)

    @classmethod
    def from_pauli(cls, p: PauliString, coeff: complex = 1.0) -> "PauliSum":
        return cls({p.letters: coeff * p.phase}, p.n_sites)

    @classmethod
    def identity(cls, n_sites: int, coeff: complex = 1.0) -> "PauliSum":
        return cls({"I" * n_sites: coeff}, n_sites)

    def _add(self, letters: str, coeff: complex):
        if self.n_sites is None:
            self.n_sites = len(letters)
        elif len(letters) != self.n_sites:
            raise ValueError("mismatched number of sites")
        c = self.terms.get(letters, 0) + coeff
        if c == 0:
            self.terms.pop(letters, None)
        else:
            self.terms[letters] = c

    def copy(self) -> "PauliSum":
        out = PauliSum(n_sites=self.n_sites)
        out.terms = dict(self.terms)
        return out

    def __add__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        out = self.copy()
        for letters, c in other.terms.items():
            out._add(letters, c)
        return out

    def __sub__(self, other):
        return self + (-1) * other

    def __rmul__(self, scalar):
        return self.__mul__(scalar)

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            out = PauliSum(n_sites=self.n_sites)
            for la, ca in self.terms.items():
                for lb, cb in other.terms.items():
                    prod = PauliString(la) * PauliString(lb)
                    out._add(prod.letters, ca * cb * prod.phase)
            return out
        if np.isscalar(other):
            out = PauliSum(n_sites=self.n_sites)
            for letters, c in self.terms.items():
                out._add(letters, c * other)
            return out
        return NotImplemented

    def dagger(self) -> "PauliSum":
        return PauliSum({k: np.conj(v) for k, v in self.terms.items()}, self.n_sites)

    def chop(self, tol: float = 1e-14) -> "PauliSum":
        return PauliSum({k: v for k, v in self.terms.items() if abs(v) > tol}, self.n_sites)

    def paulis(self) -> list[tuple[complex, PauliString]]:
        return [(c, PauliString(k)) for k, c in self.terms.items()]

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        body = " + ".join(f"({c:.6g}){k}" for k, c in self.terms.items())
        return f"PauliSum({body or '0'})"

    def to_dense(self, real_if_possible: bool = True) -> np.ndarray:
        """Dense matrix; real dtype when every entry has zero imaginary part."""
        if self.n_sites is None:
            raise ValueError("empty PauliSum without a site count")
        d = 1 << self.n_sites
        out = np.zeros((d, d), dtype=complex)
        cols = np.arange(d)
        for letters, c in self.terms.items():
            rows, vals = PauliString(letters)._action
            out[rows, cols] += c * vals
        if real_if_possible and not np.any(out.imag):
            return out.real.copy()
        return out


@dataclass(frozen=True)
class ScaledObservable:
    """A real scale times a Hermitian unit Pauli word (so ``dense**2 == I``)."""

    pauli: PauliString
    scale: float = 1.0

    def __post_init__(self):
        if not self.pauli.is_hermitian:
            raise ValueError(f"{self.pauli} is not Hermitian")
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def n_sites(self) -> int:
        return self.pauli.n_sites

    def unit_dense(self) -> np.ndarray:
        return self.pauli.to_dense()

    def dense(self) -> np.ndarray:
        return self.scale * self.pauli.to_dense()


def parity_operator(n_sites: int) -> PauliString:
    """The all-Z word, P = prod_j Z_j."""
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    return PauliString("Z" * n_sites)


def majorana_parts(j: int, n_modes: int) -> tuple[ScaledObservable, ScaledObservable]:
    """Split c_j = (A_j + i B_j)/2 into its two Jordan-Wigner Pauli words.

    A_j = Z...Z X_j and B_j = Z...Z Y_j, each carrying scale 1/2.
    """
    if not 0 <= j < n_modes:
        raise IndexError(f"mode {j} out of range for {n_modes} modes")
    tail = "I" * (n_modes - j - 1)
    a = PauliString("Z" * j + "X" + tail)
    b = PauliString("Z" * j + "Y" + tail)
    return ScaledObservable(a, 0.5), ScaledObservable(b, 0.5)


def jw_pauli_sum(j: int, n_modes: int, dagger: bool = False) -> PauliSum:
    a, b = majorana_parts(j, n_modes)
    sign = -1 if dagger else 1
    return PauliSum({a.pauli.letters: 0.5, b.pauli.letters: 0.5j * sign}, n_modes)


def jw_annihilation(j: int, n_modes: int) -> np.ndarray:
    """Dense c_j = (prod_{k<j} Z_k) sigma^-_j with sigma^- = (X + iY)/2 = |0><1|."""
    a, b = majorana_parts(j, n_modes)
    return 0.5 * (a.pauli.to_dense() + 1j * b.pauli.to_dense())


def number_pauli_sum(j: int, n_modes: int) -> PauliSum:
    """n_j = c_j^dag c_j, which is (I - Z_j)/2 for sigma^- = |0><1|."""
    return (jw_pauli_sum(j, n_modes, dagger=True) * jw_pauli_sum(j, n_modes)).chop()


def as_dense(op) -> np.ndarray:
    if isinstance(op, PauliString):
        return op.to_dense()
    if isinstance(op, ScaledObservable):
        return op.dense()
    if isinstance(op, PauliSum):
        return op.to_dense()
    return np.asarray(op)


def _check_pair(a, b):
    a, b = as_dense(a), as_dense(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def commutes(a, b, tol: float = 1e-12) -> bool:
    a, b = _check_pair(a, b)
    return bool(np.max(np.abs(a @ b - b @ a), initial=0.0) <= tol)


def anticommutes(a, b, tol: float = 1e-12) -> bool:
    a, b = _check_pair(a, b)
    return bool(np.max(np.abs(a @ b + b @ a), initial=0.0) <= tol)


def parity_sectors(p) -> tuple[np.ndarray, np.ndarray] | None:
    """Index sets of the +1 and -1 computational states if ``p`` is a diagonal involution."""
    if isinstance(p, PauliString):
        diag = p.diagonal()
    else:
        p = np.asarray(p)
        diag = np.diagonal(p).copy()
        if np.count_nonzero(p - np.diag(diag)):
            return None
    if diag is None or not np.all((diag == 1) | (diag == -1)):
        return None
    diag = diag.real
    return np.flatnonzero(diag > 0), np.flatnonzero(diag < 0)


def pauli_words(n_sites: int) -> Iterable[PauliString]:
    """All 4**n unit words, in lexicographic IXYZ order."""
    from itertools import product

    for letters in product(_LETTERS, repeat=n_sites):
        yield PauliString("".join(letters))
