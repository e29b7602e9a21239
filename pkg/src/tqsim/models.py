"""Benchmark Hamiltonians with parity symmetry and commuting-layer splits."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .operators import (
    PauliString,
    PauliSum,
    jw_pauli_sum,
    number_pauli_sum,
    parity_operator,
)


@dataclass(frozen=True)
class XXZParams:
    J_X: float = 1.0
    J_Z: float = 1.0
    h: float = 0.0
    N: int = 4
    periodic: bool = False

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("XXZ chain needs N >= 2")
        if self.periodic and self.N < 3:
            raise ValueError("periodic XXZ chain needs N >= 3")


@dataclass(frozen=True)
class FHParams:
    Lx: int = 2
    Ly: int = 3
    h_U: float = 1.0
    periodic: bool = False

    def __post_init__(self):
        if self.Lx < 1 or self.Ly < 1:
            raise ValueError("lattice extents must be positive")
        if self.periodic and (self.Lx == 2 or self.Ly == 2):
            raise ValueError("periodic wrap on an extent of 2 duplicates a bond")

    @property
    def n_modes(self) -> int:
        return 2 * self.Lx * self.Ly

    def mode(self, x: int, y: int, spin: int) -> int:
        """Spin-interleaved row-major label; 6x + 2y + spin on the 2x3 lattice."""
        return 2 * (self.Ly * x + y) + spin


@dataclass
class LayeredHamiltonian:
    """Dense H split into layers of mutually commuting generating terms.

    ``terms[k]`` lists the generating terms of ``layers[k]`` as Pauli sums;
    ``gamma`` accumulates every rescaling applied since construction.
    """

    H: np.ndarray
    layers: list[np.ndarray]
    P: PauliString
    terms: list[list[PauliSum]] = field(default_factory=list)
    gamma: float = 1.0
    name: str = ""

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_sites(self) -> int:
        return self.P.n_sites

    def spectral_norm(self) -> float:
        return spectral_norm(self.H)


def spectral_norm(H: np.ndarray) -> float:
    w = np.linalg.eigvalsh(H)
    return float(np.max(np.abs(w)))


def _assemble(layer_terms: list[list[PauliSum]], n_sites: int, name: str) -> LayeredHamiltonian:
    layer_terms = [ts for ts in layer_terms if ts]
    if not layer_terms:
        raise ValueError(f"{name} has no nonzero terms")
    layers = []
    for ts in layer_terms:
        total = PauliSum(n_sites=n_sites)
        for t in ts:
            total = total + t
        layers.append(total.chop().to_dense())
    H = layers[0].copy()
    for layer in layers[1:]:
        H = H + layer
    return LayeredHamiltonian(H, layers, parity_operator(n_sites), layer_terms, 1.0, name)


def _pauli(letters_at: dict[int, str], n: int) -> str:
    return "".join(letters_at.get(j, "I") for j in range(n))


def build_xxz(params: XXZParams) -> LayeredHamiltonian:
    """Open (default) or periodic XXZ chain with a longitudinal field.

    Layers: even-bond flip-flop terms, odd-bond flip-flop terms, and all
    Z-diagonal terms (ZZ couplings plus the field). A periodic chain of odd
    length gets its wrap bond in a layer of its own.
    """
    n = params.N
    bonds = [(j, j + 1) for j in range(n - 1)]
    if params.periodic:
        bonds.append((n - 1, 0))

    even, odd, wrap, diag = [], [], [], []
    for a, b in bonds:
        flip = PauliSum(
            {_pauli({a: "X", b: "X"}, n): params.J_X, _pauli({a: "Y", b: "Y"}, n): params.J_X}, n
        ).chop()
        if len(flip):
            if (a, b) == (n - 1, 0) and n % 2 == 1:
                wrap.append(flip)
            else:
                (even if a % 2 == 0 else odd).append(flip)
        if params.J_Z:
            diag.append(PauliSum({_pauli({a: "Z", b: "Z"}, n): params.J_Z}, n))
    if params.h:
        for j in range(n):
            diag.append(PauliSum({_pauli({j: "Z"}, n): params.h}, n))
    return _assemble([even, odd, wrap, diag], n, f"xxz(N={n})")


def _hopping(i: int, j: int, n: int) -> PauliSum:
    ci, cj = jw_pauli_sum(i, n), jw_pauli_sum(j, n)
    term = ci.dagger() * cj
    return (-1.0 * (term + term.dagger())).chop()


def fermi_hubbard_bonds(params: FHParams) -> dict[str, list[tuple[int, int]]]:
    """Lattice bonds grouped so bonds inside one group share no site."""
    groups: dict[str, list[tuple[int, int]]] = {
        "y_even": [], "y_odd": [], "y_wrap": [], "x_even": [], "x_odd": [], "x_wrap": []
    }
    Lx, Ly = params.Lx, params.Ly
    for x in range(Lx):
        for y in range(Ly - 1):
            groups["y_even" if y % 2 == 0 else "y_odd"].append(((x, y), (x, y + 1)))
        if params.periodic and Ly > 2:
            key = "y_wrap" if Ly % 2 else "y_odd"
            groups[key].append(((x, Ly - 1), (x, 0)))
    for y in range(Ly):
        for x in range(Lx - 1):
            groups["x_even" if x % 2 == 0 else "x_odd"].append(((x, y), (x + 1, y)))
        if params.periodic and Lx > 2:
            key = "x_wrap" if Lx % 2 else "x_odd"
            groups[key].append(((Lx - 1, y), (0, y)))
    return groups


def build_fermi_hubbard(params: FHParams) -> LayeredHamiltonian:
    """Spinful Fermi-Hubbard model mapped to qubits by Jordan-Wigner.

    H = -sum_<ij>,s (c+_is c_js + h.c.) + h_U sum_i n_i,up n_i,down.
    On the 2x3 lattice the layers are the y-bonds 0->1, the y-bonds 1->2,
    the x-bonds, and the interaction.
    """
    n = params.n_modes
    layer_terms = []
    for _, bonds in fermi_hubbard_bonds(params).items():
        terms = []
        for (x0, y0), (x1, y1) in bonds:
            for s in (0, 1):
                terms.append(_hopping(params.mode(x0, y0, s), params.mode(x1, y1, s), n))
        layer_terms.append(terms)
    interaction = []
    if params.h_U:
        for site in range(params.Lx * params.Ly):
            nu = number_pauli_sum(2 * site, n)
            nd = number_pauli_sum(2 * site + 1, n)
            interaction.append((params.h_U * (nu * nd)).chop())
    layer_terms.append(interaction)
    return _assemble(layer_terms, n, f"fermi_hubbard({params.Lx}x{params.Ly})")


def rescale_to_norm(lh: LayeredHamiltonian, target_norm: float = np.pi) -> LayeredHamiltonian:
    """Scale H and every layer so that ||H||_2 equals ``target_norm``."""
    norm = lh.spectral_norm()
    if norm == 0:
        raise ValueError("cannot rescale the zero operator")
    g = target_norm / norm
    return replace(
        lh,
        H=g * lh.H,
        layers=[g * layer for layer in lh.layers],
        terms=[[g * t for t in ts] for ts in lh.terms],
        gamma=lh.gamma * g,
    )


def build_model(block: dict) -> LayeredHamiltonian:
    """Build from a config block ``{"model": "xxz"|"fermi_hubbard", ..., "rescale_norm": x}``."""
    block = dict(block)
    kind = block.pop("model")
    rescale = block.pop("rescale_norm", None)
    if kind == "xxz":
        lh = build_xxz(XXZParams(**block))
    elif kind == "fermi_hubbard":
        lh = build_fermi_hubbard(FHParams(**block))
    else:
        raise ValueError(f"unknown model {kind!r}")
    if rescale is not None:
        lh = rescale_to_norm(lh, float(rescale))
    return lh
