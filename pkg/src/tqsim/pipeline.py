"""Experiment configuration, orchestration and artifact emission."""
from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import platform
import re
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .evolution import PropagatorSpec, SeriesEngine, propagation_basis
from .greens import GreensFunction, greens_from_series, lehmann_exact
from .models import build_model
from .music import (
    DEFAULT_GRID,
    MusicResult,
    Signal,
    frequency_grid,
    music,
    read_signal_csv,
    write_minima_json,
    write_R_csv,
)
from .operators import PauliString, ScaledObservable, majorana_parts
from .states import eigendecompose_with_parity, gibbs_weights, noise_state
from .tqs import (
    CorrelatorSeries,
    ShotConfig,
    ground_manifold,
    ground_state_correlator,
    otoc,
    split_scale,
    thermal_correlator,
)

PROTOCOLS = ("thermal_green", "ground_green", "otoc", "music_only")
CSV_FMT = "%.16e"
TOLERANCES = {
    "eigen_commute": 1e-10,
    "parity_resolution": 1e-8,
    "unitarity": 1e-9,
    "quench_imag_residue": 1e-10,
    "sector_agreement": 1e-9,
    "dressed_anticommute": 1e-10,
    "greens_merge": 1e-6,
}


class StageError(RuntimeError):
    """Failure inside one pipeline stage; the message starts with the stage tag."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


@contextlib.contextmanager
def _stage(name: str, timings: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


_NUM = re.compile(
    r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*(pi)?\s*(?:/\s*((?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?))?\s*$"
)


def parse_quantity(x) -> float:
    """Numbers or strings such as ``"50pi"``, ``"pi/20"``, ``"-pi/2"``, ``"0.5"``."""
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return float(x)
    if x is None or not isinstance(x, str):
        raise ValueError(f"cannot parse quantity {x!r}")
    s = x.strip().replace("π", "pi")
    sign = 1.0
    if s.startswith("-") and s[1:].lstrip().startswith("pi"):
        sign, s = -1.0, s[1:]
    m = _NUM.match(s)
    if not m or not (m.group(1) or m.group(2)):
        raise ValueError(f"cannot parse quantity {x!r}")
    val = float(m.group(1)) if m.group(1) else 1.0
    if m.group(2):
        val *= np.pi
    if m.group(3):
        val /= float(m.group(3))
    return sign * val


@dataclass
class ExperimentConfig:
    """One experiment; see ``docs/config.md`` in the repository for the schema."""

    protocol: str = "thermal_green"
    model: dict = field(default_factory=lambda: {"model": "xxz", "N": 4})
    beta: float | str = 1.0
    sector: int | str | None = None
    degenerate: str = "error"
    observables: dict = field(default_factory=lambda: {"A": "X0", "B": "X0"})
    time: dict = field(default_factory=lambda: {"t_max": "50pi", "dt": "pi/20"})
    evolution: dict = field(default_factory=lambda: {"method": "exact"})
    noise: dict | None = None
    shots: dict | None = None
    music: dict = field(default_factory=dict)
    seed: int = 0
    oracle: bool = True
    spectrum_weight_cut: float = 0.01
    delta_E: float | None = None
    signal_file: str | None = None
    output: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.degenerate not in ("error", "manifold"):
            raise ValueError("degenerate must be 'error' or 'manifold'")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, out=None, seed=None, evolution=None, noise_epsilon=None, shots=None):
        cfg = dataclasses.replace(self)
        if out is not None:
            cfg.output = str(out)
        if seed is not None:
            cfg.seed = int(seed)
        if evolution is not None:
            cfg.evolution = dict(self.evolution, method=evolution)
        if noise_epsilon is not None:
            cfg.noise = dict(self.noise or {}, epsilon=float(noise_epsilon))
        if shots is not None:
            cfg.shots = dict(self.shots or {}, shots=int(shots))
        return cfg

    # derived quantities

    @property
    def beta_value(self) -> float:
        if isinstance(self.beta, str) and self.beta.strip().lower() in ("inf", "infinity", "ground"):
            return np.inf
        return parse_quantity(self.beta)

    def time_grid(self) -> np.ndarray:
        """t_k = k dt for k = 1..round(t_max/dt)."""
        t_max = parse_quantity(self.time["t_max"])
        dt = parse_quantity(self.time["dt"])
        if not (t_max > 0 and dt > 0):
            raise ValueError("t_max and dt must be positive")
        n = int(round(t_max / dt))
        if n < 4:
            raise ValueError("time grid needs at least 4 points")
        return dt * np.arange(1, n + 1)

    def propagator(self) -> PropagatorSpec:
        method = self.evolution.get("method", "exact")
        if method == "exact":
            return PropagatorSpec("exact")
        step = self.evolution.get("dt", self.time["dt"])
        spec = PropagatorSpec(method, parse_quantity(step))
        ratio = parse_quantity(self.time["dt"]) / spec.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("the evaluation step must be an integer multiple of the product-formula step")
        return spec

    def music_options(self) -> dict:
        m = self.music
        window = [parse_quantity(w) for w in m.get("window", ["-pi/2", "pi/2"])]
        return {
            "grid_size": int(m.get("grid_size", DEFAULT_GRID)),
            "window": window,
            "threshold": float(m.get("threshold", 1.0)),
            "rank": m.get("rank"),
            "refine": bool(m.get("refine", False)),
        }


def parse_observable(spec, n_sites: int):
    """Observable from config.

    Accepted forms: a Pauli word (``"XIII"``, ``"-ZZII"``), a site form
    (``"X0"``, ``"Z2"``), ``{"pauli": ..., "scale": s}`` or
    ``{"majorana": j, "part": "A" | "B"}`` (scale 1/2, so part A of mode j is
    (c_j + c_j^dag)/2).
    """
    if isinstance(spec, dict):
        if "majorana" in spec:
            a, b = majorana_parts(int(spec["majorana"]), n_sites)
            part = spec.get("part", "A").upper()
            if part not in ("A", "B"):
                raise ValueError("majorana part must be 'A' or 'B'")
            return a if part == "A" else b
        p = parse_observable(spec["pauli"], n_sites)
        unit, scale = split_scale(p)
        return ScaledObservable(unit, scale * float(spec.get("scale", 1.0)))
    if not isinstance(spec, str):
        raise ValueError(f"cannot parse observable {spec!r}")
    m = re.fullmatch(r"\s*([+-]?)([XYZ])(\d+)\s*", spec, flags=re.I)
    if m:
        p = PauliString.single(m.group(2).upper(), int(m.group(3)), n_sites)
        return -p if m.group(1) == "-" else p
    p = PauliString.from_text(spec)
    if p.n_sites != n_sites:
        raise ValueError(f"observable {spec!r} acts on {p.n_sites} sites, model has {n_sites}")
    return p


@dataclass
class RunArtifacts:
    out_dir: Path | None
    files: dict[str, Path]
    provenance: dict
    timings: dict
    series: CorrelatorSeries | None = None
    music: MusicResult | None = None
    greens: GreensFunction | None = None
    oracle: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- helpers


def _seed_info(ss: np.random.SeedSequence) -> dict:
    return {"entropy": int(ss.entropy), "spawn_key": list(ss.spawn_key)}


def _seeds(cfg: ExperimentConfig):
    noise_ss, shot_ss = np.random.SeedSequence(int(cfg.seed)).spawn(2)
    if cfg.noise and cfg.noise.get("seed") is not None:
        noise_ss = np.random.SeedSequence(int(cfg.noise["seed"]))
    shot_seed = cfg.shots.get("seed") if cfg.shots else None
    if shot_seed is None:
        shot_seed = int(shot_ss.generate_state(1)[0])
    return noise_ss, int(shot_seed)


def _shots(cfg: ExperimentConfig, seed: int) -> ShotConfig | None:
    if not cfg.shots or cfg.shots.get("shots") is None:
        return None
    return ShotConfig(int(cfg.shots["shots"]), seed)


def _epsilon(cfg: ExperimentConfig) -> float:
    return float(cfg.noise.get("epsilon", 0.0)) if cfg.noise else 0.0


@dataclass
class _Setup:
    lh: object
    es: object
    basis: object
    spec: PropagatorSpec
    times: np.ndarray
    A: object
    B: object
    noise: np.ndarray | None
    epsilon: float
    shots: ShotConfig | None
    seeds: dict


def _setup(cfg: ExperimentConfig, timings: dict) -> _Setup:
    with _stage("config", timings):
        times = cfg.time_grid()
        spec = cfg.propagator()
    with _stage("model", timings):
        lh = build_model(cfg.model)
        A = parse_observable(cfg.observables["A"], lh.n_sites)
        B = parse_observable(cfg.observables.get("B", cfg.observables["A"]), lh.n_sites)
    with _stage("diagonalize", timings):
        es = eigendecompose_with_parity(lh.H, lh.P)
    with _stage("dynamics", timings):
        basis = propagation_basis(lh, spec, es)
        if cfg.delta_E:
            if times[-1] < 2 * np.pi * 5 / float(cfg.delta_E):
                warnings.warn("t_max is short compared with 10 pi / delta_E; small gaps may be unresolved")
    noise_ss, shot_seed = _seeds(cfg)
    eps = _epsilon(cfg)
    noise = None
    if eps:
        with _stage("noise", timings):
            noise = noise_state(lh.dim, noise_ss)
    seeds = {"master": int(cfg.seed), "noise": _seed_info(noise_ss), "shots": shot_seed}
    return _Setup(lh, es, basis, spec, times, A, B, noise, eps, _shots(cfg, shot_seed), seeds)


def _frame_state(setup: _Setup, weights: np.ndarray) -> np.ndarray:
    if setup.basis is setup.es:
        return weights
    return setup.basis.to_eigenbasis(setup.es.from_diagonal(weights))


def _two_point_oracle(setup: _Setup, weights: np.ndarray) -> np.ndarray:
    """Tr(rho A B(t)) by a direct eigenframe sum under the selected dynamics."""
    engine = SeriesEngine(setup.basis)
    (uA, sA), (uB, sB) = split_scale(setup.A), split_scale(setup.B)
    A_e, B_e = engine.to_eigenbasis(uA), engine.to_eigenbasis(uB)
    X = _frame_state(setup, weights)
    rhoA = X[:, None] * A_e if X.ndim == 1 else X @ A_e
    return sA * sB * engine.phase_sum(rhoA, B_e, setup.times)


def _otoc_oracle(setup: _Setup, weights: np.ndarray) -> np.ndarray:
    engine = SeriesEngine(setup.basis)
    (uA, sA), (uB, sB) = split_scale(setup.A), split_scale(setup.B)
    A_e, B_e = engine.to_eigenbasis(uA), engine.to_eigenbasis(uB)
    X = _frame_state(setup, weights)
    rhoA = X[:, None] * A_e if X.ndim == 1 else X @ A_e
    out = np.empty(len(setup.times), dtype=complex)
    for j, t in enumerate(setup.times):
        Bt = engine.heisenberg(B_e, t)
        out[j] = np.trace(rhoA @ Bt @ A_e @ Bt)
    return (sA * sB) ** 2 * out


def _ground_weights(setup: _Setup, cfg: ExperimentConfig) -> np.ndarray:
    level, _, _ = ground_manifold(setup.es, cfg.sector, cfg.degenerate)
    w = np.zeros(setup.es.dim)
    w[level] = 1.0 / len(level)
    return w


def _write_csv(path: Path, columns: dict[str, np.ndarray]) -> Path:
    data = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
    np.savetxt(path, data, fmt=CSV_FMT, delimiter=",", header=",".join(columns), comments="")
    return path


def _series_columns(series: CorrelatorSeries, oracle: np.ndarray | None, oracle_label: str) -> dict:
    cols = {"t": series.times, "re_C": series.values.real, "im_C": series.values.imag}
    for k in sorted(series.channels):
        cols[f"Q_{k}"] = series.channels[k]
    if oracle is not None:
        cols[f"{oracle_label}_re"] = oracle.real
        cols[f"{oracle_label}_im"] = oracle.imag
        cols["abs_deviation"] = np.abs(series.values - oracle)
    return cols


def _music_stage(cfg, series_values, timings):
    opts = cfg.music_options()
    with _stage("music", timings):
        omegas = frequency_grid(opts["grid_size"], opts["window"])
        return music(series_values, threshold=opts["threshold"], rank=opts["rank"],
                     omegas=omegas, refine=opts["refine"])


def _provenance(cfg: ExperimentConfig, setup: _Setup | None, extra: dict) -> dict:
    prov = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "versions": {
            "tqsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "tolerances": dict(TOLERANCES),
        "music": cfg.music_options(),
    }
    if setup is not None:
        prov.update({
            "seeds": setup.seeds,
            "dimension": int(setup.lh.dim),
            "hamiltonian": setup.lh.name,
            "rescale_factor": float(setup.lh.gamma),
            "n_layers": len(setup.lh.layers),
            "evolution": {"method": setup.spec.method, "dt": setup.spec.dt},
            "n_times": int(len(setup.times)),
            "noise_epsilon": setup.epsilon,
            "shots": None if setup.shots is None else int(setup.shots.shots),
        })
    prov.update(extra)
    return prov


def _finish(cfg, out_dir, files, prov, timings, **kwargs) -> RunArtifacts:
    if out_dir is not None:
        files["provenance"] = out_dir / "provenance.json"
        files["provenance"].write_text(json.dumps(prov, indent=2, sort_keys=True, default=_jsonable) + "\n")
        files["timing"] = out_dir / "timing.json"
        files["timing"].write_text(json.dumps({k: round(v, 3) for k, v in timings.items()}, indent=2) + "\n")
    return RunArtifacts(out_dir, files, prov, timings, **kwargs)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _out_dir(cfg: ExperimentConfig) -> Path | None:
    if cfg.output is None:
        return None
    p = Path(cfg.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit_music_and_greens(cfg, out_dir, files, series, timings, dt):
    res = _music_stage(cfg, series.values, timings)
    with _stage("greens", timings):
        gf = greens_from_series(series, res.estimates, dt=dt) if len(res.estimates) else GreensFunction([], [])
    if out_dir is not None:
        files["r_curve"] = out_dir / "r_curve.csv"
        write_R_csv(files["r_curve"], res.omegas, res.R)
        files["minima"] = out_dir / "minima.json"
        energies = [float(e) for e in -res.estimates.frequencies / dt]
        write_minima_json(files["minima"], res.estimates,
                          {"energies": energies, "retained_rank": res.noise.retained_rank, "dt": dt})
        files["greens"] = out_dir / "greens.json"
        gf.save(files["greens"])
    return res, gf


# ---------------------------------------------------------------- runs


def run_thermal_green(cfg: ExperimentConfig) -> RunArtifacts:
    """Finite-temperature correlator from quench channels, then MUSIC and pole fit."""
    timings: dict = {}
    out_dir = _out_dir(cfg)
    beta = cfg.beta_value
    if not np.isfinite(beta):
        raise StageError("config", ValueError("thermal_green needs a finite beta"))
    setup = _setup(cfg, timings)
    with _stage("quench", timings):
        series = thermal_correlator(setup.es, setup.lh.P, beta, setup.A, setup.B, setup.times,
                                    setup.basis, setup.epsilon, setup.noise, setup.shots)
    oracle = None
    label = "oracle" if setup.spec.method == "exact" else f"oracle_{setup.spec.method}"
    if cfg.oracle:
        with _stage("oracle", timings):
            oracle = _two_point_oracle(setup, gibbs_weights(setup.es.energies, beta))
    files = {}
    if out_dir is not None:
        files["correlator"] = _write_csv(out_dir / "correlator.csv", _series_columns(series, oracle, label))
    dt = float(setup.times[1] - setup.times[0])
    res, gf = _emit_music_and_greens(cfg, out_dir, files, series, timings, dt)
    extra = {"sector_data": series.sector.as_dict(), "provenance_channels": series.provenance}
    if oracle is not None:
        extra["max_oracle_deviation"] = float(np.max(np.abs(series.values - oracle)))
    prov = _provenance(cfg, setup, extra)
    return _finish(cfg, out_dir, files, prov, timings, series=series, music=res, greens=gf, oracle=oracle)


def spectrum_table(gaps: GreensFunction, minima_energies: np.ndarray, tol: float) -> list[dict]:
    rows = []
    for delta, w in zip(gaps.deltas, gaps.weights):
        if len(minima_energies):
            k = int(np.argmin(np.abs(minima_energies - delta)))
            near, dist = float(minima_energies[k]), float(abs(minima_energies[k] - delta))
        else:
            near, dist = None, None
        rows.append({"gap": float(delta), "weight": float(w.real), "nearest_minimum": near,
                     "distance": dist, "matched": bool(dist is not None and dist <= tol)})
    return rows


def run_ground_green(cfg: ExperimentConfig) -> RunArtifacts:
    """Ground-state correlator, MUSIC, and a gap-versus-minimum comparison table."""
    timings: dict = {}
    out_dir = _out_dir(cfg)
    setup = _setup(cfg, timings)
    with _stage("quench", timings):
        series = ground_state_correlator(setup.es, setup.lh.P, setup.A, setup.B, setup.times, setup.basis,
                                         cfg.sector, cfg.degenerate, setup.epsilon, setup.noise, setup.shots)
    w0 = _ground_weights(setup, cfg)
    oracle = None
    label = "oracle" if setup.spec.method == "exact" else f"oracle_{setup.spec.method}"
    if cfg.oracle:
        with _stage("oracle", timings):
            oracle = _two_point_oracle(setup, w0)
    files = {}
    if out_dir is not None:
        files["correlator"] = _write_csv(out_dir / "correlator.csv", _series_columns(series, oracle, label))
    dt = float(setup.times[1] - setup.times[0])
    res, gf = _emit_music_and_greens(cfg, out_dir, files, series, timings, dt)
    with _stage("spectrum", timings):
        exact = lehmann_exact(setup.es, w0, setup.A, setup.B).significant(cfg.spectrum_weight_cut)
        tol = 2 * np.pi / setup.times[-1]
        table = spectrum_table(exact, -res.estimates.frequencies / dt, tol)
    if out_dir is not None:
        files["spectrum"] = out_dir / "spectrum.json"
        files["spectrum"].write_text(json.dumps({"tolerance": tol, "gaps": table}, indent=2) + "\n")
    extra = {"parity": series.parity, "n_gaps": len(table), "all_gaps_matched": all(r["matched"] for r in table)}
    if oracle is not None:
        extra["max_oracle_deviation"] = float(np.max(np.abs(series.values - oracle)))
    prov = _provenance(cfg, setup, extra)
    return _finish(cfg, out_dir, files, prov, timings, series=series, music=res, greens=gf,
                   oracle=oracle, extra={"spectrum": table, "exact_poles": exact})


def run_otoc(cfg: ExperimentConfig) -> RunArtifacts:
    """Out-of-time-order correlator Tr[rho A B(t) A B(t)] through the dressed measurement."""
    timings: dict = {}
    out_dir = _out_dir(cfg)
    setup = _setup(cfg, timings)
    beta = cfg.beta_value
    with _stage("quench", timings):
        series = otoc(setup.es, setup.lh.P, setup.A, setup.B, setup.times, beta, setup.basis,
                      cfg.sector, setup.epsilon, setup.noise, setup.shots, cfg.degenerate)
    oracle = None
    label = "oracle" if setup.spec.method == "exact" else f"oracle_{setup.spec.method}"
    if cfg.oracle:
        with _stage("oracle", timings):
            w = _ground_weights(setup, cfg) if np.isinf(beta) else gibbs_weights(setup.es.energies, beta)
            oracle = _otoc_oracle(setup, w)
    files = {}
    if out_dir is not None:
        files["otoc"] = _write_csv(out_dir / "otoc.csv", _series_columns(series, oracle, label))
    extra = {}
    if series.sector is not None:
        extra["sector_data"] = series.sector.as_dict()
    if oracle is not None:
        extra["max_oracle_deviation"] = float(np.max(np.abs(series.values - oracle)))
    prov = _provenance(cfg, setup, extra)
    return _finish(cfg, out_dir, files, prov, timings, series=series, oracle=oracle)


def run_music_only(signal_file, cfg: ExperimentConfig | None = None) -> RunArtifacts:
    """MUSIC on an external ``index, real, imag`` CSV signal."""
    cfg = cfg or ExperimentConfig(protocol="music_only")
    timings: dict = {}
    out_dir = _out_dir(cfg)
    path = signal_file or cfg.signal_file
    with _stage("read_signal", timings):
        if path is None:
            raise ValueError("no signal file given")
        sig = read_signal_csv(path)
    res = _music_stage(cfg, sig, timings)
    files = {}
    if out_dir is not None:
        files["r_curve"] = out_dir / "r_curve.csv"
        write_R_csv(files["r_curve"], res.omegas, res.R)
        files["minima"] = out_dir / "minima.json"
        write_minima_json(files["minima"], res.estimates, {"retained_rank": res.noise.retained_rank})
    prov = _provenance(cfg, None, {"signal_file": str(path), "n_samples": len(sig.samples),
                                   "retained_rank": res.noise.retained_rank})
    return _finish(cfg, out_dir, files, prov, timings, music=res)


RUNNERS = {
    "thermal_green": run_thermal_green,
    "ground_green": run_ground_green,
    "otoc": run_otoc,
}


def run(cfg: ExperimentConfig) -> RunArtifacts:
    if cfg.protocol == "music_only":
        return run_music_only(cfg.signal_file, cfg)
    return RUNNERS[cfg.protocol](cfg)


__all__ = [
    "ExperimentConfig", "RunArtifacts", "StageError", "parse_quantity", "parse_observable",
    "run", "run_thermal_green", "run_ground_green", "run_otoc", "run_music_only", "Signal",
]
