"""Command-line entry points: optimize, sweep, oracle, variance, validate.

Settings come from built-in defaults, then an optional TOML file
(``--config``), then command-line flags. Exit codes: 0 success, 2 invalid
configuration, 3 non-convergence, 4 I/O failure; ``validate`` exits 1 when
a check fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import statevector as sv
from .circuit import build_circuit
from .ed_oracle import (
    ScfConfig,
    build_hamiltonian,
    hmft_best,
    hmft_reference,
    lowest_eigenpair,
    self_consistent_hmft,
)
from .hamiltonian import ModelParams
from .lattice import build_cluster
from .objective import Objective
from .optimizer import GRADIENT_MODES, OptimizerConfig, multi_start, random_parameters
from .seeding import derive_rng
from .sweep import (
    FAILED,
    PARAMAGNET_NONCONVERGED,
    THRESHOLDS,
    SweepConfig,
    _neel_start,
    detect_transitions,
    envelope,
    run_sweep,
    variance_study,
    write_records_csv,
)

log = logging.getLogger("qhmft")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3, 4
COMMANDS = ("optimize", "sweep", "oracle", "variance", "validate")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str = "optimize"
    l: list[int] | None = None
    m: int = 2
    tied: bool | None = None
    j1: float = 1.0
    j2: list[float] | None = None
    j2_range: list[float] | None = None
    step: float = 0.01
    directions: str = "both"
    restarts: int = 10
    seed: int = 0
    grad_mode: str = "adjoint"
    fd_delta: float = 1e-6
    max_iterations: int = 2000
    gtol: float = 1e-7
    ftol: float = 1e-12
    threads: int = 1
    out_dir: str = "qhmft_out"
    samples: int = 100
    width: float = float(np.pi)
    scale: str = "cluster"
    scf_tolerance: float = 1e-10
    scf_max_iterations: int = 500
    damping: float = 0.7
    resume: bool = True
    verbose: int = 0
    thresholds: dict = field(default_factory=dict)

    # -- derived views, each raising ConfigError with the offending key --

    @property
    def L(self) -> int:
        Ls = self.lattice_sizes
        if len(Ls) != 1:
            raise ConfigError("l", f"{self.command} takes a single cluster size, got {Ls}")
        return Ls[0]

    @property
    def lattice_sizes(self) -> list[int]:
        if self.l is not None:
            return list(self.l)
        return [2, 4] if self.command == "variance" else [2]

    @property
    def tied_flag(self) -> bool:
        return (self.L == 2) if self.tied is None else bool(self.tied)

    def grid(self) -> np.ndarray:
        lo, hi = self.j2_range if self.j2_range is not None else (0.0, 1.0)
        return SweepConfig(j2_min=lo, j2_max=hi, step=self.step).grid()

    def optimizer(self) -> OptimizerConfig:
        mode = {"fd": "fd_central"}.get(self.grad_mode, self.grad_mode)
        return OptimizerConfig(
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gtol,
            energy_tolerance=self.ftol,
            gradient_mode=mode,
            fd_delta=self.fd_delta,
        )

    def scf(self) -> ScfConfig:
        return ScfConfig(self.scf_tolerance, self.scf_max_iterations, self.damping, "neel", self.seed)

    def sweep(self) -> SweepConfig:
        lo, hi = self.j2_range if self.j2_range is not None else (0.0, 1.0)
        return SweepConfig(
            j2_min=lo, j2_max=hi, step=self.step, directions=self.directions,
            extreme_restarts=self.restarts, seed=self.seed, L=self.L, m=self.m, tied=self.tied_flag,
            J1=self.j1, optimizer=self.optimizer(), threads=self.threads,
        )

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        for L in self.lattice_sizes:
            if isinstance(L, bool) or not isinstance(L, int) or L < 2 or L % 2:
                raise ConfigError("l", f"cluster size must be an even integer >= 2, got {L!r}")
            if L > 6:
                raise ConfigError("l", f"cluster size {L} exceeds the statevector limit (N <= 36)")
        if self.m < 1:
            raise ConfigError("m", "number of macro-layers must be >= 1")
        if self.tied and any(L != 2 for L in self.lattice_sizes):
            raise ConfigError("tied", "tied parameters are defined for L=2 only")
        if not self.j1 > 0:
            raise ConfigError("j1", "J1 must be positive")
        if self.j2 is not None:
            if not self.j2:
                raise ConfigError("j2", "empty J2 list")
            if any(v < 0 for v in self.j2):
                raise ConfigError("j2", "J2 must be non-negative")
        if self.j2_range is not None:
            if len(self.j2_range) != 2:
                raise ConfigError("j2_range", "expected two values MIN MAX")
            lo, hi = self.j2_range
            if lo < 0:
                raise ConfigError("j2_range", "J2 must be non-negative")
            if lo > hi:
                raise ConfigError("j2_range", f"empty grid: min {lo} exceeds max {hi}")
        if not self.step > 0:
            raise ConfigError("step", "step must be positive")
        if self.directions not in ("up", "down", "both"):
            raise ConfigError("directions", "expected up, down or both")
        if self.restarts < 1:
            raise ConfigError("restarts", "need at least one start")
        if self.grad_mode not in GRADIENT_MODES + ("fd",):
            raise ConfigError("grad_mode", f"expected one of {GRADIENT_MODES + ('fd',)}")
        if not self.fd_delta > 0:
            raise ConfigError("fd_delta", "finite-difference step must be positive")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations", "must be >= 0")
        if not (self.gtol > 0 and self.ftol > 0):
            raise ConfigError("gtol" if not self.gtol > 0 else "ftol", "tolerance must be positive")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if self.samples < 2:
            raise ConfigError("samples", "variance needs at least 2 samples")
        if not self.width >= 0:
            raise ConfigError("width", "must be non-negative")
        if self.scale not in ("cluster", "spin"):
            raise ConfigError("scale", "expected cluster or spin")
        if not self.scf_tolerance > 0:
            raise ConfigError("scf_tolerance", "must be positive")
        if self.scf_max_iterations < 1:
            raise ConfigError("scf_max_iterations", "must be >= 1")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping", "must lie in (0, 1]")
        unknown = set(self.thresholds) - set(THRESHOLDS)
        if unknown:
            raise ConfigError("thresholds", f"unknown threshold(s) {sorted(unknown)}")
        if self.command == "optimize":
            if self.j2 is None or len(self.j2) != 1:
                raise ConfigError("j2", "optimize needs exactly one --j2 value")
        if self.command in ("optimize", "sweep", "oracle"):
            _ = self.L
        if self.command == "oracle" and self.L > 4:
            raise ConfigError("l", "the oracle is limited to L <= 4")

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}
_LIST_KEYS = {"l": int, "j2": float, "j2_range": float}


def _coerce(key: str, value):
    f = _FIELD_TYPES.get(key)
    if f is None or key == "command":
        raise ConfigError(key, "unknown configuration key")
    default = f.default if f.default is not field else None
    try:
        if key in _LIST_KEYS:
            items = value if isinstance(value, list) else [value]
            return [_LIST_KEYS[key](v) for v in items]
        if key == "thresholds":
            if not isinstance(value, dict):
                raise TypeError("expected a table")
            return {k: float(v) for k, v in value.items()}
        if key == "tied" or isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"invalid value {value!r} ({exc})") from None


def load_config_file(path) -> dict:
    """Flat ``key = value`` TOML; keys may use dashes or underscores, tables other than thresholds are flattened."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    out = {}

    def put(k, v):
        k = k.replace("-", "_")
        out[k] = _coerce(k, v)

    for k, v in raw.items():
        if isinstance(v, dict) and k.replace("-", "_") != "thresholds":
            for kk, vv in v.items():
                put(kk, vv)
        else:
            put(k, v)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhmft", description="Circuit-embedded cluster mean-field runs for the J1-J2 model.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS  # unset flags stay absent so the config file can supply them
    common.add_argument("--config", default=None, help="TOML file with run settings")
    common.add_argument("--l", type=int, nargs="+", default=S, help="cluster side length(s)")
    common.add_argument("--m", type=int, default=S, help="macro-layers")
    common.add_argument("--tied", action=argparse.BooleanOptionalAction, default=S, help="share angles within each gate family (L=2)")
    common.add_argument("--j1", type=float, default=S)
    common.add_argument("--j2", type=float, nargs="+", default=S, help="coupling value(s)")
    common.add_argument("--j2-range", type=float, nargs=2, metavar=("MIN", "MAX"), default=S)
    common.add_argument("--step", type=float, default=S, help="J2 grid spacing")
    common.add_argument("--directions", choices=("up", "down", "both"), default=S)
    common.add_argument("--restarts", type=int, default=S, help="random starts at chain ends / single points")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--grad-mode", choices=GRADIENT_MODES + ("fd",), default=S)
    common.add_argument("--fd-delta", type=float, default=S)
    common.add_argument("--max-iterations", type=int, default=S)
    common.add_argument("--gtol", type=float, default=S)
    common.add_argument("--threads", type=int, default=S)
    common.add_argument("--out-dir", default=S)
    common.add_argument("--samples", type=int, default=S, help="variance: random parameter draws")
    common.add_argument("--scale", choices=("cluster", "spin"), default=S, help="variance: differentiate N*E or E")
    common.add_argument("--damping", type=float, default=S, help="oracle: SCF damping factor")
    common.add_argument("--resume", action=argparse.BooleanOptionalAction, default=S, help="sweep: reuse checkpoints")
    common.add_argument("-v", "--verbose", action="count", default=S)
    helps = {
        "optimize": "single-point multi-start optimization",
        "sweep": "warm-started J2 sweep with transition detection",
        "oracle": "exact-diagonalization HMFT reference sweep",
        "variance": "gradient variance over random parameters",
        "validate": "built-in invariant checks",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    path = args.pop("config", None)
    values = load_config_file(path) if path else {}
    values.update({k: (_coerce(k, v) if k in _LIST_KEYS else v) for k, v in args.items()})
    cfg = RunConfig(command=command, **values)
    cfg.validate()
    return cfg


# -- output helpers ----------------------------------------------------------------


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


class Outputs:
    """Tracks files written for the final stdout listing."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.paths.append(p)
        return p

    def json(self, name: str, payload) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(payload), fh, indent=2)
            fh.write("\n")

    def metadata(self, cfg: RunConfig, **extra) -> None:
        self.json("metadata.json", {
            "command": cfg.command,
            "version": _version(),
            "config": cfg.to_dict(),
            "thresholds": {**THRESHOLDS, **cfg.thresholds},
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            **extra,
        })

    def report(self) -> None:
        for p in self.paths:
            print(p)


# -- commands --------------------------------------------------------------------


def cmd_optimize(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    L, j2 = cfg.L, cfg.j2[0]
    obj = Objective(build_cluster(L), ModelParams(cfg.j1, j2), build_circuit(L, cfg.m, cfg.tied_flag))

    def observer(x):
        o = obj.order_parameters(x)
        return {"m_neel": o.m_neel, "m_caf": o.m_caf, "d_x": o.d_x, "d_y": o.d_y}

    ms = multi_start(obj, cfg.restarts, cfg.seed, cfg.optimizer(), observer=observer,
                     extra_starts=[_neel_start(obj.n_params, cfg.seed)], threads=cfg.threads,
                     purpose="optimize")
    best = ms.best
    report = obj.energy(best.x)
    order = obj.order_parameters(best.x)
    out = Outputs(cfg.out_dir)
    best.trace.write_csv(out.path("trace.csv"))
    out.json("result.json", {
        "j2": j2,
        "energy": report.e_total,
        "e_intra": report.e_intra,
        "e_mf": report.e_mf,
        "dE_dJ2": obj.dE_dJ2(best.x),
        "mean_fields": report.mean_fields,
        "order_parameters": order.as_dict(),
        "status": best.status,
        "iterations": best.trace.iterations,
        "grad_max": float(np.max(np.abs(best.grad))),
        "seed": ms.best_seed,
        "start_energies": {str(s): r.fun for s, r in zip(ms.seeds, ms.results)},
        "params": best.x,
    })
    out.metadata(cfg, wall_time=time.perf_counter() - t0, n_params=obj.n_params)
    log.info("J2=%g E=%.12f status=%s", j2, report.e_total, best.status)
    out.report()
    return EXIT_OK if best.converged else EXIT_NONCONVERGED


def _checkpoint_dir(cfg: RunConfig, sweep_cfg: SweepConfig) -> Path:
    ckpt = Path(cfg.out_dir) / "checkpoints"
    stamp = ckpt / "sweep_config.json"
    current = _jsonable({k: v for k, v in sweep_cfg.to_dict().items() if k != "threads"})
    if not cfg.resume and ckpt.exists():
        shutil.rmtree(ckpt)
    if stamp.exists():
        saved = json.loads(stamp.read_text())
        if saved != current:
            diff = sorted(k for k in set(saved) | set(current) if saved.get(k) != current.get(k))
            raise ConfigError(diff[0], f"differs from the checkpoints in {ckpt}; use --no-resume or another --out-dir")
    ckpt.mkdir(parents=True, exist_ok=True)
    stamp.write_text(json.dumps(current, indent=2))
    return ckpt


def _write_sweep_outputs(out: Outputs, cfg: RunConfig, records, name: str) -> dict:
    write_records_csv(records, out.path(f"{name}.csv"))
    if len({r.direction for r in records}) > 1:
        write_records_csv(envelope(records), out.path(f"{name}_envelope.csv"))
    report = None
    if len({r.j2 for r in records}) >= 3:
        report = detect_transitions(records, cfg.thresholds)
        out.json("transitions.json", report.to_dict())
    return report.to_dict() if report else {}


def cmd_sweep(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    sweep_cfg = cfg.sweep()
    ckpt = _checkpoint_dir(cfg, sweep_cfg)
    params: dict = {}
    records = run_sweep(sweep_cfg, checkpoint_dir=ckpt, params_out=params)
    out = Outputs(cfg.out_dir)
    out.paths.append(ckpt)
    report = _write_sweep_outputs(out, cfg, records, "records")
    ok = all(r.status in ("converged", PARAMAGNET_NONCONVERGED) for r in records)
    out.metadata(cfg, sweep=sweep_cfg.to_dict(), wall_time=time.perf_counter() - t0,
                 n_points=len(records), all_converged=ok)
    for t in report.get("transitions", []):
        log.info("transition: %s at J2=%.3f (%s)", t["kind"], t["location"], t["signal"])
    out.report()
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_oracle(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    grid = cfg.grid()
    records = hmft_reference(build_cluster(cfg.L), grid, cfg.scf(), cfg.j1)
    out = Outputs(cfg.out_dir)
    report = _write_sweep_outputs(out, cfg, records, "oracle")
    ok = all(r.status == "converged" for r in records)
    out.metadata(cfg, scf=asdict(cfg.scf()), wall_time=time.perf_counter() - t0, all_converged=ok)
    for t in report.get("transitions", []):
        log.info("transition: %s at J2=%.3f", t["kind"], t["location"])
    out.report()
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_variance(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    j2_list = cfg.j2 if cfg.j2 is not None else [0.0, 0.5, 1.0]
    rows = []
    for L in cfg.lattice_sizes:
        tied = (L == 2) if cfg.tied is None else cfg.tied
        rows += variance_study(L, cfg.m, j2_list, cfg.samples, cfg.seed, cfg.width, tied, cfg.j1,
                               cfg.scale, cfg.threads)
    out = Outputs(cfg.out_dir)
    with open(out.path("variance.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(asdict(rows[0])))
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
    out.metadata(cfg, wall_time=time.perf_counter() - t0)
    for r in rows:
        log.info("N=%d J2=%g Var=%.4g", r.N, r.j2, r.variance)
    out.report()
    return EXIT_OK


# -- validation suite --------------------------------------------------------------
# Each check takes the master seed and returns (passed, detail). The gate
# kernels are looked up on the statevector module at call time, so a patched
# kernel is what gets checked.


def _check_singlet(seed: int):
    basis = sv.sector_basis(2, 1)
    state = sv.SectorState(basis, np.zeros(len(basis), complex))
    state.amplitudes[basis.index_of(0b10)] = 1.0  # |01>: site 0 up, site 1 down
    sv.apply_xy(state, 0, 1, np.pi / 2)
    target = np.zeros(len(basis), complex)
    target[basis.index_of(0b10)] = 1 / np.sqrt(2)
    target[basis.index_of(0b01)] = -1 / np.sqrt(2)
    err = float(np.max(np.abs(state.amplitudes - target)))
    return err <= 1e-12, f"max deviation {err:.1e}"


def _check_gate_identities(seed: int):
    rng = derive_rng(seed, "validate", "identities")
    psi = sv.random_state(sv.sector_basis(6, 3), rng)
    ref = psi.amplitudes.copy()
    worst = 0.0
    for _ in range(20):
        i, j = (int(v) for v in rng.choice(6, 2, replace=False))
        t = float(rng.uniform(-np.pi, np.pi))
        sv.apply_xy(sv.apply_xy(psi, i, j, t), i, j, -t)
        sv.apply_zz(sv.apply_zz(psi, i, j, t), i, j, -t)
        sv.apply_z(sv.apply_z(psi, j, t), j, -t)
        worst = max(worst, float(np.max(np.abs(psi.amplitudes - ref))))
    sv.apply_xy(psi, 0, 1, 0.0)
    worst = max(worst, float(np.max(np.abs(psi.amplitudes - ref))))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def _check_norm(seed: int):
    rng = derive_rng(seed, "validate", "norm")
    N = 8
    psi = sv.random_state(sv.sector_basis(N, N // 2), rng)
    for _ in range(1000):
        kind = rng.integers(3)
        i, j = (int(v) for v in rng.choice(N, 2, replace=False))
        t = float(rng.uniform(-2 * np.pi, 2 * np.pi))
        if kind == 0:
            sv.apply_xy(psi, i, j, t)
        elif kind == 1:
            sv.apply_zz(psi, i, j, t)
        else:
            sv.apply_z(psi, j, t)
    err = abs(psi.norm() - 1.0)
    full = np.abs(sv.full_space_reference(psi)) ** 2
    weight = np.array([bin(s).count("1") for s in range(1 << N)])
    leak = float(full[weight != N // 2].sum())
    return err <= 1e-12 and leak <= 1e-12, f"norm error {err:.1e}, weight outside sector {leak:.1e}"


def _check_gradients(seed: int):
    worst = 0.0
    for L, m, tied in ((2, 2, False), (2, 2, True), (4, 1, False)):
        obj = Objective(build_cluster(L), ModelParams(1.0, 0.55), build_circuit(L, m, tied))
        x = random_parameters(obj.n_params, derive_rng(seed, "validate", "gradient", L, m))
        ga = obj.gradient_adjoint(x)
        gf = obj.gradient_fd(x, "central", 1e-6)
        worst = max(worst, float(np.max(np.abs(ga - gf)) / max(np.max(np.abs(gf)), 1e-12)))
    return worst <= 1e-5, f"max relative deviation {worst:.1e}"


def _full_space_operator(N: int, terms) -> np.ndarray:
    """Dense ``2**N`` matrix of ``sum coef * A_i B_j`` from Kronecker products; bit j is site j."""
    ops = {
        "x": np.array([[0, 0.5], [0.5, 0]], complex),
        "y": np.array([[0, -0.5j], [0.5j, 0]]),
        "z": np.array([[0.5, 0], [0, -0.5]], complex),
    }
    H = np.zeros((1 << N, 1 << N), complex)
    for coef, factors in terms:
        mats = [np.eye(2, dtype=complex)] * N
        for axis, site in factors:
            mats[site] = mats[site] @ ops[axis]
        out = np.ones((1, 1), complex)
        for mat in reversed(mats):  # highest site is the most significant bit
            out = np.kron(out, mat)
        H += coef * out
    return H


def _check_oracle_duality(seed: int):
    g = build_cluster(2)
    model = ModelParams(1.0, 0.3)
    res = self_consistent_hmft(g, model, ScfConfig(seed=seed))
    N = g.N
    fields = np.zeros(N)
    for b in g.boundary_bonds:
        c = float(b.weight) * model.coupling(b.range)
        fields[b.i] += c * res.fields[b.j]
        fields[b.j] += c * res.fields[b.i]
    h_intra = _full_space_operator(N, [
        (model.coupling(b.range), [(a, b.i), (a, b.j)]) for b in g.intra_bonds for a in "xyz"
    ])
    h_field = _full_space_operator(N, [(fields[j], [("z", j)]) for j in range(N)])
    sector = np.array([bin(s).count("1") for s in range(1 << N)]) == N // 2
    block = np.ix_(sector, sector)
    w, v = np.linalg.eigh((h_intra + h_field)[block])
    vec = v[:, 0]
    e_mf = sum(float(b.weight) * model.coupling(b.range) * res.fields[b.i] * res.fields[b.j]
               for b in g.boundary_bonds)
    e_full = (float(np.real(vec.conj() @ h_intra[block] @ vec)) + e_mf) / N
    d_energy = abs(e_full - res.energy)
    d_eig = abs(w[0] - res.eigenvalue)
    _, vec2 = lowest_eigenpair(build_hamiltonian(g, model, res.fields))
    d_fix = float(np.max(np.abs(np.abs(vec2) ** 2 @ sv.sector_basis(N, N // 2).sz - res.fields)))
    ok = res.converged and max(d_energy, d_eig, d_fix) <= 1e-10
    return ok, f"energy {d_energy:.1e}, eigenvalue {d_eig:.1e}, fixed point {d_fix:.1e}"


def _check_tied_equivalence(seed: int):
    g = build_cluster(2)
    worst = 0.0
    for j2 in (0.0, 1.0):
        obj = Objective(g, ModelParams(1.0, j2), build_circuit(2, 2, True))
        ms = multi_start(obj, 4, seed, purpose="validate")
        worst = max(worst, abs(ms.best.fun - hmft_best(g, ModelParams(1.0, j2)).energy))
    return worst <= 1e-6, f"max |dE| {worst:.1e}"


def _check_counting(seed: int):
    s4, s2 = build_circuit(4, 2), build_circuit(2, 2, True)
    got = (s4.n_params, s4.depth, s2.n_params, s2.depth)
    return got == (128, 18, 12, 10), f"L=4 m=2: n={got[0]} d={got[1]}; L=2 tied m=2: n={got[2]} d={got[3]}"


VALIDATION_CHECKS = [
    ("xy_singlet", _check_singlet),
    ("gate_identities", _check_gate_identities),
    ("sector_closure_norm", _check_norm),
    ("adjoint_vs_fd", _check_gradients),
    ("oracle_duality", _check_oracle_duality),
    ("tied_2x2_equals_oracle", _check_tied_equivalence),
    ("parameter_counting", _check_counting),
]


def run_validation(seed: int = 0) -> list[tuple[str, bool, str]]:
    rows = []
    for name, check in VALIDATION_CHECKS:
        try:
            ok, detail = check(seed)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail))
    return rows


def cmd_validate(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    rows = run_validation(cfg.seed)
    width = max(len(n) for n, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    out = Outputs(cfg.out_dir)
    out.json("validation.json", [{"check": n, "passed": ok, "detail": d} for n, ok, d in rows])
    out.metadata(cfg, wall_time=time.perf_counter() - t0)
    passed = all(ok for _, ok, _ in rows)
    if passed:
        out.report()
    return EXIT_OK if passed else EXIT_VALIDATION


HANDLERS = {
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "variance": cmd_variance,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:  # argparse usage errors already exit with 2
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    level = logging.WARNING - 10 * min(cfg.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
