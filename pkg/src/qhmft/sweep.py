"""Phase-diagram sweeps over J2: warm-start chains, transition detection, gradient variance."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .circuit import build_circuit
from .hamiltonian import ModelParams
from .lattice import build_cluster
from .objective import Objective
from .optimizer import (
    CONVERGED,
    MinimizeResult,
    NonFiniteObjectiveError,
    OptimizerConfig,
    minimize,
    multi_start,
    random_parameters,
)
from .seeding import derive_rng

log = logging.getLogger(__name__)

PARAMAGNET_NONCONVERGED = "paramagnet_nonconverged"
FAILED = "failed"
UP, DOWN, ENVELOPE = "up", "down", "envelope"

# detection / classification thresholds, echoed into run metadata
THRESHOLDS = {
    "order_jump": 0.05,
    "derivative_jump": 0.1,
    "vanishing": 1e-3,
    "ordered": 0.05,
    "dimer_min": 0.01,
    "dimer_rel_diff": 0.2,
    "hysteresis_energy": 1e-5,
    "hysteresis_split": 1e-2,
}


@dataclass(frozen=True)
class SweepConfig:
    j2_min: float = 0.0
    j2_max: float = 1.0
    step: float = 0.01
    directions: str = "both"
    extreme_restarts: int = 10
    warm_kick: float = 0.05
    seed: int = 0
    L: int = 2
    m: int = 2
    tied: bool = True
    J1: float = 1.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.j2_min <= self.j2_max:
            raise ValueError(f"j2_min must not exceed j2_max ({self.j2_min} > {self.j2_max})")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.directions not in ("up", "down", "both"):
            raise ValueError(f"directions must be up, down or both, got {self.directions!r}")
        if self.extreme_restarts < 1:
            raise ValueError("extreme_restarts must be >= 1")
        if self.warm_kick < 0:
            raise ValueError("warm_kick must be non-negative")

    def grid(self) -> np.ndarray:
        n = int(round((self.j2_max - self.j2_min) / self.step))
        return np.round(self.j2_min + self.step * np.arange(n + 1), 10)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"] = asdict(self.optimizer)
        return d


@dataclass
class SweepRecord:
    j2: float
    energy: float
    dE_dJ2: float
    dE_dJ2_grid: float
    m_neel: float
    m_caf_x: float
    m_caf_y: float
    d_x: float
    d_y: float
    iterations: int
    status: str
    direction: str
    seed: int

    @property
    def m_caf(self) -> float:
        return max(self.m_caf_x, self.m_caf_y)


RECORD_FIELDS = [f.name for f in fields(SweepRecord)]


def write_records_csv(records: Iterable[SweepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in RECORD_FIELDS])


def read_records_csv(path) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                kw[k] = int(v) if t == "int" else v if t == "str" else float(v)
            out.append(SweepRecord(**kw))
    return out


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# -- sweep -----------------------------------------------------------------------


def _status(result: MinimizeResult, objective: Objective) -> str:
    if result.converged:
        return CONVERGED
    op = objective.order_parameters(result.x)
    if max(op.m_neel, op.m_caf) < THRESHOLDS["ordered"]:
        return PARAMAGNET_NONCONVERGED
    return result.status


def _record(objective: Objective, j2: float, result: MinimizeResult, direction: str, seed: int) -> SweepRecord:
    op = objective.order_parameters(result.x)
    return SweepRecord(
        j2=float(j2),
        energy=float(result.fun),
        dE_dJ2=objective.dE_dJ2(result.x),
        dE_dJ2_grid=float("nan"),
        m_neel=op.m_neel,
        m_caf_x=op.m_caf_x,
        m_caf_y=op.m_caf_y,
        d_x=op.d_x,
        d_y=op.d_y,
        iterations=result.trace.iterations,
        status=_status(result, objective),
        direction=direction,
        seed=seed,
    )


def fill_grid_derivative(records: list[SweepRecord]) -> None:
    """Finite-difference dE/dJ2 along a chain (records sorted by j2)."""
    if len(records) < 2:
        for r in records:
            r.dE_dJ2_grid = r.dE_dJ2
        return
    j2 = np.array([r.j2 for r in records])
    e = np.array([r.energy for r in records])
    for r, d in zip(records, np.gradient(e, j2)):
        r.dE_dJ2_grid = float(d)


def _checkpoint_path(directory, direction: str, j2: float) -> Path:
    return Path(directory) / f"{direction}_{j2:.6f}.json"


def _save_checkpoint(directory, record: SweepRecord, params: np.ndarray) -> None:
    path = _checkpoint_path(directory, record.direction, record.j2)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({"record": asdict(record), "params": [float(p) for p in params]}))
    os.replace(tmp, path)


def _load_checkpoint(directory, direction: str, j2: float):
    path = _checkpoint_path(directory, direction, j2)
    if not path.exists():
        return None
    data = json.loads(path.read_text())
    return SweepRecord(**data["record"]), np.array(data["params"])


def _neel_start(n_params: int, seed: int) -> np.ndarray:
    # near-zero angles: a slightly perturbed Neel product state
    return random_parameters(n_params, derive_rng(seed, "neel_start"), width=0.1)


def _warm_step(obj: Objective, x: np.ndarray, config: SweepConfig, direction: str, idx: int) -> MinimizeResult:
    """Optimize from the previous optimum and from a slightly kicked copy; keep the lower.

    A symmetric saddle (e.g. the paramagnet inside an ordered phase) has an
    exactly vanishing symmetry-breaking gradient, so a plain warm start never
    leaves it. A genuine local minimum survives the small kick, which keeps
    real hysteresis intact.
    """
    result = minimize(obj, x, config.optimizer)
    if config.warm_kick <= 0:
        return result
    kick = random_parameters(x.size, derive_rng(config.seed, "warm_kick", direction, idx), config.warm_kick)
    kicked = minimize(obj, x + kick, config.optimizer)
    if kicked.fun < result.fun - 1e-12:
        kicked.trace.n_evaluations += result.trace.n_evaluations
        return kicked
    return result


def run_chain(
    config: SweepConfig,
    direction: str,
    base: Objective | None = None,
    checkpoint_dir=None,
    params_out: dict | None = None,
) -> list[SweepRecord]:
    """One warm-started chain; the first point is chosen by multi-start."""
    grid = config.grid()
    ordered = grid if direction == UP else grid[::-1]
    if base is None:
        base = Objective(build_cluster(config.L), ModelParams(config.J1, 0.0), build_circuit(config.L, config.m, config.tied))
    records: list[SweepRecord] = []
    x = None
    for idx, j2 in enumerate(ordered):
        if checkpoint_dir is not None:
            hit = _load_checkpoint(checkpoint_dir, direction, j2)
            if hit is not None:
                rec, x = hit
                records.append(rec)
                if params_out is not None:
                    params_out[(direction, float(j2))] = x
                continue
        obj = base.with_model(ModelParams(config.J1, float(j2)))
        if x is None:
            ms = multi_start(
                obj,
                config.extreme_restarts,
                config.seed,
                config.optimizer,
                extra_starts=[_neel_start(obj.n_params, config.seed)],
                threads=config.threads,
                purpose=f"extreme_{direction}",
            )
            result, seed = ms.best, ms.best_seed
        else:
            try:
                result = _warm_step(obj, x, config, direction, idx)
            except NonFiniteObjectiveError as exc:
                log.warning("point J2=%g failed: %s", j2, exc)
                records.append(SweepRecord(float(j2), *[float("nan")] * 8, 0, FAILED, direction, -1))
                continue
            seed = records[-1].seed if records else -1
        x = result.x
        rec = _record(obj, j2, result, direction, seed)
        records.append(rec)
        if params_out is not None:
            params_out[(direction, float(j2))] = x
        if checkpoint_dir is not None:
            _save_checkpoint(checkpoint_dir, rec, x)
        log.info("%s J2=%.3f E=%.10f status=%s it=%d", direction, j2, rec.energy, rec.status, rec.iterations)
    records.sort(key=lambda r: r.j2)
    good = [r for r in records if r.status != FAILED]
    fill_grid_derivative(good)
    return records


def run_sweep(config: SweepConfig, checkpoint_dir=None, params_out: dict | None = None) -> list[SweepRecord]:
    """Warm-start chains in the configured directions, records in grid order per direction."""
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    base = Objective(build_cluster(config.L), ModelParams(config.J1, 0.0), build_circuit(config.L, config.m, config.tied))
    directions = [UP, DOWN] if config.directions == "both" else [config.directions]
    if config.threads > 1 and len(directions) > 1:
        # each chain runs its own multi-start serially so the pool stays within the cap
        chain_cfg = replace(config, threads=max(1, config.threads // len(directions)))
        with ThreadPoolExecutor(len(directions)) as pool:
            chains = list(pool.map(lambda d: run_chain(chain_cfg, d, base, checkpoint_dir, params_out), directions))
    else:
        chains = [run_chain(config, d, base, checkpoint_dir, params_out) for d in directions]
    return [r for chain in chains for r in chain]


def envelope(records: Sequence[SweepRecord]) -> list[SweepRecord]:
    """Lowest-energy record per J2 across directions, with the grid derivative recomputed."""
    best: dict[float, SweepRecord] = {}
    for r in records:
        if r.status == FAILED:
            continue
        cur = best.get(r.j2)
        if cur is None or r.energy < cur.energy:
            best[r.j2] = r
    out = [SweepRecord(**{**asdict(r), "direction": ENVELOPE}) for _, r in sorted(best.items())]
    fill_grid_derivative(out)
    return out


# -- transitions -------------------------------------------------------------------


@dataclass
class Transition:
    location: float
    kind: str
    signal: str
    j2_left: float
    j2_right: float
    direction: str


@dataclass
class TransitionReport:
    transitions: list[Transition]
    by_direction: dict[str, list[Transition]] = field(default_factory=dict)
    hysteresis: list[dict] = field(default_factory=list)
    thresholds: dict = field(default_factory=lambda: dict(THRESHOLDS))

    def of_kind(self, kind: str) -> list[Transition]:
        return [t for t in self.transitions if t.kind == kind]

    def to_dict(self) -> dict:
        return {
            "transitions": [asdict(t) for t in self.transitions],
            "by_direction": {k: [asdict(t) for t in v] for k, v in self.by_direction.items()},
            "hysteresis": self.hysteresis,
            "thresholds": self.thresholds,
        }


def _sqrt_continuation(j2: np.ndarray, op: np.ndarray, a: int, b: int, tol: float) -> bool:
    """Whether the change from point ``a`` to ``b`` continues a square-root law.

    Near a continuous transition ``op**2`` is linear in J2. It is extrapolated
    from ``a`` and its neighbour on the far side to ``b``; the step is smooth
    when the prediction (clipped at zero) matches ``op[b]`` within ``tol``.
    """
    c = a - (b - a)
    if not 0 <= c < len(op):
        return False
    m_a2, m_c2 = op[a] ** 2, op[c] ** 2
    if m_c2 <= m_a2:
        return False
    pred = m_a2 + (m_a2 - m_c2) * (j2[b] - j2[a]) / (j2[a] - j2[c])
    return abs(np.sqrt(max(pred, 0.0)) - op[b]) <= tol


def _was_ordered(op: np.ndarray, hi: int, lo: int, th: dict) -> bool:
    """Whether the non-vanishing run ending at ``hi`` (walking away from ``lo``) reaches the ordered threshold.

    Keeps residual values of an order parameter that never developed from
    registering as a continuous transition when they dip below ``vanishing``.
    """
    step = hi - lo
    k = hi
    while 0 <= k < len(op) and op[k] >= th["vanishing"]:
        if op[k] > th["ordered"]:
            return True
        k += step
    return False


def _detect_branch(records: Sequence[SweepRecord], direction: str, th: dict) -> list[Transition]:
    recs = sorted((r for r in records if r.status != FAILED), key=lambda r: r.j2)
    j2 = np.array([r.j2 for r in recs])
    ops = {
        "m_neel": np.array([r.m_neel for r in recs]),
        "m_caf": np.array([r.m_caf for r in recs]),
    }
    dgrid = np.array([r.dE_dJ2_grid for r in recs])
    flagged: list[tuple[int, str, float]] = []  # (pair index, signal, strength)
    continuous: list[Transition] = []
    for k in range(len(recs) - 1):
        signals = []
        strength = 0.0
        for name, op in ops.items():
            jump = abs(op[k + 1] - op[k])
            lo_side = k + 1 if op[k + 1] < op[k] else k
            hi_side = k if lo_side == k + 1 else k + 1
            vanishes = op[lo_side] < th["vanishing"]
            smooth = _sqrt_continuation(j2, op, hi_side, lo_side, th["order_jump"])
            if jump > th["order_jump"] and not smooth:
                signals.append(f"{name} jump {jump:.3f}")
                strength = max(strength, jump)
            elif vanishes and op[hi_side] >= th["vanishing"] and _was_ordered(op, hi_side, lo_side, th):
                continuous.append(Transition(float(j2[lo_side]), "continuous", f"{name} vanishes",
                                             float(j2[k]), float(j2[k + 1]), direction))
        djump = abs(dgrid[k + 1] - dgrid[k])
        if np.isfinite(djump) and djump > th["derivative_jump"]:
            signals.append(f"dE/dJ2 jump {djump:.3f}")
        if signals:
            flagged.append((k, "; ".join(signals), strength))

    # adjacent flagged pairs describe one event (a kink smears over two central differences)
    events: list[list[tuple[int, str, float]]] = []
    for item in flagged:
        if events and item[0] - events[-1][-1][0] <= 1:
            events[-1].append(item)
        else:
            events.append([item])
    first: list[Transition] = []
    for ev in events:
        k, _, strength = max(ev, key=lambda t: t[2])
        if strength > 0:
            loc = float(0.5 * (j2[k] + j2[k + 1]))
        else:
            loc = float(0.5 * (j2[ev[0][0]] + j2[ev[-1][0] + 1]))
        first.append(Transition(loc, "first_order", " | ".join(s for _, s, _ in ev),
                                float(j2[ev[0][0]]), float(j2[ev[-1][0] + 1]), direction))
    # a vanishing that coincides with a first-order event is part of it
    kept = [c for c in continuous if not any(f.j2_left - 1e-12 <= c.location <= f.j2_right + 1e-12 for f in first)]
    return sorted(first + kept, key=lambda t: t.location)


def _hysteresis(records: Sequence[SweepRecord], primary: list[Transition], by_dir: dict, th: dict) -> list[dict]:
    """Direction dependence around each first-order transition of the primary curve.

    The ascending chain switches at its nearest first-order event at or above
    the transition, the descending chain at its nearest one at or below it; a
    chain that never switches leaves the window open up to the grid edge. The
    window is then widened over neighbouring grid points where the two chains
    still sit on different branches: energies differ by more than
    ``th["hysteresis_split"]``, or by more than ``th["hysteresis_energy"]``
    with some order parameter differing by more than ``th["order_jump"]``.
    """
    up_r = {round(r.j2, 9): r for r in records if r.direction == UP and r.status != FAILED}
    down_r = {round(r.j2, 9): r for r in records if r.direction == DOWN and r.status != FAILED}
    grid = sorted(set(up_r) & set(down_r))
    if not grid:
        return []
    split = {g: abs(up_r[g].energy - down_r[g].energy) for g in grid}

    def distinct(g) -> bool:
        # the chains sit in different states, not just differently converged copies of one
        a, b = up_r[g], down_r[g]
        dop = max(abs(a.m_neel - b.m_neel), abs(a.m_caf - b.m_caf), abs(a.d_x - b.d_x), abs(a.d_y - b.d_y))
        return split[g] > th["hysteresis_split"] or (split[g] > th["hysteresis_energy"] and dop > th["order_jump"])

    out = []
    for t in primary:
        if t.kind != "first_order":
            continue
        ups = [u.location for u in by_dir[UP] if u.kind == "first_order" and u.location >= t.j2_left - 1e-9]
        downs = [u.location for u in by_dir[DOWN] if u.kind == "first_order" and u.location <= t.j2_right + 1e-9]
        up_at = min(ups) if ups else None
        down_at = max(downs) if downs else None
        lo = min(t.j2_left, down_at if down_at is not None else grid[0])
        hi = max(t.j2_right, up_at if up_at is not None else grid[-1])
        i_lo = next(i for i, g in enumerate(grid) if g >= lo - 1e-9)
        i_hi = max(i for i, g in enumerate(grid) if g <= hi + 1e-9)
        while i_lo > 0 and distinct(grid[i_lo - 1]):
            i_lo -= 1
        while i_hi < len(grid) - 1 and distinct(grid[i_hi + 1]):
            i_hi += 1
        inside = grid[i_lo:i_hi + 1]
        out.append({"transition": t.location, "up": up_at, "down": down_at, "window": [inside[0], inside[-1]],
                    "open": up_at is None or down_at is None, "max_energy_split": max(split[g] for g in inside)})
    return out


def detect_transitions(records: Sequence[SweepRecord], thresholds: dict | None = None) -> TransitionReport:
    """Locate and classify transitions.

    With several directions the lower-energy envelope is analysed as the
    primary curve and each chain separately; where the chains switch phase
    at different J2 around a first-order transition, the span is reported as
    a hysteresis window.
    """
    th = {**THRESHOLDS, **(thresholds or {})}
    directions = sorted({r.direction for r in records})
    if len({r.j2 for r in records}) < 3:
        raise ValueError("transition detection needs at least 3 grid points")
    by_dir = {d: _detect_branch([r for r in records if r.direction == d], d, th) for d in directions}
    if len(directions) > 1:
        primary = _detect_branch(envelope(records), ENVELOPE, th)
    else:
        primary = by_dir[directions[0]]
    hysteresis = _hysteresis(records, primary, by_dir, th) if UP in by_dir and DOWN in by_dir else []
    return TransitionReport(primary, by_dir, hysteresis, th)


def classify_phase(record: SweepRecord, thresholds: dict | None = None) -> str:
    th = {**THRESHOLDS, **(thresholds or {})}
    neel, caf = record.m_neel, record.m_caf
    if neel > th["ordered"] and neel >= caf:
        return "neel"
    if caf > th["ordered"] and caf > neel:
        return "caf"
    dx, dy = record.d_x, record.d_y
    if (
        max(neel, caf) < th["vanishing"]
        and min(abs(dx), abs(dy)) > th["dimer_min"]
        and abs(dx - dy) / max(abs(dx), abs(dy)) < th["dimer_rel_diff"]
    ):
        return "plaquette_vbs"
    return "undetermined"


# -- gradient variance ---------------------------------------------------------------


@dataclass
class VarianceRecord:
    L: int
    N: int
    m: int
    j2: float
    variance: float
    mean: float
    n_samples: int
    scale: str = "cluster"


def variance_study(
    L: int,
    m: int,
    j2_list: Sequence[float] = (0.0, 0.5, 1.0),
    n_samples: int = 100,
    seed: int = 0,
    width: float = np.pi,
    tied: bool | None = None,
    J1: float = 1.0,
    scale: str = "cluster",
    threads: int = 1,
) -> list[VarianceRecord]:
    """Sample variance of the gradient component of the first parameter of the first macro-layer.

    Parameters are drawn uniformly on ``(-width, width]``; the same draws are
    used for every J2. ``scale="cluster"`` differentiates the embedded cluster
    energy ``N * E``, ``scale="spin"`` the energy per spin. ``tied`` defaults
    to the shared-angle circuit for L=2 and independent angles otherwise.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if scale not in ("cluster", "spin"):
        raise ValueError(f"scale must be 'cluster' or 'spin', got {scale!r}")
    if tied is None:
        tied = L == 2
    base = Objective(build_cluster(L), ModelParams(J1, 0.0), build_circuit(L, m, tied))
    factor = float(L * L) if scale == "cluster" else 1.0
    rng = derive_rng(seed, "variance", L, m)
    samples = [random_parameters(base.n_params, rng, width) for _ in range(n_samples)]
    out = []
    for j2 in j2_list:
        obj = base.with_model(ModelParams(J1, float(j2)))
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                grads = list(pool.map(obj.gradient_adjoint, samples))
        else:
            grads = [obj.gradient_adjoint(x) for x in samples]
        g = factor * np.array([gr[0] for gr in grads])
        out.append(VarianceRecord(L, L * L, m, float(j2), float(np.var(g, ddof=1)), float(g.mean()), n_samples, scale))
    return out
