"""Limited-memory BFGS with a strong-Wolfe line search, plus multi-start and warm-start drivers."""
from __future__ import annotations

import csv
import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .seeding import derive_rng

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILURE = "line_search_failure"
GRADIENT_MODES = ("adjoint", "fd_forward", "fd_central")
TRACE_COLUMNS = ("iteration", "energy", "grad_norm", "m_neel", "m_caf", "d_x", "d_y")


class NonFiniteObjectiveError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 2000
    gradient_tolerance: float = 1e-7
    energy_tolerance: float = 1e-12
    history_size: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    gradient_mode: str = "adjoint"
    fd_delta: float = 1e-6
    max_line_search_evals: int = 40

    def __post_init__(self) -> None:
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not (self.gradient_tolerance > 0 and self.energy_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if self.history_size < 1:
            raise ValueError("history_size must be >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"line-search constants must satisfy 0 < c1 < c2 < 1, got {self.c1}, {self.c2}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}, got {self.gradient_mode!r}")
        if not self.fd_delta > 0:
            raise ValueError("fd_delta must be positive")


@dataclass
class OptimizationTrace:
    records: list[dict] = field(default_factory=list)
    status: str = ""
    seed: int | None = None
    wall_time: float = 0.0
    n_evaluations: int = 0

    @property
    def energies(self) -> np.ndarray:
        return np.array([r["energy"] for r in self.records])

    @property
    def iterations(self) -> int:
        return self.records[-1]["iteration"] if self.records else 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, extrasaction="ignore")
            w.writeheader()
            for r in self.records:
                w.writerow({k: r.get(k, "") for k in TRACE_COLUMNS})


@dataclass(eq=False)
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    trace: OptimizationTrace
    report: object = None

    @property
    def status(self) -> str:
        return self.trace.status

    @property
    def converged(self) -> bool:
        return self.trace.status == CONVERGED

    def __iter__(self):
        # (x*, report, trace) unpacking
        yield self.x
        yield self.report if self.report is not None else self.fun
        yield self.trace


def _value_and_grad(objective, config: OptimizerConfig) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    if config.gradient_mode == "adjoint":
        if hasattr(objective, "value_and_grad"):
            return objective.value_and_grad
        return objective
    scheme = "forward" if config.gradient_mode == "fd_forward" else "central"
    if hasattr(objective, "value_and_grad_fd"):
        return lambda x: objective.value_and_grad_fd(x, scheme, config.fd_delta)

    def fd(x):
        f0, _ = objective(x)
        g = np.empty(x.size)
        for k in range(x.size):
            e = np.zeros(x.size)
            e[k] = config.fd_delta
            if scheme == "forward":
                g[k] = (objective(x + e)[0] - f0) / config.fd_delta
            else:
                g[k] = (objective(x + e)[0] - objective(x - e)[0]) / (2 * config.fd_delta)
        return f0, g

    return fd


def _cubic_min(a, fa, da, b, fb, db) -> float | None:
    # minimizer of the cubic interpolating (a, fa, da), (b, fb, db)
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _line_search(phi, f0, d0, alpha, c1, c2, max_evals):
    """Strong-Wolfe bracketing and zoom; returns ``(alpha, f, g)`` or ``None``."""
    evals = 0
    a_prev, f_prev, d_prev = 0.0, f0, d0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        nonlocal evals
        while evals < max_evals:
            width = hi - lo
            a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = sorted((lo + 0.1 * width, hi - 0.1 * width))
            if a is None or not np.isfinite(a) or not lo_b <= a <= hi_b:
                a = 0.5 * (lo + hi)
            f, d, g = phi(a)
            evals += 1
            if f > f0 + c1 * a * d0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        # accept the best sufficient-decrease point when curvature cannot be met
        if lo > 0 and f_lo <= f0 + c1 * lo * d0 and f_lo < f0:
            f, d, g = phi(lo)
            return lo, f, g
        return None

    while evals < max_evals:
        f, d, g = phi(alpha)
        evals += 1
        if f > f0 + c1 * alpha * d0 or (a_prev > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, alpha, f, d)
        if abs(d) <= -c2 * d0:
            return alpha, f, g
        if d >= 0:
            return zoom(alpha, f, d, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
    return None


def _two_loop(g: np.ndarray, memory: deque) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(
    objective,
    x0,
    config: OptimizerConfig = OptimizerConfig(),
    observer: Callable[[np.ndarray], dict] | None = None,
    seed: int | None = None,
) -> MinimizeResult:
    """Unconstrained L-BFGS minimization.

    ``objective`` is either a callable returning ``(f, grad)`` or an object
    with ``value_and_grad`` (and optionally ``energy``/``value_and_grad_fd``).
    ``observer(x)`` adds extra columns to each trace record.
    """
    t0 = time.perf_counter()
    fg = _value_and_grad(objective, config)
    trace = OptimizationTrace(seed=seed)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")

    def evaluate(xv):
        f, g = fg(xv)
        trace.n_evaluations += 1
        g = np.asarray(g, dtype=float)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NonFiniteObjectiveError(f"objective returned non-finite value {f!r} at x={xv!r}")
        return float(f), g

    def record(it, f, g):
        r = {"iteration": it, "energy": f, "grad_norm": float(np.max(np.abs(g), initial=0.0))}
        if observer is not None:
            r.update(observer(x))
        trace.records.append(r)

    f, g = evaluate(x)
    record(0, f, g)
    memory: deque = deque(maxlen=config.history_size)
    status = MAX_ITER
    it = 0
    while True:
        if np.max(np.abs(g), initial=0.0) <= config.gradient_tolerance:
            status = CONVERGED
            break
        if it >= config.max_iterations:
            status = MAX_ITER
            break
        p = _two_loop(g, memory)
        d0 = float(g @ p)
        if d0 >= 0:
            memory.clear()
            p = -g
            d0 = float(g @ p)
        alpha0 = 1.0 if memory else min(1.0, 1.0 / np.linalg.norm(g))

        def phi(a, p=p):
            fa, ga = evaluate(x + a * p)
            return fa, float(ga @ p), ga

        step = _line_search(phi, f, d0, alpha0, config.c1, config.c2, config.max_line_search_evals)
        if step is None and memory:
            log.debug("line search failed at iteration %d; restarting along steepest descent", it)
            memory.clear()
            p = -g
            d0 = float(g @ p)

            def phi(a, p=p):
                fa, ga = evaluate(x + a * p)
                return fa, float(ga @ p), ga

            step = _line_search(phi, f, d0, min(1.0, 1.0 / np.linalg.norm(g)), config.c1, config.c2,
                                config.max_line_search_evals)
        if step is None:
            status = LINE_SEARCH_FAILURE
            break
        alpha, f_new, g_new = step
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        x = x + s
        it += 1
        f_old, f, g = f, f_new, g_new
        if sy > 1e-12 * float(y @ y) and sy > 0:
            memory.append((s, y, 1.0 / sy))
        record(it, f, g)
        if (f_old - f) <= config.energy_tolerance * max(abs(f_old), abs(f), 1.0):
            status = CONVERGED
            break
    trace.status = status
    trace.wall_time = time.perf_counter() - t0
    report = None
    if hasattr(objective, "energy"):
        report = objective.energy(x)
        report.gradient = g
    return MinimizeResult(x, f, g, trace, report)


def random_parameters(n: int, rng: np.random.Generator, width: float = np.pi) -> np.ndarray:
    """Uniform angles on ``(-width, width]``."""
    return width - 2 * width * rng.random(n)


@dataclass
class MultiStartResult:
    best: MinimizeResult
    results: list[MinimizeResult]
    seeds: list[int]

    @property
    def best_seed(self) -> int:
        return self.seeds[next(i for i, r in enumerate(self.results) if r is self.best)]

    @property
    def traces(self) -> list[OptimizationTrace]:
        return [r.trace for r in self.results]


def multi_start(
    objective,
    n_starts: int,
    seed: int,
    config: OptimizerConfig = OptimizerConfig(),
    n_params: int | None = None,
    observer=None,
    extra_starts: Sequence[np.ndarray] = (),
    threads: int = 1,
    purpose: str = "multi_start",
) -> MultiStartResult:
    """Minimize from ``n_starts`` random initial points (plus ``extra_starts``) and keep the best.

    Start ``k`` draws its angles from the stream ``(seed, purpose, k)``, so
    results do not depend on ``threads``.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    n = n_params if n_params is not None else objective.n_params
    starts = []
    seeds = []
    for k in range(n_starts):
        starts.append(random_parameters(n, derive_rng(seed, purpose, k)))
        seeds.append(k)
    for k, x in enumerate(extra_starts):
        starts.append(np.asarray(x, dtype=float))
        seeds.append(-1 - k)

    def run(args):
        x0, s = args
        return minimize(objective, x0, config, observer=observer, seed=s)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, zip(starts, seeds)))
    else:
        results = [run(a) for a in zip(starts, seeds)]
    best = min(results, key=lambda r: r.fun)
    return MultiStartResult(best, results, seeds)


def warm_start_chain(
    objective_family: Callable[[float], object],
    grid: Sequence[float],
    x_init,
    config: OptimizerConfig = OptimizerConfig(),
    observer_family: Callable[[object], Callable] | None = None,
) -> list[tuple[float, MinimizeResult | None, Exception | None]]:
    """Optimize along ``grid``, seeding each point with the previous optimum.

    A failing point is reported with its exception and the chain continues
    from the last good optimum.
    """
    grid = list(grid)
    if any(b <= a for a, b in zip(grid, grid[1:])) and any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be monotone")
    out = []
    x = np.asarray(x_init, dtype=float)
    for value in grid:
        obj = objective_family(value)
        observer = observer_family(obj) if observer_family else None
        try:
            res = minimize(obj, x, config, observer=observer)
        except (NonFiniteObjectiveError, FloatingPointError, ValueError) as exc:
            log.warning("optimization failed at %g: %s", value, exc)
            out.append((value, None, exc))
            continue
        x = res.x
        out.append((value, res, None))
    return out
