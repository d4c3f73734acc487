"""Derivative-free optimization of pulse and ramp parameters.

A deterministic bounded Nelder-Mead simplex with restart jitter drives
simulator-defined objectives: gate protocols scored by process
infidelity plus a leakage penalty, and ramp protocols scored by target
state infidelity.  Parameters marked periodic (phases) are folded back
into their interval instead of clipped, so the simplex can reflect
across the wrap point.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import operators as ops
from .dynamics import NoiseModel
from .gates import build_protocol, extract_process
from .metrology import ghz_fidelity_bound
from .register import Register
from .sweeps import RampSchedule, adiabatic_sweep

__all__ = [
    "OptimizationProblem",
    "OptimizationResult",
    "minimize",
    "scan",
    "gate_objective",
    "sweep_objective",
    "write_trace_csv",
    "write_scan_csv",
]

# Initial simplex edge as a fraction of each parameter's allowed range.
_SIMPLEX_STEP_FRACTION = 0.05
_FATOL = 1e-15
_XATOL = 1e-12


@dataclass(frozen=True)
class OptimizationProblem:
    """Bounded derivative-free search specification.

    ``objective`` maps a parameter vector (same order as ``names``) to a
    non-negative cost and must be deterministic for a fixed seed.
    ``periodic`` marks parameters living on a circle (the bound width is
    the period); ``start`` optionally fixes the first restart's starting
    point, otherwise the box center is used.  The evaluation ``budget``
    is split evenly across ``restarts``.
    """

    names: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]
    objective: Callable[[np.ndarray], float]
    budget: int = 200
    seed: int = 0
    restarts: int = 1
    periodic: tuple[bool, ...] = ()
    start: tuple[float, ...] | None = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if not names:
            raise ValueError("at least one parameter is required")
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != len(names):
            raise ValueError("bounds must match the parameter names")
        for lo, hi in bounds:
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("bounds must be finite")
            if hi <= lo:
                raise ValueError("each bound needs lo < hi")
        periodic = tuple(bool(p) for p in self.periodic) or \
            (False,) * len(names)
        if len(periodic) != len(names):
            raise ValueError("periodic flags must match the parameter names")
        if self.budget < len(names) + 2:
            raise ValueError("budget must be at least dimension + 2")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        start = self.start
        if start is not None:
            start = tuple(float(x) for x in start)
            if len(start) != len(names):
                raise ValueError("start must match the parameter names")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "start", start)

    @property
    def dim(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class OptimizationResult:
    """Best point found with the full evaluation record.

    ``trace`` is the best-so-far cost after each evaluation (monotone
    non-increasing); ``history`` stores one row per evaluation as
    (cost, param values...).  ``status`` is ``converged`` when every
    restart terminated on its own and ``budget_exhausted`` when the
    evaluation budget cut the search short (still a valid result).
    """

    names: tuple[str, ...]
    params: np.ndarray
    cost: float
    trace: np.ndarray
    history: np.ndarray
    evaluations: int
    status: str

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.params)}


class _BudgetExhausted(Exception):
    pass


def _fold(x: np.ndarray, problem: OptimizationProblem) -> np.ndarray:
    """Wrap periodic coordinates into their interval, clip the rest."""
    out = np.array(x, dtype=float)
    for i, (lo, hi) in enumerate(problem.bounds):
        if problem.periodic[i]:
            out[i] = lo + (out[i] - lo) % (hi - lo)
        else:
            out[i] = min(max(out[i], lo), hi)
    return out


def _initial_simplex(x0: np.ndarray,
                     problem: OptimizationProblem) -> list[np.ndarray]:
    pts = [np.array(x0, dtype=float)]
    for i, (lo, hi) in enumerate(problem.bounds):
        step = _SIMPLEX_STEP_FRACTION * (hi - lo)
        xi = np.array(x0, dtype=float)
        if not problem.periodic[i] and xi[i] + step > hi:
            step = -step
        xi[i] += step
        pts.append(_fold(xi, problem))
    return pts


def _nelder_mead(f, x0: np.ndarray, problem: OptimizationProblem) -> bool:
    """Bounded simplex descent; returns True when converged (not cut off)."""
    pts = _initial_simplex(x0, problem)
    vals = [f(p) for p in pts]
    d = problem.dim
    scale = max(hi - lo for lo, hi in problem.bounds)
    while True:
        order = np.argsort(vals, kind="stable")
        pts = [pts[i] for i in order]
        vals = [vals[i] for i in order]
        spread_f = vals[-1] - vals[0]
        spread_x = max(float(np.max(np.abs(p - pts[0]))) for p in pts[1:])
        if spread_f <= _FATOL and spread_x <= _XATOL * scale:
            return True
        centroid = np.mean(pts[:-1], axis=0)
        reflected = _fold(centroid + (centroid - pts[-1]), problem)
        fr = f(reflected)
        if fr < vals[0]:
            expanded = _fold(centroid + 2.0 * (centroid - pts[-1]), problem)
            fe = f(expanded)
            if fe < fr:
                pts[-1], vals[-1] = expanded, fe
            else:
                pts[-1], vals[-1] = reflected, fr
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = reflected, fr
            continue
        if fr < vals[-1]:
            contracted = _fold(centroid + 0.5 * (reflected - centroid),
                               problem)
        else:
            contracted = _fold(centroid + 0.5 * (pts[-1] - centroid), problem)
        fc = f(contracted)
        if fc < min(fr, vals[-1]):
            pts[-1], vals[-1] = contracted, fc
            continue
        # shrink toward the best vertex
        for i in range(1, d + 1):
            pts[i] = _fold(pts[0] + 0.5 * (pts[i] - pts[0]), problem)
            vals[i] = f(pts[i])


def minimize(problem: OptimizationProblem) -> OptimizationResult:
    """Run the bounded simplex with restart jitter under a hard budget.

    The first restart starts from ``problem.start`` (or the box
    center); later restarts start from seeded uniform draws inside the
    bounds, so the whole search is reproducible from ``problem.seed``.
    The best evaluation ever made is returned even when the budget
    interrupts a restart.
    """
    history: list[tuple[float, np.ndarray]] = []
    best: dict = {"cost": math.inf, "x": None}
    quota = {"limit": 0}

    def f(x: np.ndarray) -> float:
        if len(history) >= min(quota["limit"], problem.budget):
            raise _BudgetExhausted()
        c = float(problem.objective(np.array(x, dtype=float)))
        history.append((c, np.array(x, dtype=float)))
        if c < best["cost"]:
            best["cost"], best["x"] = c, np.array(x, dtype=float)
        return c

    share = problem.budget // problem.restarts
    extra = problem.budget % problem.restarts
    all_converged = True
    for r in range(problem.restarts):
        quota["limit"] = len(history) + share + (1 if r < extra else 0)
        if r == 0:
            x0 = np.array(problem.start, dtype=float) \
                if problem.start is not None else \
                np.array([0.5 * (lo + hi) for lo, hi in problem.bounds])
        else:
            rng = ops.rng_stream(problem.seed, f"restart:{r}")
            x0 = np.array([rng.uniform(lo, hi)
                           for lo, hi in problem.bounds])
        try:
            converged = _nelder_mead(f, _fold(x0, problem), problem)
        except _BudgetExhausted:
            converged = False
        all_converged = all_converged and converged
        if len(history) >= problem.budget:
            break

    costs = np.array([c for c, _ in history])
    xs = np.array([x for _, x in history])
    return OptimizationResult(
        names=problem.names,
        params=best["x"],
        cost=float(best["cost"]),
        trace=np.minimum.accumulate(costs),
        history=np.column_stack([costs, xs]),
        evaluations=len(history),
        status="converged" if all_converged else "budget_exhausted",
    )


def scan(problem: OptimizationProblem,
         grid: Mapping[str, Sequence[float]],
         fixed: Mapping[str, float] | None = None) -> list[dict]:
    """Exhaustive cost evaluation on a parameter grid.

    ``grid`` lists the values per scanned parameter; every other
    parameter must appear in ``fixed`` (or ``problem.start``).  All
    values must respect the problem bounds.  Returns one row per grid
    point with the parameter values and the cost, in deterministic
    (row-major over ``problem.names``) order.
    """
    fixed = dict(fixed or {})
    if problem.start is not None:
        for n, v in zip(problem.names, problem.start):
            fixed.setdefault(n, v)
    unknown = (set(grid) | set(fixed)) - set(problem.names)
    if unknown:
        raise ValueError(f"unknown parameters: {sorted(unknown)}")
    axes: list[tuple[str, list[float]]] = []
    for n in problem.names:
        if n in grid:
            axes.append((n, [float(v) for v in grid[n]]))
        elif n not in fixed:
            raise ValueError(f"parameter {n!r} has neither grid nor fixed value")
    for name, values in list(axes) + [(n, [v]) for n, v in fixed.items()]:
        lo, hi = problem.bounds[problem.names.index(name)]
        for v in values:
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} lies outside [{lo}, {hi}]")
    rows = []
    for combo in itertools.product(*[vals for _, vals in axes]):
        point = dict(fixed)
        point.update({n: v for (n, _), v in zip(axes, combo)})
        x = np.array([point[n] for n in problem.names])
        row = {n: point[n] for n in problem.names}
        row["cost"] = float(problem.objective(x))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Objective factories
# ---------------------------------------------------------------------------


def gate_objective(name: str, register: Register, sites,
                   param_names: Sequence[str], *,
                   base_params: Mapping | None = None,
                   leakage_weight: float = 1.0,
                   target: np.ndarray | None = None,
                   noise: NoiseModel | None = None,
                   seed: int = 0) -> Callable[[np.ndarray], float]:
    """Cost functional ``(1 - process fidelity) + leakage_weight * leakage``.

    The vector entries set the protocol parameters listed in
    ``param_names`` on top of ``base_params``.  By default the fidelity
    is taken against the protocol's own ideal target (which follows
    measured phases where the target is a phase family); passing
    ``target`` scores against that fixed unitary instead, e.g. to pin a
    controlled-phase protocol to an exact CZ.
    """
    base = dict(base_params or {})
    names = tuple(param_names)

    def objective(x: np.ndarray) -> float:
        params = dict(base)
        params.update({n: float(v) for n, v in zip(names, x)})
        protocol = build_protocol(name, params, register, sites)
        report = extract_process(protocol, register, noise, seed=seed)
        if target is None:
            fidelity = report.fidelity
        else:
            u = report.operator
            tr_uu = float(np.real(np.trace(u.conj().T @ u)))
            if tr_uu <= 0.0:
                return 1.0 + leakage_weight
            fidelity = abs(np.trace(target.conj().T @ u)) ** 2 \
                / (u.shape[0] * tr_uu)
        return (1.0 - fidelity) + leakage_weight * report.leakage

    return objective


def sweep_objective(model, register: Register, duration: float, *,
                    target: str = "ghz", q: int = 2,
                    knot_fractions: Sequence[float] = (0.0, 0.2, 0.5, 0.8, 1.0),
                    step_scale: float = 1.0) -> Callable[[np.ndarray], float]:
    """Ramp-shape cost for sweep state preparation.

    The six vector entries are the three interior Rabi-frequency knots
    and three detuning values (start, middle, end) of a piecewise-linear
    ramp on the fixed ``knot_fractions`` grid; the drive switches on and
    off at the ends.  ``target="ghz"`` scores ``1 - F_GHZ`` against the
    staggered-pattern GHZ pair, ``"ordered"`` scores one minus the
    summed perfect-pattern probability for the given ``q``.
    """
    fractions = tuple(float(f) for f in knot_fractions)
    if len(fractions) != 5:
        raise ValueError("knot_fractions must have five entries")
    times = tuple(f * duration for f in fractions)

    def objective(x: np.ndarray) -> float:
        om1, om2, om3, d_start, d_mid, d_end = (float(v) for v in x)
        ramp = RampSchedule(times, (0.0, om1, om2, om3, 0.0),
                            (d_start, d_start, d_mid, d_end, d_end))
        result = adiabatic_sweep(model, register, ramp, q=q,
                                 step_scale=step_scale)
        if target == "ghz":
            return 1.0 - ghz_fidelity_bound(result.state)
        if target == "ordered":
            return 1.0 - result.ordered_probability
        raise ValueError(f"unknown sweep target {target!r}")

    return objective


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------


def write_trace_csv(result: OptimizationResult, path) -> None:
    """Evaluation history (eval_index, cost, best_cost, parameters...)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eval_index", "cost", "best_cost"]
                        + list(result.names))
        for i in range(result.evaluations):
            row = [i, repr(float(result.history[i, 0])),
                   repr(float(result.trace[i]))]
            row += [repr(float(v)) for v in result.history[i, 1:]]
            writer.writerow(row)


def write_scan_csv(rows: Sequence[Mapping], path) -> None:
    """Cost landscape table with one row per grid point."""
    if not rows:
        raise ValueError("scan produced no rows")
    names = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(float(row[n])) if isinstance(row[n], float)
                             else row[n] for n in names])
