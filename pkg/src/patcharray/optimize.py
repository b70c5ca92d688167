"""Derivative-free tuning of array geometry.

A box-constrained Nelder-Mead simplex drives composite objectives built
from the network and far-field models. Parameters are addressed by name:

``L``
    patch length (all patches)
``W``
    patch width (all patches)
``gap``
    interconnect length, i.e. edge-to-edge patch spacing
``interconnect_width``
    interconnect line width
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .farfield import SphericalGrid, cut_metrics, directivity, total_pattern
from .microstrip import InvalidInputError, MicrostripLine, PatchElement
from .network import ArrayLayout, analyze_sweep, element_excitations, network_response

log = logging.getLogger(__name__)

PENALTY = 1e6
PARAMETERS = ("L", "W", "gap", "interconnect_width")
DEFAULT_SWEEP = (25e9, 35e9, 401)


class TuningError(RuntimeError):
    """Resonance tuning did not reach the requested accuracy."""

    def __init__(self, message, offset=None, result=None):
        super().__init__(message)
        self.offset = offset
        self.result = result


@dataclass(frozen=True)
class Parameter:
    name: str
    value: float
    lower: float
    upper: float
    free: bool = True

    def __post_init__(self):
        if not self.lower <= self.value <= self.upper:
            raise InvalidInputError(
                f"{self.name} = {self.value} outside [{self.lower}, {self.upper}]"
            )


@dataclass(frozen=True)
class DesignVector:
    params: tuple[Parameter, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))

    def __getitem__(self, name) -> float:
        return self._get(name).value

    def _get(self, name) -> Parameter:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def free(self) -> list[Parameter]:
        return [p for p in self.params if p.free]

    def free_values(self) -> np.ndarray:
        return np.array([p.value for p in self.free])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        free = self.free
        return np.array([p.lower for p in free]), np.array([p.upper for p in free])

    def with_free(self, values) -> "DesignVector":
        """Copy with the free parameters set to ``values`` (clipped to bounds)."""
        it = iter(values)
        out = []
        for p in self.params:
            if p.free:
                out.append(replace(p, value=float(np.clip(next(it), p.lower, p.upper))))
            else:
                out.append(p)
        return DesignVector(tuple(out))

    def with_value(self, name, value) -> "DesignVector":
        return DesignVector(tuple(replace(p, value=value) if p.name == name else p
                                  for p in self.params))

    def as_dict(self) -> dict[str, float]:
        return {p.name: p.value for p in self.params}


def _layout_value(layout: ArrayLayout, name: str) -> float:
    if name == "L":
        return layout.patches[0].length
    if name == "W":
        return layout.patches[0].width
    if name == "gap":
        return layout.interconnects[0].length if layout.interconnects else 0.0
    if name == "interconnect_width":
        return layout.interconnects[0].width if layout.interconnects else layout.feed.width
    raise InvalidInputError(f"unknown design parameter {name!r}; expected one of {PARAMETERS}")


def design_vector(layout: ArrayLayout, free: Sequence[str] = ("L",),
                  rel_bounds: float = 0.25) -> DesignVector:
    """Design vector over every named parameter of ``layout``; only ``free`` ones move."""
    for name in free:
        if name not in PARAMETERS:
            raise InvalidInputError(f"unknown design parameter {name!r}; expected one of {PARAMETERS}")
    params = []
    for name in PARAMETERS:
        v = _layout_value(layout, name)
        params.append(Parameter(name, v, v * (1 - rel_bounds), v * (1 + rel_bounds), name in free))
    return DesignVector(tuple(params))


def apply_design(layout: ArrayLayout, x: DesignVector) -> ArrayLayout:
    """Layout with the free parameters of ``x`` written in; frozen ones are ignored."""
    free = {p.name: p.value for p in x.free}
    if not free:
        return layout
    patches = [
        PatchElement(free.get("W", p.width), free.get("L", p.length)) for p in layout.patches
    ]
    inter = [
        MicrostripLine(free.get("interconnect_width", ic.width), free.get("gap", ic.length))
        for ic in layout.interconnects
    ]
    return replace(layout, patches=tuple(patches), interconnects=tuple(inter))


@dataclass(frozen=True)
class Objective:
    """Composite goal at ``target_f0``; lower is better."""

    target_f0: float
    weights: tuple[float, float, float] = (1.0, 0.0, 0.0)
    sll_ceiling_db: float = -10.0
    grid_step: float = 2.0

    def __post_init__(self):
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise InvalidInputError(f"weights must be >= 0 with at least one > 0, got {self.weights}")


def composite_value(s11_db: float, directivity_dbi: float, sll_db: float, obj: Objective) -> float:
    w_match, w_dir, w_sll = obj.weights
    j = w_match * max(0.0, s11_db + 10.0)
    if w_dir:
        j += w_dir * -directivity_dbi
    if w_sll:
        j += w_sll * max(0.0, sll_db - obj.sll_ceiling_db)
    return float(j)


def objective_eval(x: DesignVector, template: ArrayLayout, obj: Objective) -> float:
    """Composite objective of the layout obtained by applying ``x`` to ``template``.

    Any analysis failure maps to a finite penalty so the search can continue.
    """
    try:
        layout = apply_design(template, x)
        f0 = obj.target_f0
        net = network_response(layout, [f0])
        s11_db = float(net.s11_db[0])
        d_dbi, sll = 0.0, -math.inf
        if obj.weights[1] or obj.weights[2]:
            ex = element_excitations(layout, f0)
            pat = total_pattern(layout, ex, f0, SphericalGrid(obj.grid_step, obj.grid_step))
            d_dbi = directivity(pat)
            sll = cut_metrics(pat, 0.0).sll_db
        value = composite_value(s11_db, d_dbi, sll, obj)
    except (ArithmeticError, ValueError) as exc:
        log.debug("analysis failed at %s: %s", x.as_dict(), exc)
        return PENALTY
    return value if math.isfinite(value) else PENALTY


def resonance_offset(layout: ArrayLayout, f0: float, sweep=DEFAULT_SWEEP) -> float:
    """Distance in GHz between the sweep's |S11| minimum and ``f0``."""
    f_res, _ = analyze_sweep(layout, *sweep).resonance()
    return abs(f_res - f0) / 1e9


def resonance_objective(template: ArrayLayout, f0: float, sweep=DEFAULT_SWEEP) -> Callable:
    def f(x: DesignVector) -> float:
        try:
            return resonance_offset(apply_design(template, x), f0, sweep)
        except (ArithmeticError, ValueError):
            return PENALTY

    return f


@dataclass
class OptResult:
    best: DesignVector
    best_value: float
    evaluations: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    initial_value: float = math.nan


class _Budget(Exception):
    pass


def nelder_mead(f: Callable[[DesignVector], float], x0: DesignVector, tol_rel: float = 1e-4,
                max_evals: int = 500, alpha: float = 1.0, gamma: float = 2.0,
                rho: float = 0.5, sigma: float = 0.5, init_step: float = 0.05) -> OptResult:
    """Box-constrained Nelder-Mead over the free parameters of ``x0``.

    Every trial point is clipped to the bounds before evaluation. Converges
    when ``(f_worst - f_best) / (1 + |f_best|) < tol_rel``. Ties never
    displace an incumbent, so the search is deterministic and the result is
    never worse than ``f(x0)``.
    """
    n = len(x0.free)
    if n == 0:
        raise InvalidInputError("design vector has no free parameters")
    lower, upper = x0.bounds()
    evals = 0

    def evaluate(v):
        nonlocal evals
        if evals >= max_evals:
            raise _Budget
        evals += 1
        return float(f(x0.with_free(v)))

    start = x0.free_values()
    simplex = [start.copy()]
    for i in range(n):
        v = start.copy()
        step = init_step * v[i] if v[i] != 0 else init_step * (upper[i] - lower[i])
        v[i] = v[i] + step
        if v[i] > upper[i]:
            v[i] = start[i] - step
        simplex.append(np.clip(v, lower, upper))
    values = []
    values_x0 = math.nan
    trace: list[float] = []
    converged = False
    try:
        for v in simplex:
            values.append(evaluate(v))
            if len(values) == 1:
                values_x0 = values[0]
        while True:
            order = np.argsort(values, kind="stable")
            simplex = [simplex[i] for i in order]
            values = [values[i] for i in order]
            trace.append(values[0])
            if (values[-1] - values[0]) / (1 + abs(values[0])) < tol_rel:
                converged = True
                break
            centroid = np.mean(simplex[:-1], axis=0)
            worst = simplex[-1]
            xr = np.clip(centroid + alpha * (centroid - worst), lower, upper)
            fr = evaluate(xr)
            if values[0] <= fr < values[-2]:
                simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[0]:
                xe = np.clip(centroid + gamma * (xr - centroid), lower, upper)
                fe = evaluate(xe)
                if fe < fr:
                    simplex[-1], values[-1] = xe, fe
                else:
                    simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[-1]:
                xc = np.clip(centroid + rho * (xr - centroid), lower, upper)
                fc = evaluate(xc)
                if fc <= fr:
                    simplex[-1], values[-1] = xc, fc
                    continue
            else:
                xc = np.clip(centroid + rho * (worst - centroid), lower, upper)
                fc = evaluate(xc)
                if fc < values[-1]:
                    simplex[-1], values[-1] = xc, fc
                    continue
            best = simplex[0]
            for i in range(1, n + 1):
                simplex[i] = np.clip(best + sigma * (simplex[i] - best), lower, upper)
                values[i] = evaluate(simplex[i])
    except _Budget:
        pass

    if not values:
        raise InvalidInputError("max_evals too small to evaluate the start point")
    i = int(np.argmin(values))
    best_value = values[i]
    if not trace or best_value < trace[-1]:
        trace.append(best_value)
    return OptResult(x0.with_free(simplex[i]), best_value, evals, converged, trace, values_x0)


def tune_for_resonance(layout: ArrayLayout, f0: float, sweep=DEFAULT_SWEEP,
                       max_evals: int = 200, tolerance_ghz: float = 0.15) -> ArrayLayout:
    """Retune the patch length so the |S11| minimum lands on ``f0``.

    Raises :class:`TuningError` naming the best offset when the search
    cannot get within ``tolerance_ghz``.
    """
    f_start, f_stop, _ = sweep
    if not f_start <= f0 <= f_stop:
        raise InvalidInputError(
            f"target {f0 / 1e9:.6g} GHz outside sweep {f_start / 1e9:.6g}-{f_stop / 1e9:.6g} GHz"
        )
    x0 = design_vector(layout, free=("L",))
    result = nelder_mead(resonance_objective(layout, f0, sweep), x0, max_evals=max_evals)
    if result.best_value > tolerance_ghz:
        raise TuningError(
            f"resonance tuning stopped {result.best_value:.4g} GHz from target "
            f"after {result.evaluations} evaluations",
            offset=result.best_value,
            result=result,
        )
    return apply_design(layout, result.best)
