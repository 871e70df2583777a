"""Identify object effusivity, sensor constants and contact-time offset from traces.

The objective is the pooled sum of squared errors between recorded traces and
the noise-free model curve, minimized with bounded L-BFGS. Effusivities are
optimized in log coordinates and everything is rescaled to the unit box so one
gradient step size suits all parameters.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, FitConvergenceError
from .heatsim import SensorParams, TemperatureTrace
from .specfun import erfc

log = logging.getLogger(__name__)

GRAD_REL_STEP = 1e-6


@dataclass(frozen=True)
class FitConfig:
    e_bounds: tuple[float, float] = (30.5, 40000.0)
    offset_bounds: tuple[float, float] = (-1.0, 1.0)
    fit_sensor_params: bool = False
    e_sens_bounds: tuple[float, float] = (100.0, 5000.0)
    alpha_bounds: tuple[float, float] = (1e-10, 1e-8)
    convergence_tol: float = 1e-10
    max_iters: int = 500
    n_starts: int = 5

    def __post_init__(self):
        for name in ("e_bounds", "offset_bounds", "e_sens_bounds", "alpha_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise DomainError(f"{name}: lower bound must be below upper bound")
        if self.e_bounds[0] <= 0 or self.e_sens_bounds[0] <= 0 or self.alpha_bounds[0] <= 0:
            raise DomainError("effusivity and diffusivity bounds must be positive")


@dataclass
class FitResult:
    e_obj: float
    t_offset: float
    sse: float
    converged: bool
    iterations: int
    e_sens: float | None = None
    alpha_sens: float | None = None
    bound_active: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "e_obj": self.e_obj,
            "t_offset": self.t_offset,
            "e_sens": self.e_sens,
            "alpha_sens": self.alpha_sens,
            "sse": self.sse,
            "converged": self.converged,
            "iterations": self.iterations,
            "bound_active": list(self.bound_active),
        }


def _initial_temps(trace: TemperatureTrace) -> tuple[float, float]:
    if trace.meta.normalized:
        return 1.0, 0.0
    return trace.meta.t_sens0, trace.meta.t_obj0


def _model_curve(times, t_sens0, t_obj0, e_obj, e_sens, alpha, depth, t_offset):
    t = times + t_offset
    t_surf = (t_sens0 * e_sens + t_obj0 * e_obj) / (e_sens + e_obj)
    profile = np.zeros_like(t)
    pos = t > 0
    if np.any(pos):
        profile[pos] = erfc(depth / (2.0 * np.sqrt(alpha * t[pos])))
    return t_sens0 + (t_surf - t_sens0) * profile


def residual_sse(trace: TemperatureTrace, sensor: SensorParams, e_obj: float,
                 t_offset: float) -> float:
    """Sum of squared residuals against the model curve at times t_i + t_offset.

    Samples whose shifted time is <= 0 are compared with the initial sensor
    temperature.
    """
    t0, tobj = _initial_temps(trace)
    model = _model_curve(trace.times, t0, tobj, e_obj, sensor.e_sens, sensor.alpha_sens,
                         sensor.thermistor_depth, t_offset)
    r = trace.temps - model
    return float(np.dot(r, r))


class _Box:
    """Maps physical parameters to the unit box (log scale where flagged)."""

    def __init__(self, specs):
        self.names = [s[0] for s in specs]
        self.lo = np.array([math.log(s[1]) if s[3] else s[1] for s in specs])
        self.hi = np.array([math.log(s[2]) if s[3] else s[2] for s in specs])
        self.logs = np.array([s[3] for s in specs])

    def to_phys(self, u):
        v = self.lo + np.asarray(u) * (self.hi - self.lo)
        return np.where(self.logs, np.exp(v), v)

    def to_unit(self, p):
        v = np.array(p, dtype=float)
        v[self.logs] = np.log(v[self.logs])
        return np.clip((v - self.lo) / (self.hi - self.lo), 0.0, 1.0)


def _central_grad(fun, u, f0=None):
    g = np.empty_like(u)
    for i in range(len(u)):
        h = GRAD_REL_STEP * max(1.0, abs(u[i]))
        up, dn = u.copy(), u.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (fun(up) - fun(dn)) / (2 * h)
    return g


def _run_starts(objective, box, starts, cfg):
    def fun_and_grad(u):
        return objective(u), _central_grad(objective, u)

    results = []
    for u0 in starts:
        res = minimize(
            fun_and_grad, u0, jac=True, method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * len(u0),
            options={"ftol": cfg.convergence_tol, "gtol": 1e-12, "maxiter": cfg.max_iters},
        )
        results.append(res)
    best = min(results, key=lambda r: r.fun)
    ok = [r for r in results if r.success]
    return best, ok


def _active(box, u, eps=1e-6):
    names = []
    for name, ui in zip(box.names, u):
        if ui <= eps:
            names.append(f"{name}:lower")
        elif ui >= 1 - eps:
            names.append(f"{name}:upper")
    return names


def fit_material(traces: Sequence[TemperatureTrace], sensor: SensorParams,
                 cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit one material's effusivity and shared time offset to its traces.

    With ``cfg.fit_sensor_params`` the sensor effusivity and diffusivity are
    fitted as well. Five (``cfg.n_starts``) starts are spread evenly across
    ``cfg.e_bounds``; the lowest-SSE optimum is returned. A solution resting on
    a bound is reported with ``converged=False`` and the bound named in
    ``bound_active``.
    """
    if not traces:
        raise DomainError("need at least one trace")
    rates = {tr.meta.sample_rate for tr in traces}
    if len(rates) > 1:
        raise DomainError("traces have inconsistent sample rates")

    specs = [("e_obj", *cfg.e_bounds, True), ("t_offset", *cfg.offset_bounds, False)]
    if cfg.fit_sensor_params:
        specs += [("e_sens", *cfg.e_sens_bounds, True), ("alpha_sens", *cfg.alpha_bounds, True)]
    box = _Box(specs)
    prepared = [(tr.times, tr.temps, *_initial_temps(tr)) for tr in traces]
    depth = sensor.thermistor_depth

    def objective(u):
        p = box.to_phys(u)
        e_s = p[2] if cfg.fit_sensor_params else sensor.e_sens
        a_s = p[3] if cfg.fit_sensor_params else sensor.alpha_sens
        total = 0.0
        for times, temps, t0, tobj in prepared:
            r = temps - _model_curve(times, t0, tobj, p[0], e_s, a_s, depth, p[1])
            total += float(np.dot(r, r))
        return total

    lo, hi = cfg.e_bounds
    offset0 = min(max(0.0, cfg.offset_bounds[0]), cfg.offset_bounds[1])
    starts = []
    for k in range(cfg.n_starts):
        e0 = lo + (k + 0.5) * (hi - lo) / cfg.n_starts
        p0 = [e0, offset0]
        if cfg.fit_sensor_params:
            p0 += [min(max(sensor.e_sens, cfg.e_sens_bounds[0]), cfg.e_sens_bounds[1]),
                   min(max(sensor.alpha_sens, cfg.alpha_bounds[0]), cfg.alpha_bounds[1])]
        starts.append(box.to_unit(p0))

    best, ok = _run_starts(objective, box, starts, cfg)
    p = box.to_phys(best.x)
    active = _active(box, best.x)
    result = FitResult(
        e_obj=float(p[0]),
        t_offset=float(p[1]),
        sse=float(best.fun),
        converged=bool(best.success) and not active,
        iterations=int(best.nit),
        e_sens=float(p[2]) if cfg.fit_sensor_params else None,
        alpha_sens=float(p[3]) if cfg.fit_sensor_params else None,
        bound_active=active,
    )
    if not ok:
        raise FitConvergenceError("no start converged within max_iters", best=result)
    return result


@dataclass
class SensorCalibration:
    sensor: SensorParams
    materials: dict[str, FitResult]
    sse: float


def calibrate_sensor(traces_by_material: Mapping[str, Sequence[TemperatureTrace]],
                     e_bounds_by_material: Mapping[str, tuple[float, float]],
                     sensor: SensorParams, cfg: FitConfig = FitConfig()) -> SensorCalibration:
    """Two-stage identification over several calibration materials.

    Stage one fits e_sens and alpha_sens jointly with every material's
    effusivity and offset (each effusivity bounded by its database range).
    Stage two refits each material alone with the sensor held fixed.
    Only the ratio e_obj/e_sens enters the curves, so e_sens is pinned down
    by the effusivity bounds; tight bounds give a well-posed fit.
    """
    names = list(traces_by_material)
    if not names:
        raise DomainError("no calibration traces")
    specs = [("e_sens", *cfg.e_sens_bounds, True), ("alpha_sens", *cfg.alpha_bounds, True)]
    for name in names:
        specs += [(f"e_obj[{name}]", *e_bounds_by_material[name], True),
                  (f"t_offset[{name}]", *cfg.offset_bounds, False)]
    box = _Box(specs)
    prepared = {name: [(tr.times, tr.temps, *_initial_temps(tr)) for tr in traces_by_material[name]]
                for name in names}
    depth = sensor.thermistor_depth

    def objective(u):
        p = box.to_phys(u)
        total = 0.0
        for k, name in enumerate(names):
            e_obj, off = p[2 + 2 * k], p[3 + 2 * k]
            for times, temps, t0, tobj in prepared[name]:
                r = temps - _model_curve(times, t0, tobj, e_obj, p[0], p[1], depth, off)
                total += float(np.dot(r, r))
        return total

    p0 = [min(max(sensor.e_sens, cfg.e_sens_bounds[0]), cfg.e_sens_bounds[1]),
          min(max(sensor.alpha_sens, cfg.alpha_bounds[0]), cfg.alpha_bounds[1])]
    offset0 = min(max(0.0, cfg.offset_bounds[0]), cfg.offset_bounds[1])
    for name in names:
        lo, hi = e_bounds_by_material[name]
        p0 += [math.sqrt(lo * hi), offset0]
    u0 = box.to_unit(p0)
    best, ok = _run_starts(objective, box, [u0], cfg)
    if not ok:
        log.warning("joint sensor fit stopped without meeting tolerance")
    p = box.to_phys(best.x)
    fitted = replace(sensor, e_sens=float(p[0]), alpha_sens=float(p[1]))
    per_material = {}
    for name in names:
        mcfg = replace(cfg, e_bounds=tuple(e_bounds_by_material[name]), fit_sensor_params=False)
        per_material[name] = fit_material(traces_by_material[name], fitted, mcfg)
    return SensorCalibration(fitted, per_material, float(best.fun))
