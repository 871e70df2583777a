"""Closed-form prediction of binary material-recognition F1 scores.

Two materials produce mean thermistor curves that differ by
(T_surf1 - T_surf2) * erfc(x / (2 sqrt(alpha t))). With i.i.d. Gaussian noise
the likelihood-ratio classifier's false-positive rate is modelled as
P(X/Y < 1) with X a noncentral and Y a central chi-square on n degrees of
freedom, so F1 = 1 - CDF_F(1; n, n, lambda).
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, QuadratureError, RangeError
from .heatsim import ContactConditions, MaterialSample, SensorParams, surface_temperature
from .matdb import Category, MaterialDatabase, MaterialRecord
from .specfun import DEFAULT_TOLERANCE, SeriesTolerance, erfc, noncentral_f_cdf

PHI_DEFAULT = 0.9
PHYSICAL_E_MAX = 4.0e4


@dataclass(frozen=True)
class EffusivityGrid:
    """Equal-width effusivity intervals over (e_min, e_max].

    ``stride`` keeps every stride-th interval, giving a subgrid with the same
    interval width (e.g. 50 cells of width 80 out of the 500-interval grid).
    """

    e_min: float = 0.0
    e_max: float = PHYSICAL_E_MAX
    n_intervals: int = 500
    stride: int = 1

    def __post_init__(self):
        if not (0 <= self.e_min < self.e_max):
            raise DomainError("need 0 <= e_min < e_max")
        if self.n_intervals < 2:
            raise DomainError("n_intervals must be >= 2")
        if self.stride < 1:
            raise DomainError("stride must be >= 1")

    @property
    def width(self) -> float:
        return (self.e_max - self.e_min) / self.n_intervals

    @property
    def indices(self) -> np.ndarray:
        return np.arange(0, self.n_intervals, self.stride)

    def __len__(self):
        return len(self.indices)

    def bounds(self) -> list[tuple[float, float]]:
        w = self.width
        return [(self.e_min + k * w, self.e_min + (k + 1) * w) for k in self.indices]

    def midpoints(self) -> np.ndarray:
        return self.e_min + (self.indices + 0.5) * self.width

    def to_dict(self) -> dict:
        return {"e_min": self.e_min, "e_max": self.e_max,
                "n_intervals": self.n_intervals, "stride": self.stride}


# --- noncentrality ---------------------------------------------------------

def _adaptive_simpson(f, a, b, rtol, max_depth=60):
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    # absolute target from a coarse magnitude estimate
    target = rtol * max(abs(whole), 1e-300)
    total = 0.0
    worst = 0.0
    stack = [(a, b, fa, fm, fb, whole, target, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4 * frm + fhi)
        err = left + right - s
        if abs(err) <= 15 * eps or depth >= max_depth:
            if abs(err) > 15 * eps:
                worst = max(worst, abs(err) / 15)
            total += left + right + err / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth + 1))
    if worst > 0:
        raise QuadratureError("adaptive Simpson did not reach tolerance", achieved_tol=worst / abs(total))
    return total


@lru_cache(maxsize=256)
def _erfc2_integral(depth: float, alpha: float, t_contact: float, rtol: float) -> float:
    def g(t):
        if t <= 0:
            return 0.0
        return math.erfc(depth / (2.0 * math.sqrt(alpha * t))) ** 2

    return _adaptive_simpson(g, 0.0, t_contact, rtol * 1e-2)


def erfc2_integral(sensor: SensorParams, t_contact: float, rtol: float = 1e-8) -> float:
    """Integral of erfc^2(x / (2 sqrt(alpha t))) dt over [0, t_contact]."""
    if t_contact <= 0:
        raise DomainError("t_contact must be positive")
    return _erfc2_integral(sensor.thermistor_depth, sensor.alpha_sens, float(t_contact), rtol)


def _lambda_scale(sensor, cond, sigma):
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return erfc2_integral(sensor, cond.t_contact) / (sigma ** 2 * sensor.dt)


def noncentrality_lambda(sensor: SensorParams, e1: float, e2: float,
                         cond: ContactConditions, sigma: float) -> float:
    """lambda = (T_surf1 - T_surf2)^2 / (sigma^2 dt) * int_0^tc erfc^2(...) dt."""
    scale = _lambda_scale(sensor, cond, sigma)
    ts1 = surface_temperature(sensor, MaterialSample(e1), cond)
    ts2 = surface_temperature(sensor, MaterialSample(e2), cond)
    return (ts1 - ts2) ** 2 * scale


def f1_from_lambda(n: int, lam: float, tol: SeriesTolerance = DEFAULT_TOLERANCE) -> float:
    return 1.0 - noncentral_f_cdf(1.0, n, n, lam, tol)


def f1_pair(sensor: SensorParams, e1: float, e2: float, cond: ContactConditions,
            sigma: float, tol: SeriesTolerance = DEFAULT_TOLERANCE) -> float:
    """Predicted F1 of telling effusivity ``e1`` from ``e2``; 0.5 when equal."""
    n = sensor.n_samples(cond.t_contact)
    if n < 1:
        raise DomainError("contact too short for a single sample")
    return f1_from_lambda(n, noncentrality_lambda(sensor, e1, e2, cond, sigma), tol)


# --- minimum distinguishable difference -----------------------------------

@dataclass(frozen=True)
class MinDifference:
    """delta(e), or the indistinguishable-everywhere sentinel when ``delta`` is None."""

    e: float
    delta: float | None
    direction: str | None = None

    INDISTINGUISHABLE = "indistinguishable"

    @property
    def found(self) -> bool:
        return self.delta is not None

    def value(self) -> float:
        """delta as a float with the sentinel ordered above every finite value."""
        return math.inf if self.delta is None else self.delta

    def csv_field(self) -> str:
        return self.INDISTINGUISHABLE if self.delta is None else repr(self.delta)


def _search_direction(score, limit, step, phi, rtol):
    lo, hi = 0.0, min(step, limit)
    while score(hi) < phi:
        if hi >= limit:
            return None
        lo, hi = hi, min(2.0 * hi, limit)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if score(mid) >= phi:
            hi = mid
        else:
            lo = mid
    return hi


def min_distinguishable_difference(sensor: SensorParams, e: float, cond: ContactConditions,
                                   sigma: float, phi: float = PHI_DEFAULT, *,
                                   e_max: float = PHYSICAL_E_MAX, step: float | None = None,
                                   rtol: float = 1e-4) -> MinDifference:
    """Smallest delta with f1(e, e + delta) >= phi or f1(e, e - delta) >= phi.

    Each direction is bracketed by doubling from ``step`` (one 500-grid
    interval by default) and then bisected; partners stay inside (0, e_max].
    """
    if not (0.5 < phi < 1):
        raise DomainError("phi must lie in (0.5, 1)")
    if not (0 < e <= e_max):
        raise DomainError("e must lie in (0, e_max]")
    step = e_max / 500 if step is None else step
    n = sensor.n_samples(cond.t_contact)
    scale = _lambda_scale(sensor, cond, sigma)
    ts_e = surface_temperature(sensor, MaterialSample(e), cond)

    def score(other):
        ts_o = surface_temperature(sensor, MaterialSample(other), cond)
        return f1_from_lambda(n, (ts_e - ts_o) ** 2 * scale)

    candidates = []
    if e < e_max:
        d = _search_direction(lambda d: score(e + d), e_max - e, step, phi, rtol)
        if d is not None:
            candidates.append((d, "up"))
    d = _search_direction(lambda d: score(e - d), e * (1 - 1e-9), step, phi, rtol)
    if d is not None:
        candidates.append((d, "down"))
    if not candidates:
        return MinDifference(e, None, None)
    d, direction = min(candidates)
    return MinDifference(e, d, direction)


# --- matrices --------------------------------------------------------------

@dataclass
class F1Matrix:
    grid: EffusivityGrid
    scores: np.ndarray
    sensor: SensorParams
    cond: ContactConditions
    sigma: float
    source: str = "model"

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        n = len(self.grid)
        if self.scores.shape != (n, n):
            raise DimensionError(f"scores must be {n}x{n}")


@dataclass
class BinaryMap:
    grid: EffusivityGrid
    bits: np.ndarray
    phi: float = PHI_DEFAULT

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int8)

    def indistinguishable_fraction(self) -> float:
        """Share of upper-triangle cells marked 0 (indistinguishable)."""
        iu = np.triu_indices(len(self.bits), 1)
        return float(np.mean(self.bits[iu] == 0))


def _row_scores(args):
    i, ts, scale, n, tol = args
    return [f1_from_lambda(n, (ts[i] - ts[j]) ** 2 * scale, tol) for j in range(i + 1, len(ts))]


def f1_matrix(sensor: SensorParams, grid: EffusivityGrid, cond: ContactConditions,
              sigma: float, *, workers: int | None = None,
              tol: SeriesTolerance = DEFAULT_TOLERANCE) -> F1Matrix:
    """Model F1 over every pair of interval midpoints (symmetric, 0.5 diagonal).

    ``workers`` > 1 spreads rows over processes; values do not depend on it.
    """
    mids = grid.midpoints()
    ts = np.array([surface_temperature(sensor, MaterialSample(e), cond) for e in mids])
    scale = _lambda_scale(sensor, cond, sigma)
    n = sensor.n_samples(cond.t_contact)
    size = len(mids)
    scores = np.full((size, size), 0.5)
    jobs = [(i, ts, scale, n, tol) for i in range(size - 1)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_scores, jobs, chunksize=8))
    else:
        rows = [_row_scores(job) for job in jobs]
    for i, row in enumerate(rows):
        scores[i, i + 1:] = row
        scores[i + 1:, i] = row
    return F1Matrix(grid, scores, sensor, cond, sigma, "model")


def binary_map(m: F1Matrix | BinaryMap, phi: float = PHI_DEFAULT) -> BinaryMap:
    """1 where the pair is distinguishable (score >= phi), 0 otherwise."""
    if isinstance(m, BinaryMap):
        return BinaryMap(m.grid, m.bits.copy(), m.phi)
    return BinaryMap(m.grid, (m.scores >= phi).astype(np.int8), phi)


def matrix_match(a: BinaryMap, b: BinaryMap) -> float:
    """Percentage of agreeing upper-triangle cells between two binary maps."""
    if a.bits.shape != b.bits.shape or a.bits.ndim != 2 or a.bits.shape[0] != a.bits.shape[1]:
        raise DimensionError(f"binary maps differ in size: {a.bits.shape} vs {b.bits.shape}")
    n = a.bits.shape[0]
    if n < 2:
        raise DimensionError("need at least a 2x2 map")
    iu = np.triu_indices(n, 1)
    l1 = np.abs(a.bits[iu].astype(int) - b.bits[iu].astype(int)).sum()
    return (1.0 - l1 * 2.0 / (n * (n - 1))) * 100.0


def _covered_cells(grid: EffusivityGrid, lo: float, hi: float) -> np.ndarray:
    mids = grid.midpoints()
    if hi <= grid.e_min or lo > grid.e_max:
        raise RangeError(f"effusivity range [{lo}, {hi}] lies outside the grid")
    idx = np.nonzero((mids >= lo) & (mids <= hi))[0]
    if len(idx) == 0:
        # range narrower than the grid resolution: snap to the nearest midpoint
        idx = np.array([int(np.argmin(np.abs(mids - 0.5 * (lo + hi))))])
    return idx


def material_pair_avg_f1(m: F1Matrix, mat_a: MaterialRecord, mat_b: MaterialRecord) -> float:
    """Mean score over the rectangle of cells covered by the two effusivity ranges."""
    ia = _covered_cells(m.grid, mat_a.e_min, mat_a.e_max)
    ib = _covered_cells(m.grid, mat_b.e_min, mat_b.e_max)
    return float(np.mean(m.scores[np.ix_(ia, ib)]))


# --- node graphs -----------------------------------------------------------

CATEGORY_COLORS = {
    Category.METALS_ALLOYS: "gold",
    Category.CERAMICS_GLASSES: "lightskyblue",
    Category.POLYMERS_ELASTOMERS: "palegreen",
    Category.COMPOSITES_FOAMS_NATURAL: "sandybrown",
}


@dataclass
class NodeGraph:
    nodes: list[MaterialRecord]
    edges: list[tuple[int, int, float]]
    phi: float = PHI_DEFAULT
    radius: list[float] = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        k = len(self.nodes)
        return k * (k - 1) // 2

    def indistinguishable_fraction(self) -> float:
        return len(self.edges) / self.n_pairs if self.n_pairs else 0.0


def build_node_graph(db: MaterialDatabase, m: F1Matrix, phi: float = PHI_DEFAULT) -> NodeGraph:
    """One node per material; an edge joins every pair whose average F1 is below phi."""
    nodes = list(db)
    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            avg = material_pair_avg_f1(m, nodes[i], nodes[j])
            if avg < phi:
                edges.append((i, j, avg))
    return NodeGraph(nodes, edges, phi, [r.representative for r in nodes])


def _rescale(values, lo, hi):
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return values
    vmin, vmax = values.min(), values.max()
    if vmax == vmin:
        return np.full_like(values, 0.5 * (lo + hi))
    return lo + (values - vmin) / (vmax - vmin) * (hi - lo)


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: NodeGraph) -> str:
    """Undirected DOT text; node width tracks effusivity, edge penwidth tracks 1/avg_f1."""
    widths = _rescale(graph.radius, 0.2, 2.0)
    pens = _rescale([1.0 / w for _, _, w in graph.edges], 0.5, 5.0)
    lines = ["graph materials {", "  node [shape=circle, style=filled, fixedsize=true];"]
    for rec, w in zip(graph.nodes, widths):
        lines.append(f'  {_dot_id(rec.name)} [width={w:.4f}, fillcolor="{CATEGORY_COLORS[rec.category]}"];')
    for (i, j, avg), pw in zip(graph.edges, pens):
        lines.append(f"  {_dot_id(graph.nodes[i].name)} -- {_dot_id(graph.nodes[j].name)} "
                     f'[penwidth={pw:.4f}, label="{avg:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- serialization ---------------------------------------------------------

def _conditions_dict(sensor, cond, sigma):
    return {
        "sensor": {"e_sens": sensor.e_sens, "alpha_sens": sensor.alpha_sens,
                   "thermistor_depth": sensor.thermistor_depth,
                   "sample_rate": sensor.sample_rate, "noise_sigma": sensor.noise_sigma},
        "cond": {"t_sens0": cond.t_sens0, "t_obj0": cond.t_obj0, "t_contact": cond.t_contact},
        "sigma": sigma,
    }


def _write_square_csv(path, grid, values, fmt):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(v)) for v in grid.midpoints()])
        for row in values:
            w.writerow([fmt(v) for v in row])


def write_matrix(m: F1Matrix | BinaryMap, stem, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (header row of midpoints, n x n values) and ``<stem>.json``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    if isinstance(m, BinaryMap):
        _write_square_csv(csv_path, m.grid, m.bits, lambda v: str(int(v)))
        envelope = {"kind": "binary_map", "phi": m.phi}
    else:
        _write_square_csv(csv_path, m.grid, m.scores, lambda v: repr(float(v)))
        envelope = {"kind": "f1_matrix", "source": m.source,
                    "conditions": _conditions_dict(m.sensor, m.cond, m.sigma)}
    envelope["grid"] = m.grid.to_dict()
    envelope["csv"] = csv_path.name
    if extra:
        envelope.update(extra)
    json_path.write_text(json.dumps(envelope, indent=2) + "\n")
    return csv_path, json_path


def read_matrix(path) -> F1Matrix | BinaryMap:
    """Read a matrix or binary map from its JSON envelope (or the CSV beside it)."""
    json_path = Path(path).with_suffix(".json")
    env = json.loads(json_path.read_text())
    grid = EffusivityGrid(**env["grid"])
    values = np.loadtxt(json_path.parent / env["csv"], delimiter=",", skiprows=1, ndmin=2)
    if env["kind"] == "binary_map":
        return BinaryMap(grid, values.astype(np.int8), env["phi"])
    c = env["conditions"]
    return F1Matrix(grid, values, SensorParams(**c["sensor"]), ContactConditions(**c["cond"]),
                    c["sigma"], env.get("source", "model"))
