"""Forward model of a heated sensor touching a semi-infinite object.

Temperatures are carried in degrees Celsius throughout. Every expression
here is affine in temperature, so the Celsius/Kelvin choice cancels.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateNormalizationError, DomainError, EmptyTraceError
from .specfun import erfc


@dataclass(frozen=True)
class SensorParams:
    """Thermal constants and acquisition settings of the heated sensor.

    ``thermistor_depth`` is the distance of the thermistor from the contact
    surface in metres.
    """

    e_sens: float = 892.0
    alpha_sens: float = 1.19e-9
    thermistor_depth: float = 8e-5
    sample_rate: float = 200.0
    noise_sigma: float = 0.05

    def __post_init__(self):
        for name in ("e_sens", "alpha_sens", "sample_rate"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        # zero depth (thermistor on the surface) and zero noise are useful limits
        if not self.thermistor_depth >= 0:
            raise DomainError("thermistor_depth must be >= 0")
        if not self.noise_sigma >= 0:
            raise DomainError("noise_sigma must be >= 0")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def n_samples(self, t_contact: float) -> int:
        # tolerance guards products like 0.29 * 200 = 57.999...
        return int(math.floor(t_contact * self.sample_rate + 1e-9))


@dataclass(frozen=True)
class ContactConditions:
    t_sens0: float = 35.0
    t_obj0: float = 25.0
    t_contact: float = 2.0

    def __post_init__(self):
        if not self.t_contact > 0:
            raise DomainError("t_contact must be positive")
        if not self.t_sens0 > self.t_obj0:
            raise DomainError("t_sens0 must exceed t_obj0 (heat flows sensor -> object)")

    @property
    def delta_t(self) -> float:
        return self.t_sens0 - self.t_obj0


@dataclass(frozen=True)
class MaterialSample:
    effusivity: float

    def __post_init__(self):
        if not self.effusivity > 0:
            raise DomainError("effusivity must be positive")


@dataclass
class TraceMeta:
    material: str | None = None
    effusivity: float | None = None
    t_sens0: float = 35.0
    t_obj0: float = 25.0
    sample_rate: float = 200.0
    seed: int | None = None
    normalized: bool = False
    noise_scale: float = 1.0


@dataclass
class TemperatureTrace:
    times: np.ndarray
    temps: np.ndarray
    meta: TraceMeta = field(default_factory=TraceMeta)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.temps = np.asarray(self.temps, dtype=float)
        if self.times.shape != self.temps.shape or self.times.ndim != 1:
            raise DomainError("times and temps must be 1-D arrays of equal length")
        if len(self.times) < 1:
            raise EmptyTraceError("trace has no samples")
        if len(self.times) > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0):
                raise DomainError("times must be strictly increasing")
            if np.max(np.abs(steps - 1.0 / self.meta.sample_rate)) > 1e-9:
                raise DomainError("times must be uniformly spaced at 1/sample_rate")

    def __len__(self):
        return len(self.temps)


def surface_temperature(sensor: SensorParams, material: MaterialSample,
                        cond: ContactConditions) -> float:
    """Constant contact-surface temperature, the effusivity-weighted mean."""
    e_s, e_o = sensor.e_sens, material.effusivity
    return (cond.t_sens0 * e_s + cond.t_obj0 * e_o) / (e_s + e_o)


def erfc_profile(sensor: SensorParams, t):
    """erfc(x / (2 sqrt(alpha t))) with the t = 0 limit taken as 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be >= 0")
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = erfc(np.atleast_1d(sensor.thermistor_depth / (2.0 * np.sqrt(sensor.alpha_sens * t[pos]))))
    return float(out) if out.ndim == 0 else out


def mean_temperature(sensor: SensorParams, material: MaterialSample,
                     cond: ContactConditions, t):
    """Noise-free thermistor temperature at time(s) ``t`` after contact."""
    t_surf = surface_temperature(sensor, material, cond)
    profile = erfc_profile(sensor, t)
    return cond.t_sens0 + (t_surf - cond.t_sens0) * profile


def sample_times(sensor: SensorParams, t_contact: float) -> np.ndarray:
    """Sample instants t_i = i * dt for i = 1..floor(t_contact * rate)."""
    n = sensor.n_samples(t_contact)
    if n < 1:
        raise EmptyTraceError(f"t_contact={t_contact} s yields no samples at {sensor.sample_rate} Hz")
    return np.arange(1, n + 1) / sensor.sample_rate


def trace_seed(seed: int, *keys: int) -> int:
    """Derive a child seed from an experiment seed and integer keys (pair, trial, ...)."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_trace(sensor: SensorParams, material: MaterialSample,
                   cond: ContactConditions, seed: int, *,
                   name: str | None = None, t_offset: float = 0.0) -> TemperatureTrace:
    """Simulate one noisy trace. Same inputs and seed give a bit-identical trace.

    ``t_offset`` shifts the model clock: sample i is drawn at model time
    ``t_i + t_offset`` (times at or before contact read the initial temperature).
    """
    times = sample_times(sensor, cond.t_contact)
    model_t = np.clip(times + t_offset, 0.0, None)
    mean = mean_temperature(sensor, material, cond, model_t)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, size=len(times)) * sensor.noise_sigma
    meta = TraceMeta(
        material=name,
        effusivity=material.effusivity,
        t_sens0=cond.t_sens0,
        t_obj0=cond.t_obj0,
        sample_rate=sensor.sample_rate,
        seed=seed,
    )
    return TemperatureTrace(times, mean + noise, meta)


def normalize_trace(trace: TemperatureTrace, sensor: SensorParams | None = None) -> TemperatureTrace:
    """Map temperatures to (T - T_obj0) / (T_sens0 - T_obj0).

    The normalized mean curve is 1 - e_obj/(e_obj + e_sens) * erfc(...), which
    no longer depends on the initial temperatures. Noise is scaled by
    1 / (T_sens0 - T_obj0); the factor is recorded in ``meta.noise_scale``.
    """
    m = trace.meta
    if m.normalized:
        raise DomainError("trace is already normalized")
    if sensor is not None and abs(sensor.sample_rate - m.sample_rate) > 1e-9:
        raise DomainError("trace sample rate does not match sensor")
    gap = m.t_sens0 - m.t_obj0
    if gap == 0:
        raise DegenerateNormalizationError("t_sens0 equals t_obj0")
    if gap < 0:
        raise DomainError("t_sens0 must exceed t_obj0")
    meta = replace(m, normalized=True, noise_scale=1.0 / gap)
    return TemperatureTrace(trace.times.copy(), (trace.temps - m.t_obj0) / gap, meta)


def effective_varied_noise(sigma: float, t_min: float, t_max: float, t_obj0: float) -> float:
    """Noise level of normalized traces when T_sens0 is uniform on [t_min, t_max].

    Average of the per-trace scale sigma / (T - t_obj0) over the band.
    """
    if not (t_obj0 < t_min < t_max):
        raise DomainError("require t_obj0 < t_min < t_max")
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    return sigma * (math.log(t_max - t_obj0) - math.log(t_min - t_obj0)) / (t_max - t_min)


# --- trace files: CSV samples plus a JSON sidecar -------------------------

def _meta_to_json(meta: TraceMeta) -> dict:
    return {
        "material": meta.material,
        "effusivity": meta.effusivity,
        "t_sens0_c": meta.t_sens0,
        "t_obj0_c": meta.t_obj0,
        "sample_rate_hz": meta.sample_rate,
        "seed": meta.seed,
        "normalized": meta.normalized,
        "noise_scale": meta.noise_scale,
    }


def write_trace(trace: TemperatureTrace, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and its ``<path>.json`` sidecar; returns both paths."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    json_path = path.with_suffix(".json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "temp_c"])
        for t, v in zip(trace.times, trace.temps):
            w.writerow([repr(float(t)), repr(float(v))])
    json_path.write_text(json.dumps(_meta_to_json(trace.meta), indent=2) + "\n")
    return csv_path, json_path


def read_trace(path) -> TemperatureTrace:
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    json_path = path.with_suffix(".json")
    raw = json.loads(json_path.read_text())
    meta = TraceMeta(
        material=raw.get("material"),
        effusivity=raw.get("effusivity"),
        t_sens0=float(raw["t_sens0_c"]),
        t_obj0=float(raw["t_obj0_c"]),
        sample_rate=float(raw["sample_rate_hz"]),
        seed=raw.get("seed"),
        normalized=bool(raw.get("normalized", False)),
        noise_scale=float(raw.get("noise_scale", 1.0)),
    )
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    return TemperatureTrace(data[:, 0], data[:, 1], meta)


def read_trace_dir(directory) -> list[TemperatureTrace]:
    """Read every ``*.csv`` trace with a JSON sidecar in ``directory`` (sorted by name)."""
    directory = Path(directory)
    out = []
    for csv_path in sorted(directory.glob("*.csv")):
        if csv_path.with_suffix(".json").exists():
            out.append(read_trace(csv_path))
    return out


def sensor_to_dict(sensor: SensorParams) -> dict:
    return asdict(sensor)


def conditions_to_dict(cond: ContactConditions) -> dict:
    return asdict(cond)
