"""Calibration parameter vector and its admissible bounds.

The nine solver parameters form the search space for calibration. Bounds
follow the simulator limits; see ``PARAM_BOUNDS``. Lengths are millimetres
and masses micrograms at this surface; the solver converts to SI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, asdict

import numpy as np

SCHEMA_VERSION = 1

# (name, lo, hi) in declared order; this order defines the 9-D vector layout.
PARAM_BOUNDS: tuple[tuple[str, float, float], ...] = (
    ("particle_diameter", 0.22, 0.32),       # mm
    ("adhesion", 0.0, 1.3),
    ("particle_adhesion_scale", 0.0, 1.3),
    ("adhesion_offset_scale", 0.0, 0.00005),
    ("friction", 0.0, 1.3),
    ("gravity_scale", 0.3, 1.1),
    ("damping", 0.0, 1.0),
    ("cohesion", 0.0, 1.2),
    ("particle_mass", 13.0, 16.5),           # micrograms
)

PARAM_NAMES: tuple[str, ...] = tuple(name for name, _, _ in PARAM_BOUNDS)
N_PARAMS = len(PARAM_BOUNDS)


@dataclass(frozen=True)
class SimParams:
    """One point of the nine-dimensional calibration space."""

    particle_diameter: float  # mm
    adhesion: float
    particle_adhesion_scale: float
    adhesion_offset_scale: float
    friction: float
    gravity_scale: float
    damping: float
    cohesion: float
    particle_mass: float      # micrograms

    def validate(self) -> None:
        """Raise ValueError unless every field is finite and within bounds."""
        for name, lo, hi in PARAM_BOUNDS:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} is not finite: {v!r}")
            if not (lo <= v <= hi):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")

    @property
    def diameter_m(self) -> float:
        return self.particle_diameter * 1e-3

    @property
    def mass_mg(self) -> float:
        return self.particle_mass * 1e-3

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_vector(cls, vec) -> "SimParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (N_PARAMS,):
            raise ValueError(f"expected shape ({N_PARAMS},), got {vec.shape}")
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, vec)})

    @classmethod
    def midpoint(cls) -> "SimParams":
        return cls.from_vector([(lo + hi) / 2 for _, lo, hi in PARAM_BOUNDS])

    def replace(self, **kw) -> "SimParams":
        d = asdict(self)
        d.update(kw)
        return SimParams(**d)

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION}
        d.update({n: getattr(self, n) for n in PARAM_NAMES})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        extra = set(d) - set(PARAM_NAMES) - {"schema_version"}
        if extra:
            raise ValueError(f"unknown parameter fields: {sorted(extra)}")
        missing = set(PARAM_NAMES) - set(d)
        if missing:
            raise ValueError(f"missing parameter fields: {sorted(missing)}")
        return cls(**{n: float(d[n]) for n in PARAM_NAMES})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SimParams":
        return cls.from_dict(json.loads(s))


@dataclass
class Bounds:
    """Per-dimension [lo, hi] box, always a sub-box of ``PARAM_BOUNDS``."""

    lo: np.ndarray  # (9,)
    hi: np.ndarray  # (9,)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64).copy()
        self.hi = np.asarray(self.hi, dtype=np.float64).copy()
        if self.lo.shape != (N_PARAMS,) or self.hi.shape != (N_PARAMS,):
            raise ValueError("bounds must be 9-dimensional")
        if np.any(self.lo > self.hi):
            raise ValueError("lo > hi in some dimension")

    @classmethod
    def table(cls) -> "Bounds":
        """Full admissible box for the nine parameters."""
        lo = np.array([lo for _, lo, _ in PARAM_BOUNDS])
        hi = np.array([hi for _, _, hi in PARAM_BOUNDS])
        return cls(lo, hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, params: SimParams, atol: float = 0.0) -> bool:
        v = params.to_vector()
        return bool(np.all(v >= self.lo - atol) and np.all(v <= self.hi + atol))

    def clip(self, vec: np.ndarray) -> np.ndarray:
        return np.clip(vec, self.lo, self.hi)

    def to_unit(self, vec: np.ndarray) -> np.ndarray:
        """Map to the unit cube; degenerate dimensions map to 0.5."""
        w = np.where(self.width > 0, self.width, 1.0)
        u = (vec - self.lo) / w
        return np.where(self.width > 0, u, 0.5)

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.lo + u * self.width

    def intersect(self, other: "Bounds") -> "Bounds":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        return Bounds(lo, np.maximum(lo, hi))

    def copy(self) -> "Bounds":
        return Bounds(self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Bounds":
        return cls(np.asarray(d["lo"]), np.asarray(d["hi"]))


def init_bounds() -> Bounds:
    """Fresh search bounds covering the full admissible box."""
    return Bounds.table()
