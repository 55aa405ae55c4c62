"""Static collision geometry: analytic signed-distance colliders.

Four shapes cover every fixture in the toolkit: a half-space plane,
a solid capped cylinder (pedestal / platform), an open-top box with a
lowered front lip (container and spoon tray), and a truncated-cone
funnel shell whose exit is closed by a gate disc until released.

Conventions
-----------
* Poses are (position, rotation); ``rotation`` maps local to world.
* Plane: solid half-space is local z <= 0, outward normal local +z.
* Cylinder: axis local +z, centered at the origin.
* Open box: interior bottom plane at local z = 0, interior spans
  |x| < hx, |y| < hy; the +x wall is the (lower) pour lip.
* Funnel: exit plane at local z = 0, cone opens upward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ColliderShapeError

_SHAPE_CODES = {
    "plane": _kernels.SHAPE_PLANE,
    "cylinder": _kernels.SHAPE_CYLINDER,
    "open_box": _kernels.SHAPE_OPEN_BOX,
    "funnel": _kernels.SHAPE_FUNNEL,
}

_DIM_NAMES = {
    "plane": (),
    "cylinder": ("radius", "half_height"),
    "open_box": ("inner_half_x", "inner_half_y", "wall_height",
                 "wall_thickness", "lip_height"),
    "funnel": ("exit_radius", "top_radius", "height", "wall_thickness"),
}


def rotation_y(angle_rad: float) -> np.ndarray:
    """Rotation about the world y axis; a positive angle tips local +x down."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _basis_from_z(z: np.ndarray) -> np.ndarray:
    """Orthonormal rotation whose third column is the given direction."""
    z = np.asarray(z, dtype=float)
    n = np.linalg.norm(z)
    if n < 1e-12:
        raise ColliderShapeError("plane normal must be non-zero")
    z = z / n
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass
class Collider:
    """One rigid SDF shape with a world pose.

    ``dims`` holds the shape-specific sizes keyed by the names in
    ``_DIM_NAMES``; all of them must be strictly positive.
    """

    shape: str
    position: np.ndarray
    rotation: np.ndarray
    dims: dict = field(default_factory=dict)
    gate_open: bool = True
    # surface finish: multipliers on the material's friction / adhesion
    # at this wall (1 = as rough and sticky as the grains, 0 = polished)
    friction_scale: float = 1.0
    adhesion_scale: float = 1.0

    def __post_init__(self):
        if self.shape not in _SHAPE_CODES:
            raise ColliderShapeError(f"unknown collider shape {self.shape!r}")
        for name in ("friction_scale", "adhesion_scale"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ColliderShapeError(
                    f"{name} must be finite and non-negative, got {v}")
            setattr(self, name, v)
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        expected = _DIM_NAMES[self.shape]
        if set(self.dims) != set(expected):
            raise ColliderShapeError(
                f"{self.shape} dims must be {sorted(expected)}, "
                f"got {sorted(self.dims)}")
        for name in expected:
            v = float(self.dims[name])
            if not np.isfinite(v) or v <= 0.0:
                raise ColliderShapeError(
                    f"{self.shape}.{name} must be positive, got {v}")
            self.dims[name] = v
        if self.shape == "funnel" and self.dims["top_radius"] < self.dims["exit_radius"]:
            raise ColliderShapeError(
                "funnel must not narrow toward the top")

    # -- constructors -------------------------------------------------

    @classmethod
    def plane(cls, point=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0)) -> "Collider":
        return cls("plane", np.asarray(point, float),
                   _basis_from_z(np.asarray(normal, float)), {})

    @classmethod
    def cylinder(cls, center, radius: float, half_height: float) -> "Collider":
        return cls("cylinder", np.asarray(center, float), np.eye(3),
                   {"radius": radius, "half_height": half_height})

    @classmethod
    def open_box(cls, position, inner_half_x: float, inner_half_y: float,
                 wall_height: float, wall_thickness: float,
                 lip_height: float | None = None,
                 rotation: np.ndarray | None = None) -> "Collider":
        return cls("open_box", np.asarray(position, float),
                   np.eye(3) if rotation is None else rotation,
                   {"inner_half_x": inner_half_x,
                    "inner_half_y": inner_half_y,
                    "wall_height": wall_height,
                    "wall_thickness": wall_thickness,
                    "lip_height": wall_height if lip_height is None else lip_height})

    @classmethod
    def funnel(cls, position, exit_radius: float, top_radius: float,
               height: float, wall_thickness: float,
               gate_open: bool = False, friction_scale: float = 1.0,
               adhesion_scale: float = 1.0) -> "Collider":
        return cls("funnel", np.asarray(position, float), np.eye(3),
                   {"exit_radius": exit_radius, "top_radius": top_radius,
                    "height": height, "wall_thickness": wall_thickness},
                   gate_open=gate_open, friction_scale=friction_scale,
                   adhesion_scale=adhesion_scale)

    # -- queries -------------------------------------------------------

    def sdf(self, point: Sequence[float]) -> float:
        ct, cd = pack_colliders([self])
        p = np.asarray(point, dtype=float)
        s, _, _, _ = _kernels.sdf_query(ct, cd, 0, p[0], p[1], p[2])
        return float(s)

    def normal(self, point: Sequence[float]) -> np.ndarray:
        ct, cd = pack_colliders([self])
        p = np.asarray(point, dtype=float)
        _, nx, ny, nz = _kernels.sdf_query(ct, cd, 0, p[0], p[1], p[2])
        return np.array([nx, ny, nz])

    def moved_to(self, position=None, rotation=None) -> "Collider":
        out = replace(self, dims=dict(self.dims))
        if position is not None:
            out.position = np.asarray(position, float).reshape(3)
        if rotation is not None:
            out.rotation = np.asarray(rotation, float).reshape(3, 3)
        return out

    # -- serialization ------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "dimensions": {k: self.dims[k] for k in _DIM_NAMES[self.shape]},
            "pose": {"position": [float(v) for v in self.position],
                     "rotation": [[float(v) for v in row] for row in self.rotation]},
            "gate_open": bool(self.gate_open),
            "friction_scale": self.friction_scale,
            "adhesion_scale": self.adhesion_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Collider":
        pose = d["pose"]
        return cls(d["shape"], np.asarray(pose["position"], float),
                   np.asarray(pose["rotation"], float),
                   dict(d["dimensions"]), bool(d.get("gate_open", True)),
                   friction_scale=float(d.get("friction_scale", 1.0)),
                   adhesion_scale=float(d.get("adhesion_scale", 1.0)))


def pack_colliders(colliders: Sequence[Collider]):
    """Encode colliders into the flat arrays the kernels consume."""
    n = len(colliders)
    ctypes = np.empty(n, dtype=np.int64)
    cdata = np.zeros((n, _kernels.CDATA_WIDTH), dtype=np.float64)
    for k, col in enumerate(colliders):
        ctypes[k] = _SHAPE_CODES[col.shape]
        cdata[k, 0:3] = col.position
        cdata[k, 3:12] = col.rotation.reshape(9)
        names = _DIM_NAMES[col.shape]
        for a, name in enumerate(names):
            cdata[k, 12 + a] = col.dims[name]
        cdata[k, 17] = 1.0 if col.gate_open else 0.0
        cdata[k, 18] = col.friction_scale
        cdata[k, 19] = col.adhesion_scale
    return ctypes, cdata


def scene_to_json(colliders: Sequence[Collider], indent: int | None = 2) -> str:
    return json.dumps([c.to_dict() for c in colliders], indent=indent)


def scene_from_json(text: str) -> list[Collider]:
    return [Collider.from_dict(d) for d in json.loads(text)]
