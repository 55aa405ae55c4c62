"""Virtual angle-of-repose lab.

A charge of particles is packed into a closed funnel hanging over a
circular platform, the gate is released, the powder pours and settles,
and the repose angle is read from pile height and platform diameter:

    AoR = arctan(2 h / d_base)

The funnel rises during the pour so its exit stays a couple of
diameters above the growing heap (the classic rising-funnel method:
constant, near-zero drop energy and no choking against the pile). After
the charge drains the funnel is lifted clear while shaking, the table
gets a short decaying lateral tap to shed metastable spikes, and the
pile is settled and measured.

Pile height comes from particle coordinates directly (highest center
over the platform disc); `pile_height_from_points` additionally exposes
the apex/tip distance reading used when only two tracked points are
available.

Fixture sizes default to a desk-scale version of a funnel tester:
every span is a few dozen particle diameters so a run costs seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import JamError, RegionTooSmallError, UnknownMaterialError
from .geometry import Collider
from .params import SimParams
from .seeding import rng_for
from .solver import ParticleSystem, SimConfig


# ---------------------------------------------------------------------------
# pure geometry
# ---------------------------------------------------------------------------

def aor_from_height(h: float, d_base: float) -> float:
    """Repose angle in degrees from pile height and base diameter."""
    if not (d_base > 0.0):
        raise ValueError(f"d_base must be positive, got {d_base}")
    if h < 0.0:
        raise ValueError(f"height must be non-negative, got {h}")
    return math.degrees(math.atan(2.0 * h / d_base))


def pile_height_from_points(p_apex, p_tip, drop_distance: float) -> float:
    """Pile height as drop distance minus the apex-to-tip distance.

    May return a negative value on inconsistent inputs; callers decide
    how to handle that.
    """
    if not (drop_distance > 0.0):
        raise ValueError(f"drop_distance must be positive, got {drop_distance}")
    p_apex = np.asarray(p_apex, dtype=float)
    p_tip = np.asarray(p_tip, dtype=float)
    return float(drop_distance - np.linalg.norm(p_apex - p_tip))


# ---------------------------------------------------------------------------
# scene
# ---------------------------------------------------------------------------

@dataclass
class AoRScene:
    """Funnel-over-platform measurement fixture (desk scale).

    The platform top surface is the z = 0 plane with the funnel exit
    centered `drop_distance` above it. A wide catch basin under the
    platform keeps spilled particles contained.
    """

    funnel_exit_diameter: float = 5.0e-3
    base_diameter: float = 7.0e-3
    drop_distance: float = 3.0e-4
    load_count: int = 2000

    # secondary fixture geometry. The funnel is a straight wide tube
    # used slump-test style: it starts with its mouth nearly on the
    # platform and is lifted during the pour, releasing material by rim
    # shear. A narrow-stem funnel arches solid for cohesive charges
    # (real powder ratholing) and can never measure them; with the bore
    # many diameters wide no arch can span it, and even a fully plugged
    # tube ends as a free-standing column, which is still a material
    # reading. The bore must not taper: a cone that widens upward
    # constricts around the charge as it rises and extrudes it out the
    # top like a reverse syringe
    funnel_height: float = 7.0e-3
    funnel_top_diameter: float = 5.0e-3
    wall_thickness: float = 5.0e-4
    basin_half_width: float = 1.2e-2
    basin_depth: float = 3.0e-3

    # pour protocol
    pour_timeout: float = 6.0          # seconds of simulated time
    settle_v_eps: float = 3e-3         # m/s
    fill_settle_time: float = 0.3      # seconds
    final_settle_time: float = 2.0     # seconds
    stall_window: float = 0.05         # seconds between outflow checks
    vibration_diameters: float = 0.5   # assist amplitude, in diameters
    whirl_diameters: float = 0.0       # continuous feed-whirl amplitude
    vibration_hz: float = 120.0
    tip_clearance_diameters: float = 1.8    # exit height kept above heap
    rise_rate_diameters: float = 0.004      # per step, while pouring
    retract_rate_diameters: float = 0.06   # per step, after pouring
    tap_time: float = 0.6                  # seconds of table shaking
    tap_diameters: float = 0.4             # tap amplitude, in diameters
    tap_hz: float = 60.0

    def __post_init__(self):
        if self.base_diameter <= 0 or self.drop_distance <= 0:
            raise ValueError("base_diameter and drop_distance must be positive")
        if self.load_count < 1:
            raise ValueError("load_count must be >= 1")
        if self.funnel_top_diameter < self.funnel_exit_diameter:
            raise ValueError("funnel must not narrow toward the top")

    def validate_for(self, params: SimParams) -> None:
        if self.funnel_exit_diameter <= params.diameter_m:
            raise ValueError(
                f"funnel exit {self.funnel_exit_diameter} must exceed the "
                f"particle diameter {params.diameter_m}")

    @property
    def tip(self) -> np.ndarray:
        """Funnel exit center — the reference point for Eq.-style height."""
        return np.array([0.0, 0.0, self.drop_distance])

    def build_colliders(self) -> list[Collider]:
        r_base = 0.5 * self.base_diameter
        platform = Collider.cylinder(
            center=(0.0, 0.0, -0.5 * self.basin_depth),
            radius=r_base, half_height=0.5 * self.basin_depth)
        basin = Collider.open_box(
            position=(0.0, 0.0, -self.basin_depth),
            inner_half_x=self.basin_half_width,
            inner_half_y=self.basin_half_width,
            wall_height=2.0 * self.funnel_height,
            wall_thickness=1e-3)
        # polished bore: the lift must shear the charge off at the rim,
        # not carry it upward through wall drag, so the funnel surface
        # contributes no friction and no adhesion; platform and basin
        # stay as rough as the material itself
        funnel = Collider.funnel(
            position=(0.0, 0.0, self.drop_distance),
            exit_radius=0.5 * self.funnel_exit_diameter,
            top_radius=0.5 * self.funnel_top_diameter,
            height=self.funnel_height,
            wall_thickness=self.wall_thickness,
            gate_open=False,
            friction_scale=0.0, adhesion_scale=0.0)
        return [platform, basin, funnel]

    def fill_positions(self, diameter: float,
                       rng: np.random.Generator) -> np.ndarray:
        """Layered jittered-grid packing inside the closed funnel."""
        spacing = 1.1 * diameter
        jitter = 0.45 * (spacing - diameter)
        r_exit = 0.5 * self.funnel_exit_diameter
        r_top = 0.5 * self.funnel_top_diameter
        slope = (r_top - r_exit) / self.funnel_height
        # margins from the wall centerline account for shell thickness,
        # particle radius, jitter, and the wall slant
        wall_margin = 1.25 * (0.5 * self.wall_thickness + 0.5 * diameter
                              + jitter)
        z0 = 0.5 * self.wall_thickness + 0.5 * diameter + jitter + 0.1 * diameter
        z_max = self.funnel_height - 0.5 * diameter

        sites = []
        z = z0
        while len(sites) < self.load_count and z <= z_max:
            r_here = r_exit + slope * z - wall_margin
            if r_here > 0.0:
                n_half = int(math.floor(r_here / spacing))
                for iy in range(-n_half, n_half + 1):
                    y = iy * spacing
                    for ix in range(-n_half, n_half + 1):
                        x = ix * spacing
                        if x * x + y * y <= r_here * r_here:
                            sites.append((x, y, z))
            z += spacing
        if len(sites) < 0.25 * self.load_count:
            raise RegionTooSmallError(
                f"funnel holds at most {len(sites)} particles, "
                f"load_count is {self.load_count}")
        # load_count is a ceiling: with coarse grains the fixture holds
        # fewer, and a smaller charge is still a valid reading
        pts = np.asarray(sites[:self.load_count], dtype=float)
        pts += rng.uniform(-jitter, jitter, size=pts.shape)
        pts[:, 2] += self.drop_distance  # local funnel frame -> world
        return pts

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "AoRScene":
        return cls(**d)


@dataclass
class PileMetrics:
    """Outcome of one pour: pile height, angle, and apex location."""

    height: float
    base_diameter: float
    aor_degrees: float
    apex: np.ndarray

    @property
    def ratio(self) -> float:
        """The raw 2h/d_base tangent behind aor_degrees."""
        return 2.0 * self.height / self.base_diameter

    def to_dict(self) -> dict:
        return {"height": self.height,
                "base_diameter": self.base_diameter,
                "aor_degrees": self.aor_degrees,
                "ratio": self.ratio,
                "apex": [float(v) for v in np.asarray(self.apex)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# the measurement task
# ---------------------------------------------------------------------------

def _count_in_funnel(system: ParticleSystem, scene: AoRScene,
                     gate_z: float) -> int:
    pos = system.pos
    in_r = (pos[:, 0] ** 2 + pos[:, 1] ** 2
            <= (0.5 * scene.funnel_top_diameter) ** 2)
    in_z = pos[:, 2] > gate_z
    return int(np.count_nonzero(in_r & in_z))


def _heap_top_under_mouth(system: ParticleSystem, scene: AoRScene,
                          gate_z: float, diameter: float) -> float:
    """Robust top of the heap inside the spout footprint.

    The k-th highest center is used instead of the maximum so a lone
    perched particle cannot ratchet the funnel upward.
    """
    pos = system.pos
    r_spot = 0.5 * scene.funnel_exit_diameter + 2.0 * diameter
    mask = (pos[:, 0] ** 2 + pos[:, 1] ** 2 <= r_spot * r_spot)
    mask &= (pos[:, 2] > 0.0) & (pos[:, 2] < gate_z)
    z = pos[mask, 2]
    if z.size == 0:
        return 0.0
    k = min(8, z.size)
    return float(np.partition(z, -k)[-k])


def run_aor_task(params: SimParams, scene: AoRScene | None = None,
                 seed: int = 0, config: SimConfig | None = None,
                 return_system: bool = False):
    """Pour a charge through the funnel and measure the repose angle.

    Deterministic for fixed (params, scene, seed). Raises JamError when
    less than half of the charge leaves the funnel before the pour
    timeout; callers typically record that as a failed evaluation.
    """
    params.validate()
    scene = scene if scene is not None else AoRScene()
    scene.validate_for(params)
    config = config if config is not None else SimConfig()

    rng = rng_for(seed, "aor-fill")
    colliders = scene.build_colliders()
    system = ParticleSystem(params=params, config=config, colliders=colliders)
    system.add_particles(scene.fill_positions(params.diameter_m, rng))

    dt = config.dt
    d = params.diameter_m
    system.step(1)  # pairs/status warm-up keeps later loops uniform
    system.settle(v_eps=scene.settle_v_eps,
                  max_steps=int(scene.fill_settle_time / dt))

    # release and pour: the funnel ratchets upward to keep its exit just
    # above the heap, and vibrates sideways whenever outflow stalls
    funnel_id = next(i for i, c in enumerate(colliders)
                     if c.shape == "funnel")
    funnel = colliders[funnel_id]
    home_x = float(funnel.position[0])
    home_y = float(funnel.position[1])
    system.set_gate(funnel_id, True)

    chunk = max(int(scene.stall_window / dt), 1)
    max_pour_steps = int(scene.pour_timeout / dt)
    amp = scene.vibration_diameters * d
    whirl = scene.whirl_diameters * d
    omega = 2.0 * math.pi * scene.vibration_hz
    clearance = scene.tip_clearance_diameters * d
    rise_cap = scene.rise_rate_diameters * d
    z_park = scene.drop_distance + scene.funnel_height

    last_inside = _count_in_funnel(system, scene, funnel.position[2])
    vibrate = False
    stalled_chunks = 0
    steps_poured = 0
    while steps_poured < max_pour_steps:
        gate_z = float(funnel.position[2])
        inside_now = _count_in_funnel(system, scene, gate_z)
        if inside_now == 0:
            break
        if stalled_chunks * chunk * dt >= 0.4:
            # vibration never restored flow: the stem is arched solid;
            # whatever poured out is the measurement
            break
        heap_top = _heap_top_under_mouth(system, scene, gate_z, d)
        rise_left = max(0.0, clearance - (gate_z - heap_top))
        rise_left = min(rise_left, z_park - gate_z)
        dz = min(rise_cap, rise_left / chunk) if rise_left > 0.0 else 0.0
        for k in range(chunk):
            # the spout whirls continuously like a vibratory feeder, so
            # every seed sees the same delivery agitation instead of a
            # chattering stall-triggered assist; genuine stalls still
            # get the larger assist amplitude on top
            a = whirl + (amp if vibrate else 0.0)
            t = (steps_poured + k) * dt
            funnel.position[0] = home_x + a * math.sin(omega * t)
            funnel.position[1] = home_y + a * math.cos(omega * t)
            if rise_left > 0.0:
                step_dz = min(dz, rise_left)
                funnel.position[2] += step_dz
                rise_left -= step_dz
            system.step(1)
        steps_poured += chunk
        new_inside = _count_in_funnel(system, scene, funnel.position[2])
        stalled = (inside_now - new_inside) < 2
        vibrate = new_inside > 0 and stalled
        stalled_chunks = stalled_chunks + 1 if stalled else 0
        last_inside = new_inside

    # discharged means below the spout: a charge that climbed out of the
    # funnel rim (vibration can pump a bonded clump up the cone in
    # extreme parameter corners) is an instrument failure, not a pile
    exited = int(np.count_nonzero(system.pos[:, 2]
                                  < funnel.position[2] - 0.5 * d))
    if exited < 0.5 * system.n:
        raise JamError(
            f"only {exited}/{system.n} particles discharged "
            f"within {scene.pour_timeout}s")

    # lift the funnel clear of the heap with a plain vertical rise. Any
    # lateral shaking here would rattle the bore around whatever is
    # still inside it, and on a dense bonded charge the gravity-biased
    # contact split turns that rattling into a steady upward ratchet
    # (the blob climbs out of the fixture); whatever stays inside the
    # parked funnel is not pile
    retract_cap = scene.retract_rate_diameters * d
    k = 0
    while funnel.position[2] < z_park:
        if k % 10 == 0 and funnel.position[2] > 0:
            gate_z = float(funnel.position[2])
            if (_count_in_funnel(system, scene, gate_z) == 0
                    and gate_z - _heap_top_under_mouth(system, scene,
                                                       gate_z, d) > 3.0 * d):
                # bore empty and well clear of the heap: the rest of the
                # lift cannot touch anything, so park outright. The
                # funnel must always finish at z_park or remnants hide
                # below the measurement cutoff
                funnel.position[2] = z_park
                break
        funnel.position[2] = min(funnel.position[2] + retract_cap, z_park)
        system.step(1)
        k += 1
    funnel.position[0] = home_x
    funnel.position[1] = home_y

    # a charge still threaded through the parked funnel was never
    # poured; measuring the heap under it would report delivery
    # plumbing, not material
    stuck = _count_in_funnel(system, scene, funnel.position[2])
    if stuck > 0.25 * system.n:
        raise JamError(
            f"{stuck}/{system.n} particles stuck in the funnel "
            "after retraction")

    # decaying lateral tap of the table: metastable spikes and loose
    # perched particles shed; a genuinely stable slope survives. The
    # two axes run at incommensurate frequencies so the shakedown is
    # azimuthally even and the pile keeps no directional crust memory
    tap_steps = int(scene.tap_time / dt)
    table = [c for c in colliders if c.shape in ("cylinder", "open_box")]
    table_home = [(float(c.position[0]), float(c.position[1]))
                  for c in table]
    omega_x = 2.0 * math.pi * scene.tap_hz
    omega_y = 2.0 * math.pi * scene.tap_hz * 0.712
    tap_amp = scene.tap_diameters * d
    for k in range(tap_steps):
        a = tap_amp * (1.0 - k / tap_steps)
        x = a * math.sin(omega_x * k * dt)
        y = a * math.sin(omega_y * k * dt)
        for c, (hx, hy) in zip(table, table_home):
            c.position[0] = hx + x
            c.position[1] = hy + y
        system.step(1)
    for c, (hx, hy) in zip(table, table_home):
        c.position[0] = hx
        c.position[1] = hy

    # the final settle runs at doubled projection accuracy: pour
    # impacts leave embedded pairs that the per-pour iteration budget
    # relaxes too slowly, and the measured state should satisfy the
    # post-settle overlap bound
    pour_config = system.config
    system.config = replace(pour_config,
                            iterations=2 * pour_config.iterations)
    try:
        system.settle(v_eps=scene.settle_v_eps,
                      max_steps=int(scene.final_settle_time / dt))
    finally:
        system.config = pour_config

    over = system.in_cylinder((0.0, 0.0), 0.5 * scene.base_diameter)
    over &= system.pos[:, 2] > 0.0
    # exclude any remnant riding inside the parked funnel
    over &= system.pos[:, 2] < funnel.position[2] - scene.wall_thickness
    if np.any(over):
        apex = system.pos[over][np.argmax(system.pos[over][:, 2])].copy()
        height = float(apex[2])
    else:
        apex = np.array([0.0, 0.0, 0.0])
        height = 0.0
    metrics = PileMetrics(height=height, base_diameter=scene.base_diameter,
                          aor_degrees=aor_from_height(height,
                                                      scene.base_diameter),
                          apex=apex)
    if return_system:
        return metrics, system
    return metrics


# ---------------------------------------------------------------------------
# measurement targets
# ---------------------------------------------------------------------------

def load_materials() -> list[dict]:
    """Bundled flowability targets (automated-measurement column)."""
    text = resources.files("flip").joinpath("data/materials.json").read_text()
    return json.loads(text)


def material_target(name: str) -> dict:
    for rec in load_materials():
        if rec["name"] == name:
            return rec
    known = ", ".join(r["name"] for r in load_materials())
    raise UnknownMaterialError(f"unknown material {name!r}; known: {known}")


def measure_A_real(record: dict) -> float:
    """Target repose angle from a measurement record."""
    try:
        return float(record["aor_degrees_mean"])
    except KeyError as exc:
        raise UnknownMaterialError(
            f"measurement record lacks aor_degrees_mean: {record!r}") from exc
