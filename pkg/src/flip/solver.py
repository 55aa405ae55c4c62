"""Position-based particle solver.

The integration scheme is the usual position-projection loop: damp and
predict, find neighbor pairs on a uniform hash grid, run a few
Gauss-Seidel passes over pair and collider constraints, then recover
velocities from effective displacement. All loops run in fixed index
order, so a run is bit-reproducible for a given initial state.

Friction follows the displacement-clamp formulation: the tangential
component of this step's relative displacement at a contact is removed
entirely while below the Coulomb cap (static), and scaled down to the
cap beyond it (kinetic). Cohesion attracts pairs inside an interaction
shell back toward contact; adhesion does the same against collider
surfaces, scaled by the boundary-affinity parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (ColliderShapeError, NumericalBlowupError,
                     RegionTooSmallError)
from .geometry import Collider, pack_colliders
from .params import SimParams

GRAVITY = 9.81  # m/s^2

# Reference step the damping coefficient is expressed against; using a
# fixed reference keeps a given `damping` value meaningful when dt changes.
DT_REF = 1.0 / 240.0


@dataclass
class SimConfig:
    """Solver-level knobs, distinct from the calibrated material params."""

    dt: float = 1.0 / 2400.0
    iterations: int = 2
    cohesion_radius_multiplier: float = 1.5
    # speed clamp in diameters per step; acts as a terminal velocity,
    # keeping impacts gentle and fast particles from tunneling through
    # thin collider walls
    max_speed_diameters: float = 0.15
    world_bound: float = 1.0
    # bond gains: fraction of a pair's (or particle-surface) separation
    # rate removed per iteration, scaled by the material parameters
    k_cohesion: float = 0.5
    adhesion_gain: float = 0.4
    # load-independent floor (in diameters) of the pair Coulomb cap.
    # Nonzero values couple an avalanching surface layer to the bulk
    # underneath (the slide entrains the core instead of shearing off)
    # and make heaps *flatter*; kept as a knob but off by default
    interlock_diameters: float = 0.0
    # load-independent floor (in diameters) of the collider Coulomb cap
    wall_floor_diameters: float = 0.0
    # pair friction also acts in this shell beyond touching when > 0;
    # same entrainment caveat as interlock_diameters
    friction_shell_diameters: float = 0.0
    # per-contact, per-step fraction of relative tangential *velocity*
    # removed at contacts (kinetic friction), scaled by the friction
    # coefficient. Position projection only cancels the normal
    # component, so without this settling packings ring for a long time
    # and avalanches overshoot far past their arrest slope
    kinetic_friction_scale: float = 0.25
    # static tensile bond: pairs separated by a small gap are pulled
    # back toward contact with a per-iteration budget of
    # bond_strength * cohesion diameters, capped by the gap. The
    # separation-rate damping below only resists *motion*; this gives
    # cohesive powder an actual yield strength, which is what lets its
    # heap stand steeper than the ~25 degree pocket-capture limit of
    # smooth cohesionless spheres
    bond_strength: float = 0.01
    bond_reach_multiplier: float = 1.08
    # shear strength of that bond: relative *tangential* displacement of
    # pairs inside the bond reach is cancelled up to a per-iteration cap
    # of bond_shear_scale * cohesion diameters (the bond yields beyond
    # the cap). Without it the bond network has no rigidity: gap-state
    # pairs feel no friction, so a bonded blob slowly squashes flat by
    # sliding through gap states no matter how strong the normal pull is
    bond_shear_scale: float = 0.02
    # cap on the contact-depth term of the Coulomb clamp: without it a
    # deeply interpenetrated cluster welds itself solid and never
    # shears apart while it relaxes
    friction_pen_clamp_diameters: float = 0.08
    # over-relaxation of the pair non-penetration projection; with the
    # gravity-biased split 1.0 is already convergent, > 1 trades a bit
    # of bounce for faster stack relaxation
    sor_omega: float = 1.0
    # gravity-aware share of the pair projection given to the upper
    # particle (shock propagation). 0 splits equally and lets tall
    # columns interpenetrate; 1 makes even frictionless towers rigid.
    stack_bias: float = 0.5
    adhesion_offset_to_range: float = 10.0
    max_pairs_per_particle: int = 96

    def validate(self) -> None:
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.cohesion_radius_multiplier <= 1.0:
            raise ValueError("cohesion_radius_multiplier must exceed 1")


def spawn_block_positions(count: int, lo, hi, diameter: float,
                          rng: np.random.Generator,
                          spacing_factor: float = 1.1) -> np.ndarray:
    """Jittered-grid positions for `count` particles inside an AABB.

    Grid sites are filled center-outward; jitter is small enough that no
    pair can start closer than one diameter. Raises RegionTooSmallError
    if the box cannot hold `count` non-overlapping particles.
    """
    lo = np.asarray(lo, dtype=float).reshape(3)
    hi = np.asarray(hi, dtype=float).reshape(3)
    if count < 1:
        raise ValueError("count must be >= 1")
    extent = hi - lo
    spacing = spacing_factor * diameter
    n_axis = np.zeros(3, dtype=int)
    for a in range(3):
        if extent[a] >= diameter:
            n_axis[a] = int(np.floor((extent[a] - diameter) / spacing)) + 1
    capacity = int(np.prod(n_axis))
    if capacity < count:
        raise RegionTooSmallError(
            f"region holds at most {capacity} particles "
            f"(grid {tuple(n_axis)}), requested {count}")

    slack = (extent - diameter) - (n_axis - 1) * spacing
    start = lo + 0.5 * diameter + 0.5 * slack
    ix, iy, iz = np.meshgrid(np.arange(n_axis[0]), np.arange(n_axis[1]),
                             np.arange(n_axis[2]), indexing="ij")
    sites = start + spacing * np.stack(
        [ix.ravel(), iy.ravel(), iz.ravel()], axis=1).astype(float)

    center = 0.5 * (lo + hi)
    d2 = np.sum((sites - center) ** 2, axis=1)
    order = np.argsort(d2, kind="stable")
    chosen = sites[order[:count]]

    jitter_amp = np.minimum(0.45 * (spacing - diameter), 0.5 * slack)
    jitter_amp = np.maximum(jitter_amp, 0.0)
    chosen = chosen + rng.uniform(-1.0, 1.0, size=(count, 3)) * jitter_amp
    return chosen


def spawn_block(region, count: int, params: SimParams, seed: int,
                config: SimConfig | None = None,
                colliders: list[Collider] | None = None) -> "ParticleSystem":
    """New system with `count` particles on a jittered grid in `region`.

    `region` is an (lo, hi) AABB pair in meters. Velocities start at
    zero; placement is deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    pos = spawn_block_positions(count, region[0], region[1],
                                params.diameter_m, rng)
    return ParticleSystem(params=params,
                          config=config if config is not None else SimConfig(),
                          colliders=list(colliders) if colliders else [],
                          pos=pos, vel=np.zeros_like(pos))


@dataclass
class ParticleSystem:
    """Mutable particle state plus the static collision scene."""

    params: SimParams
    config: SimConfig = field(default_factory=SimConfig)
    colliders: list[Collider] = field(default_factory=list)
    pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    vel: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    step_count: int = 0

    def __post_init__(self):
        self.params.validate()
        self.config.validate()
        self.pos = np.ascontiguousarray(self.pos, dtype=np.float64)
        self.vel = np.ascontiguousarray(self.vel, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(params=self.params, config=self.config,
                              colliders=list(self.colliders),
                              pos=self.pos.copy(), vel=self.vel.copy(),
                              step_count=self.step_count)

    # -- population ----------------------------------------------------

    def add_particles(self, pos: np.ndarray, vel: np.ndarray | None = None):
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        vel = np.zeros_like(pos) if vel is None else np.atleast_2d(
            np.asarray(vel, dtype=np.float64))
        self.pos = np.ascontiguousarray(np.vstack([self.pos, pos]))
        self.vel = np.ascontiguousarray(np.vstack([self.vel, vel]))

    def spawn_block(self, count: int, lo, hi, rng: np.random.Generator,
                    spacing_factor: float = 1.1) -> None:
        self.add_particles(spawn_block_positions(
            count, lo, hi, self.params.diameter_m, rng, spacing_factor))

    # -- stepping -------------------------------------------------------

    def _kernel_args(self):
        p = self.params
        c = self.config
        d = p.diameter_m
        damp = 1.0 - p.damping * (c.dt / DT_REF)
        damp = min(max(damp, 0.0), 1.0)
        adhesion_range = p.adhesion_offset_scale * c.adhesion_offset_to_range
        adhesion_strength = min(
            c.adhesion_gain * p.adhesion * p.particle_adhesion_scale, 0.95)
        if adhesion_range <= 0.0:
            adhesion_strength = 0.0
        g_eff = GRAVITY * p.gravity_scale
        return dict(
            diameter=d,
            friction=p.friction,
            floor_pair=c.interlock_diameters * d,
            floor_col=c.wall_floor_diameters * d,
            friction_pen_clamp=c.friction_pen_clamp_diameters * d,
            friction_shell=c.friction_shell_diameters * d,
            kinetic_scale=c.kinetic_friction_scale,
            bond_pull=c.bond_strength * p.cohesion * d,
            bond_reach=c.bond_reach_multiplier * d,
            bond_shear=c.bond_shear_scale * p.cohesion * d,
            sor_omega=c.sor_omega,
            stack_bias=c.stack_bias,
            cohesion=p.cohesion,
            k_cohesion=c.k_cohesion,
            cohesion_radius=d * c.cohesion_radius_multiplier,
            adhesion_strength=adhesion_strength,
            adhesion_range=adhesion_range,
            n_iters=c.iterations,
            dt=c.dt,
            g_eff=g_eff,
            damp_factor=damp,
            max_speed=c.max_speed_diameters * d / c.dt,
            max_pairs=c.max_pairs_per_particle * max(self.n, 1) + 64,
            world_bound=c.world_bound,
        )

    def step(self, n_steps: int = 1) -> None:
        """Advance the simulation; raises on numerical blowup."""
        if self.n == 0:
            self.step_count += n_steps
            return
        ctypes, cdata = pack_colliders(self.colliders)
        args = self._kernel_args()
        prev = np.empty_like(self.pos)
        for _ in range(n_steps):
            status = _kernels.step_kernel(
                self.pos, self.vel, prev, ctypes, cdata, **args)
            self.step_count += 1
            if status == 1:
                raise NumericalBlowupError(
                    f"non-finite or out-of-world position at step "
                    f"{self.step_count}")
            if status == 2:
                raise NumericalBlowupError(
                    f"neighbor pair overflow at step {self.step_count} "
                    f"(severe compression)")

    def settle(self, v_eps: float = 3e-3, max_steps: int = 2000) -> int:
        """Step until every particle is slower than v_eps (m/s).

        The speed test runs before each step, so a system already at
        rest uses zero steps. Returns the number of steps taken; hitting
        max_steps is not an error.
        """
        for used in range(max_steps):
            if self.max_speed() <= v_eps:
                return used
            self.step()
        return max_steps

    # -- gate control ----------------------------------------------------

    def set_gate(self, collider_id: int, open_: bool) -> None:
        """Toggle the gate of a funnel collider; other shapes are an error."""
        col = self.colliders[collider_id]
        if col.shape != "funnel":
            raise ColliderShapeError(
                f"collider {collider_id} is a {col.shape}, only funnels "
                f"have gates")
        col.gate_open = bool(open_)

    # -- measurements -----------------------------------------------------

    def max_speed(self) -> float:
        if self.n == 0:
            return 0.0
        return float(_kernels.max_speed_of(self.vel))

    def kinetic_energy(self) -> float:
        """Total kinetic energy in joules."""
        m_kg = self.params.particle_mass * 1e-9
        return float(0.5 * m_kg * np.sum(self.vel ** 2))

    def max_overlap(self) -> float:
        """Worst pairwise penetration depth in meters."""
        if self.n < 2:
            return 0.0
        return float(_kernels.max_pair_overlap(self.pos,
                                               self.params.diameter_m))

    def max_boundary_penetration(self) -> float:
        if self.n == 0 or not self.colliders:
            return 0.0
        ctypes, cdata = pack_colliders(self.colliders)
        return float(_kernels.max_collider_penetration(
            self.pos, ctypes, cdata, 0.5 * self.params.diameter_m))

    def count_in_region(self, region) -> int:
        lo = np.asarray(region[0], dtype=float)
        hi = np.asarray(region[1], dtype=float)
        inside = np.all((self.pos >= lo) & (self.pos <= hi), axis=1)
        return int(np.count_nonzero(inside))

    def mass_in_region(self, region) -> float:
        """Mass of particles whose centers lie in the AABB, in mg."""
        return self.count_in_region(region) * self.params.mass_mg

    def in_cylinder(self, center_xy, radius: float) -> np.ndarray:
        dxy = self.pos[:, :2] - np.asarray(center_xy, dtype=float)
        return np.sum(dxy ** 2, axis=1) <= radius * radius

    def max_height_over_base(self, base_center, base_radius: float) -> float:
        """Highest particle center above the base plane, within the disc.

        Height is measured relative to base_center's z; returns 0 when no
        particle center lies over the disc.
        """
        if base_radius <= 0.0:
            raise ValueError("base_radius must be positive")
        base_center = np.asarray(base_center, dtype=float)
        mask = self.in_cylinder(base_center[:2], base_radius)
        if not np.any(mask):
            return 0.0
        return float(self.pos[mask, 2].max() - base_center[2])
