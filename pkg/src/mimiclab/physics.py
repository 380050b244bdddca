"""Planar (sagittal-plane) articulated rigid-body simulator.

Bodies are trees of rectangular links joined by revolute joints, rooted at
a torso link whose pose (x, y, angle) forms the floating base. Dynamics are
computed in reduced coordinates q = [x, y, th, q_1..q_J]:

    M(q) du = Q_applied + Q_gravity + Q_contact - bias(q, u)

with M assembled from per-link Jacobians, bias holding the velocity-product
(centrifugal/Coriolis) terms, and a semi-implicit Euler update

    u' = u + dt * du,   q' = q + dt * u'.

Ground contact is a penalty spring-damper on designated foot links with a
Coulomb-capped viscous friction force. Joint angles are hard-clamped to
their limits after every step (outward velocity zeroed, which is
dissipative). Only foot links collide with the ground.

All arithmetic is float64 with a fixed operation order, so identical
(state, action, dt) inputs produce bit-identical successor states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MorphologyError, NonFiniteState

GRAVITY = 9.81  # m/s^2


@dataclass(frozen=True)
class LinkSpec:
    """One rectangular link: local x axis along `length`, COM at the center."""

    name: str
    length: float      # m
    mass: float        # kg
    inertia: float     # kg m^2 about the COM
    half_width: float  # m


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint; child angle = parent angle + rest_angle + q."""

    name: str
    parent: int
    child: int
    parent_anchor: tuple[float, float]  # m, parent link frame
    child_anchor: tuple[float, float]   # m, child link frame
    limits: tuple[float, float]         # rad, (lo, hi) on q
    torque_limit: float                 # N m
    rest_angle: float = 0.0             # rad, canonical-stand offset


@dataclass(frozen=True)
class MorphologySpec:
    name: str
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    feet: tuple[int, ...]          # link indices that collide with the ground
    torso: int                     # floating-base link index
    stand_angles: tuple[float, ...]  # rad, canonical joint angles
    stand_root_angle: float = math.pi / 2  # rad, torso local x points up
    joint_damping: float = 0.2     # N m s/rad, viscous, applied per joint

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def num_feet(self) -> int:
        return len(self.feet)

    @property
    def total_mass(self) -> float:
        return sum(l.mass for l in self.links)


@dataclass(frozen=True)
class SimConfig:
    """Integrator and contact constants; values are artifact defaults."""

    gravity: float = GRAVITY
    contact_stiffness: float = 2.0e4   # N/m
    contact_damping: float = 200.0     # N s/m
    friction_coeff: float = 1.0        # Coulomb cap mu
    friction_slope: float = 500.0      # N s/m, viscous slope below the cap


DEFAULT_SIM = SimConfig()


@dataclass
class SimState:
    """Plain-value simulator state; safe to copy across threads."""

    root_pos: np.ndarray       # (2,) m
    root_angle: float          # rad, absolute torso angle
    joint_angles: np.ndarray   # (J,) rad
    root_vel: np.ndarray       # (2,) m/s
    root_angvel: float         # rad/s
    joint_vels: np.ndarray     # (J,) rad/s
    foot_contact: np.ndarray   # (F,) 0/1
    foot_airtime: np.ndarray   # (F,) s, resets to 0 on contact
    foot_speed: np.ndarray     # (F,) m/s, contact-point speed magnitude
    torso_tilt: float          # rad, root_angle - canonical stand angle
    time: float                # s

    def copy(self) -> "SimState":
        return SimState(
            root_pos=self.root_pos.copy(),
            root_angle=self.root_angle,
            joint_angles=self.joint_angles.copy(),
            root_vel=self.root_vel.copy(),
            root_angvel=self.root_angvel,
            joint_vels=self.joint_vels.copy(),
            foot_contact=self.foot_contact.copy(),
            foot_airtime=self.foot_airtime.copy(),
            foot_speed=self.foot_speed.copy(),
            torso_tilt=self.torso_tilt,
            time=self.time,
        )


def load_morphology(path: str) -> MorphologySpec:
    """Load and validate a morphology JSON (schema in README)."""
    with open(path) as fh:
        raw = json.load(fh)
    links = tuple(
        LinkSpec(
            name=l["name"],
            length=float(l["length"]),
            mass=float(l["mass"]),
            inertia=float(l["inertia"]),
            half_width=float(l["half_width"]),
        )
        for l in raw["links"]
    )
    joints = tuple(
        JointSpec(
            name=j["name"],
            parent=int(j["parent"]),
            child=int(j["child"]),
            parent_anchor=tuple(j["parent_anchor"]),
            child_anchor=tuple(j["child_anchor"]),
            limits=tuple(j["limits"]),
            torque_limit=float(j["torque_limit"]),
            rest_angle=float(j.get("rest_angle", 0.0)),
        )
        for j in raw["joints"]
    )
    morph = MorphologySpec(
        name=raw["name"],
        links=links,
        joints=joints,
        feet=tuple(raw["feet"]),
        torso=int(raw["torso"]),
        stand_angles=tuple(raw["stand_angles"]),
        stand_root_angle=float(raw.get("stand_root_angle", math.pi / 2)),
        joint_damping=float(raw.get("joint_damping", 0.2)),
    )
    validate_morphology(morph)
    return morph


def validate_morphology(morph: MorphologySpec) -> None:
    n = len(morph.links)
    if n == 0:
        raise MorphologyError("no links")
    if not (0 <= morph.torso < n):
        raise MorphologyError("torso index out of range")
    if not morph.feet:
        raise MorphologyError("at least one foot link is required")
    for f in morph.feet:
        if not (0 <= f < n):
            raise MorphologyError(f"foot index {f} out of range")
    for l in morph.links:
        if l.length <= 0 or l.mass <= 0 or l.inertia <= 0 or l.half_width <= 0:
            raise MorphologyError(f"link {l.name}: non-positive dimension/mass")
    if len(morph.stand_angles) != len(morph.joints):
        raise MorphologyError("stand_angles length != joint count")
    # The joint graph must be a tree rooted at the torso: every non-torso
    # link is the child of exactly one joint, reachable from the torso.
    child_of = {}
    for j in morph.joints:
        if not (0 <= j.parent < n and 0 <= j.child < n):
            raise MorphologyError(f"joint {j.name}: link index out of range")
        if j.child == morph.torso:
            raise MorphologyError("torso cannot be a joint child")
        if j.child in child_of:
            raise MorphologyError(f"link {j.child} has two parent joints")
        if j.torque_limit <= 0:
            raise MorphologyError(f"joint {j.name}: non-positive torque limit")
        if j.limits[0] > j.limits[1]:
            raise MorphologyError(f"joint {j.name}: limits out of order")
        child_of[j.child] = j
    if len(child_of) != n - 1:
        raise MorphologyError("joint graph is not a spanning tree")
    reached = {morph.torso}
    frontier = [morph.torso]
    while frontier:
        link = frontier.pop()
        for j in morph.joints:
            if j.parent == link and j.child not in reached:
                reached.add(j.child)
                frontier.append(j.child)
    if len(reached) != n:
        raise MorphologyError("joint graph is not connected to the torso")
    lo = np.array([j.limits[0] for j in morph.joints])
    hi = np.array([j.limits[1] for j in morph.joints])
    sa = np.array(morph.stand_angles)
    if np.any(sa < lo) or np.any(sa > hi):
        raise MorphologyError("stand pose violates joint limits")


class _Compiled:
    """Per-morphology constants, cached so step() does no list scans."""

    __slots__ = (
        "order", "parents", "children", "dofs", "rests", "panchors",
        "canchors", "masses", "inertias", "torque_lims", "limit_lo",
        "limit_hi", "foot_links", "foot_pts", "nlinks", "ndof", "torso",
    )

    def __init__(self, morph: MorphologySpec):
        self.order = _topo_joint_order(morph)
        self.parents = [morph.joints[i].parent for i in self.order]
        self.children = [morph.joints[i].child for i in self.order]
        self.dofs = [3 + i for i in self.order]
        self.rests = [morph.joints[i].rest_angle for i in self.order]
        self.panchors = [np.asarray(morph.joints[i].parent_anchor, dtype=float)
                         for i in self.order]
        self.canchors = [np.asarray(morph.joints[i].child_anchor, dtype=float)
                         for i in self.order]
        self.masses = np.array([l.mass for l in morph.links])
        self.inertias = np.array([l.inertia for l in morph.links])
        self.torque_lims = np.array([j.torque_limit for j in morph.joints])
        self.limit_lo = np.array([j.limits[0] for j in morph.joints])
        self.limit_hi = np.array([j.limits[1] for j in morph.joints])
        self.foot_links = list(morph.feet)
        self.foot_pts = [_foot_points_local(morph.links[i]) for i in morph.feet]
        self.nlinks = len(morph.links)
        self.ndof = 3 + morph.num_joints
        self.torso = morph.torso


_COMPILED_CACHE: dict[int, tuple[MorphologySpec, _Compiled]] = {}


def _compiled(morph: MorphologySpec) -> _Compiled:
    hit = _COMPILED_CACHE.get(id(morph))
    if hit is not None and hit[0] is morph:
        return hit[1]
    comp = _Compiled(morph)
    _COMPILED_CACHE[id(morph)] = (morph, comp)
    return comp


def _topo_joint_order(morph: MorphologySpec) -> list[int]:
    """Joint indices ordered parent-before-child from the torso."""
    order = []
    placed = {morph.torso}
    pending = list(range(len(morph.joints)))
    while pending:
        progressed = False
        for idx in list(pending):
            if morph.joints[idx].parent in placed:
                order.append(idx)
                placed.add(morph.joints[idx].child)
                pending.remove(idx)
                progressed = True
        if not progressed:  # unreachable after validation
            raise MorphologyError("joint graph has a cycle")
    return order


class _Kinematics:
    """Per-link pose, Jacobians, and velocity-product accelerations."""

    __slots__ = ("angle", "pos", "omega", "vel", "jw", "jv", "avp", "rot")

    def __init__(self, nlinks: int, ndof: int):
        self.angle = np.zeros(nlinks)
        self.pos = np.zeros((nlinks, 2))
        self.omega = np.zeros(nlinks)
        self.vel = np.zeros((nlinks, 2))
        self.jw = np.zeros((nlinks, ndof))
        self.jv = np.zeros((nlinks, 2, ndof))
        self.avp = np.zeros((nlinks, 2))
        self.rot = np.zeros((nlinks, 2, 2))


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _perp(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def _forward_kinematics(
    morph: MorphologySpec, q: np.ndarray, u: np.ndarray, comp: _Compiled | None = None
) -> _Kinematics:
    if comp is None:
        comp = _compiled(morph)
    k = _Kinematics(comp.nlinks, comp.ndof)
    t = comp.torso
    k.angle[t] = q[2]
    k.pos[t] = q[0:2]
    k.omega[t] = u[2]
    k.vel[t] = u[0:2]
    k.jv[t, 0, 0] = 1.0
    k.jv[t, 1, 1] = 1.0
    k.jw[t, 2] = 1.0
    k.rot[t] = _rot(q[2])
    angle, pos, omega, vel = k.angle, k.pos, k.omega, k.vel
    jw, jv, avp, rot = k.jw, k.jv, k.avp, k.rot
    for n, ji in enumerate(comp.order):
        p, c, dof = comp.parents[n], comp.children[n], comp.dofs[n]
        a = angle[p] + comp.rests[n] + q[dof]
        angle[c] = a
        ca, sa = math.cos(a), math.sin(a)
        rot[c, 0, 0] = ca
        rot[c, 0, 1] = -sa
        rot[c, 1, 0] = sa
        rot[c, 1, 1] = ca
        ap, ac = comp.panchors[n], comp.canchors[n]
        rp = rot[p]
        r1x = rp[0, 0] * ap[0] + rp[0, 1] * ap[1]
        r1y = rp[1, 0] * ap[0] + rp[1, 1] * ap[1]
        r2x = ca * ac[0] - sa * ac[1]
        r2y = sa * ac[0] + ca * ac[1]
        pos[c, 0] = pos[p, 0] + r1x - r2x
        pos[c, 1] = pos[p, 1] + r1y - r2y
        wp = omega[p]
        wc = wp + u[dof]
        omega[c] = wc
        vel[c, 0] = vel[p, 0] - wp * r1y + wc * r2y
        vel[c, 1] = vel[p, 1] + wp * r1x - wc * r2x
        jw[c] = jw[p]
        jw[c, dof] += 1.0
        # jv_c = jv_p + perp(r1) jw_p - perp(r2) jw_c, perp(v) = (-vy, vx)
        jv[c, 0] = jv[p, 0] - r1y * jw[p] + r2y * jw[c]
        jv[c, 1] = jv[p, 1] + r1x * jw[p] - r2x * jw[c]
        # omega x (omega x r) = -omega^2 r in the plane
        wp2 = wp * wp
        wc2 = wc * wc
        avp[c, 0] = avp[p, 0] - wp2 * r1x + wc2 * r2x
        avp[c, 1] = avp[p, 1] - wp2 * r1y + wc2 * r2y
    return k


def _foot_points_local(link: LinkSpec) -> np.ndarray:
    """Two ground-contact points: the bottom corners of the rectangle."""
    return np.array(
        [[-link.length / 2.0, -link.half_width],
         [link.length / 2.0, -link.half_width]]
    )


def _state_vectors(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    q = np.concatenate(
        ([state.root_pos[0], state.root_pos[1], state.root_angle], state.joint_angles)
    )
    u = np.concatenate(
        ([state.root_vel[0], state.root_vel[1], state.root_angvel], state.joint_vels)
    )
    return q, u


def reset(morph: MorphologySpec, seed: int, cfg: SimConfig = DEFAULT_SIM) -> SimState:
    """Canonical standing pose plus a seeded joint perturbation <= 0.005 rad.

    The root height is chosen so the unperturbed stand pose is in static
    vertical equilibrium: the foot contact points penetrate the ground by
    total_weight / (stiffness * n_points).
    """
    J = morph.num_joints
    rng = np.random.default_rng(seed)
    perturb = rng.uniform(-0.005, 0.005, size=J)
    angles = np.asarray(morph.stand_angles, dtype=float) + perturb
    lo = np.array([j.limits[0] for j in morph.joints])
    hi = np.array([j.limits[1] for j in morph.joints])
    angles = np.clip(angles, lo, hi)

    state = SimState(
        root_pos=np.array([0.0, stand_height(morph, cfg)]),
        root_angle=morph.stand_root_angle,
        joint_angles=angles,
        root_vel=np.zeros(2),
        root_angvel=0.0,
        joint_vels=np.zeros(J),
        foot_contact=np.zeros(morph.num_feet),
        foot_airtime=np.zeros(morph.num_feet),
        foot_speed=np.zeros(morph.num_feet),
        torso_tilt=0.0,
        time=0.0,
    )
    # Populate contact flags for the start pose (feet are on the ground).
    q, u = _state_vectors(state)
    kin = _forward_kinematics(morph, q, u)
    for fi, link_idx in enumerate(morph.feet):
        pts = _foot_points_local(morph.links[link_idx])
        world = kin.pos[link_idx] + pts @ kin.rot[link_idx].T
        state.foot_contact[fi] = 1.0 if np.any(world[:, 1] < 0.0) else 0.0
    return state


def stand_height(morph: MorphologySpec, cfg: SimConfig = DEFAULT_SIM) -> float:
    """Root y of the canonical stand: lowest foot point rests at -penetration."""
    ndof = 3 + morph.num_joints
    q = np.zeros(ndof)
    q[2] = morph.stand_root_angle
    q[3:] = morph.stand_angles
    kin = _forward_kinematics(morph, q, np.zeros(ndof))
    lowest = math.inf
    n_points = 0
    for link_idx in morph.feet:
        pts = _foot_points_local(morph.links[link_idx])
        world = kin.pos[link_idx] + pts @ kin.rot[link_idx].T
        lowest = min(lowest, float(np.min(world[:, 1])))
        n_points += len(pts)
    penetration = morph.total_mass * cfg.gravity / (cfg.contact_stiffness * n_points)
    # root starts at y=0 in the FK above, so shift so lowest point sits at
    # -penetration
    return -lowest - penetration


def step(
    morph: MorphologySpec,
    state: SimState,
    action: np.ndarray,
    dt: float,
    cfg: SimConfig = DEFAULT_SIM,
) -> SimState:
    """Advance one semi-implicit Euler step under torques and ground contact."""
    if not (0.0 < dt <= 0.01):
        raise ValueError(f"dt must be in (0, 0.01], got {dt}")
    action = np.asarray(action, dtype=float)
    if action.shape != (morph.num_joints,):
        raise ValueError(
            f"action shape {action.shape} != ({morph.num_joints},)"
        )
    if not np.all(np.isfinite(action)):
        raise ValueError("action must be finite")

    comp = _compiled(morph)
    q, u = _state_vectors(state)
    ndof = q.shape[0]
    kin = _forward_kinematics(morph, q, u, comp)

    masses = comp.masses
    mjv = masses[:, None, None] * kin.jv
    M = np.einsum("lai,laj->ij", mjv, kin.jv)
    M += np.einsum("l,li,lj->ij", comp.inertias, kin.jw, kin.jw)
    bias = np.einsum("lai,la->i", mjv, kin.avp)
    Q = -cfg.gravity * mjv[:, 1, :].sum(axis=0)

    tau = np.clip(action, -comp.torque_lims, comp.torque_lims)
    Q[3:] += tau

    # Velocity-proportional forces (joint damping, contact damping, viscous
    # friction below the Coulomb cap) are integrated implicitly: their
    # coefficient matrices are folded into the LHS, which keeps the stiff
    # spring-damper contact stable at dt = 2 ms regardless of link inertia.
    #
    #   (M + dt*D) u' = M u + dt * (Q_explicit - bias)
    #
    # Contact points: spring part k*penetration is explicit (positional),
    # normal damping and tangential friction are rows of D. Points whose
    # realized normal force would pull (fn <= 0) are deactivated and points
    # whose friction exceeds mu*fn are re-solved with the capped force
    # applied explicitly.
    contact_pts = []  # (foot_index, jac 2 x ndof, penetration)
    new_speed = np.zeros(morph.num_feet)
    for fi, link_idx in enumerate(comp.foot_links):
        pts = comp.foot_pts[fi]
        rot = kin.rot[link_idx]
        lpos = kin.pos[link_idx]
        lvel = kin.vel[link_idx]
        w = kin.omega[link_idx]
        speeds = []
        for p_local in pts:
            rx = rot[0, 0] * p_local[0] + rot[0, 1] * p_local[1]
            ry = rot[1, 0] * p_local[0] + rot[1, 1] * p_local[1]
            vx = lvel[0] - w * ry
            vy = lvel[1] + w * rx
            speeds.append(math.hypot(vx, vy))
            py = lpos[1] + ry
            if py < 0.0:
                jac = np.empty((2, ndof))
                jac[0] = kin.jv[link_idx, 0] - ry * kin.jw[link_idx]
                jac[1] = kin.jv[link_idx, 1] + rx * kin.jw[link_idx]
                contact_pts.append((fi, jac, -py))
        new_speed[fi] = 0.5 * (speeds[0] + speeds[1])

    damping_diag = np.zeros(ndof)
    damping_diag[3:] = morph.joint_damping

    base_rhs = M @ u + dt * (Q - bias)

    def solve(active: list[tuple[int, np.ndarray, float, float]]) -> np.ndarray:
        lhs = M + dt * np.diag(damping_diag)
        rhs = base_rhs.copy()
        for fi, jac, pen, slope in active:
            rhs += (dt * cfg.contact_stiffness * pen) * jac[1]
            lhs += (dt * cfg.contact_damping) * (jac[1][:, None] * jac[1][None, :])
            lhs += (dt * slope) * (jac[0][:, None] * jac[0][None, :])
        return np.linalg.solve(lhs, rhs)

    new_contact = np.zeros(morph.num_feet)
    if not contact_pts:
        u_new = solve([])
    else:
        trial = [
            (fi, jac, pen, cfg.friction_slope) for fi, jac, pen in contact_pts
        ]
        u_trial = solve(trial)
        # Re-solve with pulling points removed and sliding points' viscous
        # slope reduced so the friction force sits on the Coulomb cone.
        active = []
        for fi, jac, pen in contact_pts:
            v_new = jac @ u_trial
            fn = cfg.contact_stiffness * pen - cfg.contact_damping * v_new[1]
            if fn <= 0.0:
                continue
            slope = cfg.friction_slope
            if slope * abs(v_new[0]) > cfg.friction_coeff * fn:
                slope = cfg.friction_coeff * fn / max(abs(v_new[0]), 1e-9)
            active.append((fi, jac, pen, slope))
        u_new = solve(active)
        for fi, jac, pen, slope in active:
            v_new = jac @ u_new
            fn = cfg.contact_stiffness * pen - cfg.contact_damping * v_new[1]
            if fn > 0.0:
                new_contact[fi] = 1.0
    q_new = q + dt * u_new

    # Hard joint limits: snap the angle back and stop outward motion with an
    # M-consistent internal impulse (a pure joint-torque impulse), which
    # conserves linear and angular momentum and never adds kinetic energy.
    stopped = []
    for jidx, j in enumerate(morph.joints):
        dof = 3 + jidx
        if q_new[dof] < j.limits[0]:
            q_new[dof] = j.limits[0]
            if u_new[dof] < 0.0:
                stopped.append(dof)
        elif q_new[dof] > j.limits[1]:
            q_new[dof] = j.limits[1]
            if u_new[dof] > 0.0:
                stopped.append(dof)
    if stopped:
        minv_cols = np.linalg.solve(M, np.eye(ndof)[:, stopped])
        lam = np.linalg.solve(minv_cols[stopped, :], -u_new[stopped])
        u_new = u_new + minv_cols @ lam

    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(u_new))):
        raise NonFiniteState("simulator state is no longer finite")

    airtime = np.where(
        new_contact > 0.0, 0.0, state.foot_airtime + dt
    )
    return SimState(
        root_pos=q_new[0:2].copy(),
        root_angle=float(q_new[2]),
        joint_angles=q_new[3:].copy(),
        root_vel=u_new[0:2].copy(),
        root_angvel=float(u_new[2]),
        joint_vels=u_new[3:].copy(),
        foot_contact=new_contact,
        foot_airtime=airtime,
        foot_speed=new_speed,
        torso_tilt=_wrap_angle(float(q_new[2]) - morph.stand_root_angle),
        time=state.time + dt,
    )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def observe(morph: MorphologySpec, state: SimState) -> np.ndarray:
    """Observation vector; root x is excluded for translation invariance.

    Layout: [root_y, sin/cos(root angle), sin/cos(each joint angle),
    root vx, vy, root angular velocity, joint velocities, foot contacts].
    Dimension is 3 + 2J + 3 + J + F.
    """
    ja = state.joint_angles
    parts = [
        [state.root_pos[1], math.sin(state.root_angle), math.cos(state.root_angle)],
        np.stack([np.sin(ja), np.cos(ja)], axis=1).ravel(),
        [state.root_vel[0], state.root_vel[1], state.root_angvel],
        state.joint_vels,
        state.foot_contact,
    ]
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def observation_dim(morph: MorphologySpec) -> int:
    J, F = morph.num_joints, morph.num_feet
    return 3 + 2 * J + 3 + J + F


def observation_scale(morph: MorphologySpec) -> np.ndarray:
    """Fixed per-component scaling for network inputs.

    Positions and sin/cos terms are O(1) already; velocities are compressed
    so that fast flailing (tens of rad/s) cannot saturate tanh layers.
    """
    J, F = morph.num_joints, morph.num_feet
    return np.concatenate([
        [1.0, 1.0, 1.0],
        np.ones(2 * J),
        [0.3, 0.3, 0.1],
        np.full(J, 0.1),
        np.ones(F),
    ])


def is_fallen(
    morph: MorphologySpec,
    state: SimState,
    min_height_frac: float = 0.5,
    max_tilt: float = 1.0,
    cfg: SimConfig = DEFAULT_SIM,
) -> bool:
    """True iff the root is below min_height_frac * stand height or the
    torso tilt exceeds max_tilt (both bounds exclusive)."""
    h0 = stand_height(morph, cfg)
    if state.root_pos[1] < min_height_frac * h0:
        return True
    return abs(state.torso_tilt) > max_tilt


def total_energy(
    morph: MorphologySpec, state: SimState, cfg: SimConfig = DEFAULT_SIM
) -> float:
    """Kinetic + gravitational + contact-spring energy (J)."""
    q, u = _state_vectors(state)
    kin = _forward_kinematics(morph, q, u)
    e = 0.0
    for i, link in enumerate(morph.links):
        e += 0.5 * link.mass * float(kin.vel[i] @ kin.vel[i])
        e += 0.5 * link.inertia * kin.omega[i] ** 2
        e += link.mass * cfg.gravity * kin.pos[i, 1]
    for link_idx in morph.feet:
        pts = _foot_points_local(morph.links[link_idx])
        world = kin.pos[link_idx] + pts @ kin.rot[link_idx].T
        pen = np.minimum(world[:, 1], 0.0)
        e += 0.5 * cfg.contact_stiffness * float(pen @ pen)
    return e


def link_poses(morph: MorphologySpec, state: SimState) -> list[tuple[np.ndarray, float]]:
    """(COM position, absolute angle) per link, for rendering."""
    q, u = _state_vectors(state)
    kin = _forward_kinematics(morph, q, u)
    return [(kin.pos[i].copy(), float(kin.angle[i])) for i in range(len(morph.links))]


def center_of_mass(morph: MorphologySpec, state: SimState) -> np.ndarray:
    poses = link_poses(morph, state)
    total = morph.total_mass
    com = np.zeros(2)
    for link, (pos, _) in zip(morph.links, poses):
        com += link.mass * pos
    return com / total


def com_velocity(morph: MorphologySpec, state: SimState) -> np.ndarray:
    q, u = _state_vectors(state)
    kin = _forward_kinematics(morph, q, u)
    mom = np.zeros(2)
    for i, link in enumerate(morph.links):
        mom += link.mass * kin.vel[i]
    return mom / morph.total_mass


def linear_momentum(morph: MorphologySpec, state: SimState) -> np.ndarray:
    return com_velocity(morph, state) * morph.total_mass
