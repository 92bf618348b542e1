"""Multi-finger grasp scenarios: force-excursion curves, stiffness, energy wells.

World frame: Z up along the fingers' rest direction, X along the grasp axis
of an opposed pair. A finger base is a position plus an azimuth ``phi``; its
flexion plane is spanned by Z and the inward radial direction
``-(cos phi, sin phi, 0)``, which becomes the finger frame's y axis.

Objects are cut by each finger plane into a planar obstacle:

* PowerCylinder: cylinder axis perpendicular to the finger plane, so the
  cross-section is a disc.
* OpposedPinch: upright cylinder, so the fingers meet flat walls.
* sphere (any grasp type): the disc where the finger plane cuts the sphere.
"""

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from ._newton import minimize_on_subspace
from .compliance import joint_space_compliance
from ._validation import check_positive, check_unit_vector, check_vector
from .equilibrium import Circle, EquilibriumProblem, HalfPlane, closing_trajectory
from .exceptions import (
    InfeasibleGeometry,
    NonConvergence,
    SingularConfiguration,
    UnstableEquilibrium,
    ValidationError,
)
from .finger import (
    FingerParams,
    Link,
    Phase,
    elastic_energy,
    energy_gradient,
    energy_hessian,
    forward_kinematics,
    point_hessian,
    point_jacobian,
    tendon_jacobian,
)


class GraspType(str, enum.Enum):
    OPPOSED_PINCH = "OpposedPinch"
    SPHERICAL_PINCH = "SphericalPinch"
    POWER_CYLINDER = "PowerCylinder"

    @property
    def planar(self):
        return self is not GraspType.SPHERICAL_PINCH


class ObjectKind(str, enum.Enum):
    CYLINDER = "cylinder"
    SPHERE = "sphere"


@dataclass(frozen=True)
class FingerBase:
    position: tuple
    azimuth_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in check_vector(self.position, "base.position", 3)))
        az = float(self.azimuth_deg)
        if not math.isfinite(az):
            raise ValidationError("base.azimuth_deg", "must be finite")
        object.__setattr__(self, "azimuth_deg", az)

    @property
    def rotation(self):
        """Columns are the finger frame axes expressed in the world frame."""
        phi = math.radians(self.azimuth_deg)
        x = np.array([0.0, 0.0, 1.0])
        y = -np.array([math.cos(phi), math.sin(phi), 0.0])
        return np.column_stack([x, y, np.cross(x, y)])

    def to_finger(self, p):
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.position)


@dataclass(frozen=True)
class GraspObject:
    kind: ObjectKind
    width: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ObjectKind(self.kind))
        except ValueError:
            raise ValidationError("object.kind", f"expected cylinder or sphere, got {self.kind!r}") from None
        object.__setattr__(self, "width", check_positive(self.width, "object.width"))
        object.__setattr__(self, "center", tuple(float(v) for v in check_vector(self.center, "object.center", 3)))

    @property
    def radius(self):
        return 0.5 * self.width


@dataclass(frozen=True)
class FingerSpec:
    base: FingerBase
    params: FingerParams = field(default_factory=FingerParams)


def _angle_diff(a, b):
    return abs((a - b + 180.0) % 360.0 - 180.0)


@dataclass(frozen=True)
class GraspScenario:
    """Finger placement, object and tendon schedule of one grasp experiment."""

    grasp_type: GraspType
    fingers: tuple
    object: GraspObject
    excursion_schedule: tuple
    solver_tolerance: float = 1e-8
    max_iterations: int = 500
    hold_excursion: float = None  # excursion at which the grasp is held; last schedule entry if None

    def __post_init__(self):
        try:
            object.__setattr__(self, "grasp_type", GraspType(self.grasp_type))
        except ValueError:
            raise ValidationError("grasp_type", f"unknown grasp type {self.grasp_type!r}") from None
        fingers = tuple(self.fingers)
        object.__setattr__(self, "fingers", fingers)
        sched = tuple(float(e) for e in self.excursion_schedule)
        if any(not math.isfinite(e) for e in sched):
            raise ValidationError("excursion_schedule", "entries must be finite")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("excursion_schedule", "must be strictly increasing")
        if sched and sched[0] < 0:
            raise ValidationError("excursion_schedule", "excursions must be >= 0")
        object.__setattr__(self, "excursion_schedule", sched)
        if self.hold_excursion is not None:
            h = float(self.hold_excursion)
            if not math.isfinite(h) or h < 0:
                raise ValidationError("hold_excursion", "must be finite and >= 0")
            object.__setattr__(self, "hold_excursion", h)
        object.__setattr__(self, "solver_tolerance", check_positive(self.solver_tolerance, "solver.tolerance"))
        if int(self.max_iterations) < 1:
            raise ValidationError("solver.max_iterations", "must be >= 1")
        self._check_layout()

    def _check_layout(self):
        n = len(self.fingers)
        if n < 2:
            raise ValidationError("fingers", f"a grasp needs at least 2 fingers, got {n}")
        center = np.asarray(self.object.center)
        for i, f in enumerate(self.fingers):
            if abs(f.base.rotation[:, 2] @ (center - f.base.position)) > 1e-6:
                raise ValidationError(f"fingers[{i}].base", "object center must lie in the finger plane")
        az = [f.base.azimuth_deg for f in self.fingers]
        if self.grasp_type is GraspType.OPPOSED_PINCH:
            if n != 2 or _angle_diff(az[0], az[1]) != 180.0:
                raise ValidationError("fingers", "OpposedPinch needs exactly 2 fingers at opposite azimuths")
        elif self.grasp_type is GraspType.SPHERICAL_PINCH:
            gaps = sorted(_angle_diff(a, b) for i, a in enumerate(az) for b in az[i + 1:])
            if n != 3 or any(abs(g - 120.0) > 1e-9 for g in gaps):
                raise ValidationError("fingers", "SphericalPinch needs 3 fingers at 120 degree spacing")
        elif self.object.kind is not ObjectKind.CYLINDER:
            raise ValidationError("object.kind", "PowerCylinder needs a cylinder")

    @property
    def grasp_axes(self):
        """World axes spanned by the object displacement (column indices)."""
        return (0, 2) if self.grasp_type.planar else (0, 1, 2)

    def with_schedule(self, schedule):
        return dataclasses.replace(self, excursion_schedule=tuple(schedule))

    def obstacle(self, i):
        """Planar obstacle the object presents to finger ``i`` in its own frame."""
        f = self.fingers[i]
        c = f.base.to_finger(self.object.center)
        r = self.object.radius
        if self.object.kind is ObjectKind.SPHERE:
            return Circle(tuple(c[:2]), r)
        if self.grasp_type is GraspType.POWER_CYLINDER:
            return Circle(tuple(c[:2]), r)
        # upright cylinder: the finger meets its near wall
        return HalfPlane((c[0], c[1] - r), (0.0, -1.0))

    def problem(self, i):
        return EquilibriumProblem(self.fingers[i].params, 0.0, (self.obstacle(i),),
                                  self.solver_tolerance, self.max_iterations)


# -- force-excursion curves ---------------------------------------------------

@dataclass(frozen=True)
class ForceExcursionCurve:
    """Internal grasp force against tendon excursion.

    ``samples`` holds ``(excursion_mm, internal_force_N, phase)``. The force is
    the inward component of the contact forces, averaged over the fingers
    (for an opposed pair this is the force across the split plane).
    """

    samples: tuple
    knee_excursion: float = None
    per_finger: tuple = ()
    travel_limit: tuple = ()

    def __post_init__(self):
        samples = tuple((float(e), float(f), Phase(p)) for e, f, p in self.samples)
        if any(b[0] <= a[0] for a, b in zip(samples, samples[1:])):
            raise ValidationError("samples", "excursion must be strictly increasing")
        if any(f < -1e-9 for _, f, _ in samples):
            raise ValidationError("samples", "internal force must be >= 0")
        object.__setattr__(self, "samples", samples)
        knee = _knee_index(samples)
        if (knee is None) != (self.knee_excursion is None):
            raise ValidationError("knee_excursion", "knee must be present iff the phase turns Closed")

    @property
    def excursion(self):
        return np.array([s[0] for s in self.samples])

    @property
    def force(self):
        return np.array([s[1] for s in self.samples])

    @property
    def phases(self):
        return [s[2] for s in self.samples]

    @property
    def knee_index(self):
        return _knee_index(self.samples)


def _knee_index(samples):
    for i in range(1, len(samples)):
        if samples[i][2] is Phase.CLOSED and samples[i - 1][2] is not Phase.CLOSED:
            return i
    return None


def _inward_force(solution):
    """Sum over contacts of the force on the object along the finger frame's +y."""
    return sum(c.normal_force * (-c.normal[1]) for c in solution.state.contacts)


def _finger_trajectories(scenario, schedule=None):
    """Closing trajectory of every finger; identical fingers are solved once."""
    schedule = scenario.excursion_schedule if schedule is None else schedule
    cache = {}
    out = []
    for i, f in enumerate(scenario.fingers):
        key = (f.params, scenario.obstacle(i))
        if key not in cache:
            cache[key] = closing_trajectory(scenario.problem(i), schedule)
        out.append(cache[key])
    return out


def _curve(scenario):
    trajs = _finger_trajectories(scenario)
    samples, per_finger, limits = [], [], []
    for k, e in enumerate(scenario.excursion_schedule):
        sols = [t[k] for t in trajs]
        forces = [_inward_force(s) for s in sols]
        phase = min((s.phase for s in sols), key=lambda p: p.rank)
        samples.append((e, float(np.mean(forces)), phase))
        per_finger.append(tuple(forces))
        limits.append(all("travel_limit" in s.active_constraints for s in sols))
    knee = _knee_index([(e, f, Phase(p)) for e, f, p in samples])
    return ForceExcursionCurve(tuple(samples), None if knee is None else samples[knee][0],
                               tuple(per_finger), tuple(limits))


def simulate_power_grasp(scenario):
    """Force-excursion curve of a power grasp closing slowly on a fixed object."""
    if scenario.grasp_type is not GraspType.POWER_CYLINDER:
        raise ValidationError("grasp_type", "simulate_power_grasp needs a PowerCylinder scenario")
    return _curve(scenario)


def simulate_pinch_grasp(scenario):
    """Fingertip force against excursion for a pinch on a fixed object.

    Each distal link flexes under load until it reaches its travel limit; the
    knee of the returned curve marks that point.
    """
    if scenario.grasp_type is GraspType.POWER_CYLINDER:
        raise ValidationError("grasp_type", "simulate_pinch_grasp needs a pinch scenario")
    return _curve(scenario)


def linear_fit(x, y):
    """Least-squares line through ``(x, y)``; returns ``(slope, intercept, r_squared)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2:
        raise ValidationError("segment", "need at least 2 samples for a line fit")
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    return float(slope), float(icpt), 1.0 - float(res @ res) / ss if ss > 0 else 1.0


def segment_fits(curve):
    """Line fits before the knee (loaded samples only) and from the knee on.

    Returns a dict with ``pre`` and ``post`` entries of ``(slope, intercept, r2)``;
    ``post`` is None when there is no knee.
    """
    e, f = curve.excursion, curve.force
    k = curve.knee_index
    end = len(e) if k is None else k
    loaded = np.nonzero(f[:end] > 0)[0]
    pre = linear_fit(e[loaded], f[loaded]) if loaded.size >= 2 else None
    post = linear_fit(e[k:], f[k:]) if k is not None and len(e) - k >= 2 else None
    return {"pre": pre, "post": post}


def predicted_pinch_slope(scenario, excursion):
    """Internal-force slope (N/mm) of a pinch predicted from fingertip compliance.

    Per finger, the free-closing tip velocity along the contact normal
    (the tendon gearing) drives the tendon-locked fingertip stiffness in
    series with the pad. The result is averaged over the fingers like the
    curve itself. ``excursion`` must be a schedule entry with every finger
    in fingertip contact.
    """
    sched = scenario.excursion_schedule
    if excursion not in sched:
        raise ValidationError("excursion", "must be an entry of the excursion schedule")
    k = sched.index(excursion)
    slopes = []
    for f, traj in zip(scenario.fingers, _finger_trajectories(scenario)):
        p, state = f.params, traj[k].state
        tips = [c for c in state.contacts if c.link is Link.FINGERTIP]
        if not tips or len(tips) != len(state.contacts):
            raise ValidationError("excursion", "every finger must touch with its fingertip only")
        n = -np.asarray(tips[0].normal)
        h = energy_hessian(p, state)[:2, :2]
        r = tendon_jacobian(p)
        dq = np.linalg.solve(h, r)
        dq /= r @ dq
        v_n = float(n @ point_jacobian(p, state, p.distal_length)[:2, :2] @ dq)
        k_tip = 1.0 / float(n @ joint_space_compliance(p, state).in_plane @ n)
        k_pad = p.pad_stiffness
        slopes.append(v_n * k_tip * k_pad / (k_tip + k_pad) * n[1])
    return float(np.mean(slopes))


# -- stiffness of the grasped object ----------------------------------------

@dataclass(frozen=True)
class GraspStiffness:
    """Cartesian stiffness (N/mm) of the grasped object about its equilibrium."""

    matrix: np.ndarray
    grasp_type: GraspType
    axes: tuple = ("x", "z")
    contributions: tuple = ()
    units: str = "N/mm"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape not in ((2, 2), (3, 3)):
            raise ValidationError("matrix", f"expected 2x2 or 3x3, got {m.shape}")
        if np.max(np.abs(m - m.T)) > 1e-9 * max(np.max(np.abs(m)), 1e-300):
            raise ValidationError("matrix", "stiffness must be symmetric")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))
        object.__setattr__(self, "grasp_type", GraspType(self.grasp_type))

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    @property
    def positive_definite(self):
        return bool(self.eigenvalues[0] > 0)

    @property
    def condition_number(self):
        w = self.eigenvalues
        return float(w[-1] / w[0]) if w[0] > 0 else math.inf

    def to_dict(self):
        return {"grasp_type": self.grasp_type.value, "axes": list(self.axes),
                "matrix": self.matrix.tolist(), "units": self.units}


@dataclass(frozen=True)
class _FingerGrasp:
    """One finger holding the object through sticking pad springs.

    ``anchors`` are world-fixed pad anchor points in the finger frame for an
    undisplaced object; displacing the object by ``delta`` moves them by
    ``R^T delta``.
    """

    params: FingerParams
    rotation: np.ndarray
    q0: np.ndarray
    stations: tuple  # (link, s)
    anchors: np.ndarray
    normals: np.ndarray
    tendon_locked: bool

    def points(self, q, kin=None):
        kin = kin or forward_kinematics(self.params, q)
        return np.array([kin.proximal_point(s) if link is Link.PROXIMAL else kin.distal_point(s)
                         for link, s in self.stations])

    def _rows(self):
        return np.r_[tendon_jacobian(self.params), 0.0, 0.0][None, :]

    def pad_forces(self, q, delta_f):
        """Force of each pad on the finger (finger frame)."""
        k = self.params.pad_stiffness
        return k * (self.anchors + delta_f - self.points(q))

    def energy(self, q, delta_f):
        d = self.points(q) - self.anchors - delta_f
        return elastic_energy(self.params, q) + 0.5 * self.params.pad_stiffness * float(np.sum(d * d))

    def gradient(self, q, delta_f):
        kin = forward_kinematics(self.params, q)
        g = energy_gradient(self.params, q).copy()
        forces = self.pad_forces(q, delta_f)
        for (link, s), f in zip(self.stations, forces):
            g -= point_jacobian(self.params, q, s, link, kin)[:3].T @ f
        return g

    def hessian(self, q, delta_f):
        kin = forward_kinematics(self.params, q)
        k = self.params.pad_stiffness
        h = energy_hessian(self.params, q).copy()
        forces = self.pad_forces(q, delta_f)
        for (link, s), f in zip(self.stations, forces):
            jac = point_jacobian(self.params, q, s, link, kin)[:3]
            h += k * jac.T @ jac - np.einsum("i,ijk->jk", f, point_hessian(self.params, q, s, link, kin))
        return 0.5 * (h + h.T)

    def relax(self, delta_f, q_start=None, tol=1e-6):
        # gradients here reach ~1e3 N*mm, so 1e-6 is near the roundoff floor
        q0 = self.q0 if q_start is None else q_start
        rows = self._rows() if self.tendon_locked else None
        b = rows @ self.q0 if self.tendon_locked else None
        q, _, _ = minimize_on_subspace(
            lambda q: self.energy(q, delta_f), lambda q: self.gradient(q, delta_f), q0,
            A=rows, b=b, tol=tol, max_iter=200, hess=lambda q: self.hessian(q, delta_f))
        return q

    def stiffness(self, q, delta_f):
        """3x3 finger-frame stiffness seen by the object (Schur complement)."""
        k = self.params.pad_stiffness
        h = self.hessian(q, delta_f)
        basis = null_space(self._rows()) if self.tendon_locked else np.eye(4)
        h_red = basis.T @ h @ basis
        w = np.linalg.eigvalsh(h_red)
        scale = max(abs(w[-1]), 1e-300)
        if abs(w[0]) <= 1e-12 * scale:
            raise SingularConfiguration("finger compliance is singular at the contact")
        if w[0] < 0:
            raise UnstableEquilibrium("finger equilibrium is unstable", eigenvalues=w)
        kin = forward_kinematics(self.params, q)
        cross = np.zeros((4, 3))
        for link, s in self.stations:
            cross -= k * point_jacobian(self.params, q, s, link, kin)[:3].T
        b = basis.T @ cross
        kf = len(self.stations) * k * np.eye(3) - b.T @ np.linalg.solve(h_red, b)
        return 0.5 * (kf + kf.T)


def _sample_index(scenario, excursion):
    sched = scenario.excursion_schedule
    if excursion is None:
        excursion = scenario.hold_excursion
    if excursion is None:
        if not sched:
            raise ValidationError("excursion_schedule", "empty schedule and no excursion given")
        return sched
    e = float(excursion)
    return tuple(x for x in sched if x < e) + (e,)


def _finger_grasps(scenario, excursion=None):
    schedule = _sample_index(scenario, excursion)
    trajs = _finger_trajectories(scenario, schedule)
    out = []
    for f, traj in zip(scenario.fingers, trajs):
        sol = traj[-1]
        if not sol.state.contacts:
            raise InfeasibleGeometry("a finger does not touch the object at the equilibrium excursion")
        p = f.params
        stations, anchors, normals = [], [], []
        kin = forward_kinematics(p, sol.state)
        for c in sol.state.contacts:
            link = Link.PROXIMAL if c.link is Link.PROXIMAL else Link.DISTAL
            pt = kin.proximal_point(c.location) if link is Link.PROXIMAL else kin.distal_point(c.location)
            n = np.array([c.normal[0], c.normal[1], 0.0])
            stations.append((link, c.location))
            anchors.append(pt + c.normal_force / p.pad_stiffness * n)
            normals.append(n)
        out.append(_FingerGrasp(p, f.base.rotation, sol.state.q, tuple(stations), np.array(anchors),
                                np.array(normals), sol.state.tendon_tension > 0.0))
    return out


def _project(scenario, k_world):
    idx = scenario.grasp_axes
    return k_world[np.ix_(idx, idx)]


def _embed(scenario, delta):
    d = np.zeros(3)
    d[list(scenario.grasp_axes)] = delta
    return d


def _world_stiffness(grasps, qs, delta):
    total = np.zeros((3, 3))
    parts = []
    for g, q in zip(grasps, qs):
        kf = g.stiffness(q, g.rotation.T @ delta)
        kw = g.rotation @ kf @ g.rotation.T
        parts.append(kw)
        total += kw
    return total, parts


def grasp_stiffness(scenario, excursion=None, object_offset=None):
    """Object stiffness assembled from the fingers' contact compliances.

    Every contact is treated as a sticking pad spring (the friction that
    holds a real fingertip), the tendons are held at their excursion, and
    each finger's contribution ``(C_contact + I / k_pad)^-1`` is rotated into
    the world frame and summed.

    Parameters
    ----------
    scenario : GraspScenario
    excursion : float, optional
        Tendon excursion of the equilibrium; defaults to the scenario's
        ``hold_excursion``, else the last schedule entry. The fingers are
        closed along the schedule up to it.
    object_offset : array_like, optional
        Object displacement (grasp axes, mm) at which to evaluate. Pass
        :func:`equilibrium_offset` to evaluate where a free object settles.
    """
    grasps = _finger_grasps(scenario, excursion)
    delta = np.zeros(3) if object_offset is None else _embed(scenario, check_vector(
        object_offset, "object_offset", len(scenario.grasp_axes)))
    qs = [g.q0 if not delta.any() else g.relax(g.rotation.T @ delta) for g in grasps]
    total, parts = _world_stiffness(grasps, qs, delta)
    labels = tuple("xyz"[i] for i in scenario.grasp_axes)
    return GraspStiffness(_project(scenario, total), scenario.grasp_type, labels,
                          tuple(_project(scenario, p) for p in parts))


def static_deflection(stiffness, force):
    """Displacement ``x`` solving ``K x = f`` (mm)."""
    k = np.asarray(getattr(stiffness, "matrix", stiffness), dtype=float)
    f = np.atleast_1d(np.asarray(force, dtype=float))
    if f.size == 1 and k.shape[0] > 1:
        f = np.r_[f, np.zeros(k.shape[0] - 1)]
    if k.shape != (f.size, f.size):
        raise ValidationError("force", f"expected length {k.shape[0]}, got {f.size}")
    return np.linalg.solve(k, f)


# -- energy well --------------------------------------------------------------

@dataclass(frozen=True)
class EnergyWell:
    """Elastic potential around a grasp equilibrium.

    ``escape_work[i]`` is the work needed to push the object along
    ``directions[i]`` until a contact unloads; ``capped[i]`` marks probes that
    reached the displacement cap first.
    """

    pose: tuple
    hessian: np.ndarray
    fd_hessian: np.ndarray
    directions: tuple
    escape_work: tuple
    break_displacement: tuple
    capped: tuple
    min_escape_work: float = None

    def __post_init__(self):
        work = tuple(float(w) for w in self.escape_work)
        if any(w < 0 for w in work):
            raise ValidationError("escape_work", "must be >= 0")
        object.__setattr__(self, "escape_work", work)
        object.__setattr__(self, "min_escape_work", min(work) if work else math.nan)

    @property
    def hessian_error(self):
        """Relative Frobenius gap between the analytic and finite-difference Hessians."""
        return float(np.linalg.norm(self.hessian - self.fd_hessian) / np.linalg.norm(self.hessian))


class _Well:
    """Grasp energy ``W(delta)`` with the fingers relaxed at each object offset."""

    def __init__(self, scenario, grasps):
        self.scenario = scenario
        self.grasps = grasps
        self.qs = [g.q0 for g in grasps]

    def solve(self, delta, warm=None):
        d = _embed(self.scenario, delta)
        warm = self.qs if warm is None else warm
        return [g.relax(g.rotation.T @ d, q) for g, q in zip(self.grasps, warm)]

    def energy(self, delta, qs=None):
        d = _embed(self.scenario, delta)
        qs = self.solve(delta) if qs is None else qs
        return sum(g.energy(q, g.rotation.T @ d) for g, q in zip(self.grasps, qs))

    def force(self, delta, qs):
        """Net force of the fingers on the object (grasp axes, N)."""
        d = _embed(self.scenario, delta)
        f = np.zeros(3)
        for g, q in zip(self.grasps, qs):
            f -= g.rotation @ g.pad_forces(q, g.rotation.T @ d).sum(axis=0)  # pads pull the finger
        return f[list(self.scenario.grasp_axes)]

    def normal_forces(self, delta, qs):
        d = _embed(self.scenario, delta)
        out = []
        for g, q in zip(self.grasps, qs):
            f = g.pad_forces(q, g.rotation.T @ d)
            out.extend(np.einsum("ij,ij->i", f, g.normals))
        return np.array(out)

    def stiffness(self, delta, qs):
        total, _ = _world_stiffness(self.grasps, qs, _embed(self.scenario, delta))
        return _project(self.scenario, total)


def _balance(well, tol=1e-9, max_iter=50):
    """Newton iteration on the object offset until the finger forces cancel."""
    delta = np.zeros(len(well.scenario.grasp_axes))
    qs = well.qs
    for _ in range(max_iter):
        f = well.force(delta, qs)
        if np.linalg.norm(f) < tol:
            return delta, qs
        delta = delta + np.linalg.solve(well.stiffness(delta, qs), f)
        qs = well.solve(delta, qs)
    raise NonConvergence(f"object force balance stalled at {np.linalg.norm(f):.3e} N",
                         gradient_norm=float(np.linalg.norm(f)), iterations=max_iter)


def equilibrium_offset(scenario, excursion=None):
    """Object displacement (grasp axes, mm) at which the finger forces balance.

    The fingers are closed on the object at its nominal center; a free object
    then settles where the net contact force vanishes.
    """
    grasps = _finger_grasps(scenario, excursion)
    return _balance(_Well(scenario, grasps))[0]


def default_probe_directions(scenario, count=16):
    """``count`` in-plane unit directions, plus +-z for spatial grasps."""
    ang = 2.0 * math.pi * np.arange(count) / count
    if scenario.grasp_type.planar:
        return [np.array([math.cos(a), math.sin(a)]) for a in ang]
    dirs = [np.array([math.cos(a), math.sin(a), 0.0]) for a in ang]
    return dirs + [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]


def finite_difference_hessian(energy, x0, step=1e-2):
    """Central-difference Hessian of a scalar function."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    h = np.zeros((n, n))
    f0 = energy(x0)
    eye = np.eye(n) * step
    for i in range(n):
        h[i, i] = (energy(x0 + eye[i]) - 2.0 * f0 + energy(x0 - eye[i])) / step**2
        for j in range(i + 1, n):
            h[i, j] = h[j, i] = (energy(x0 + eye[i] + eye[j]) - energy(x0 + eye[i] - eye[j])
                                 - energy(x0 - eye[i] + eye[j]) + energy(x0 - eye[i] - eye[j])) / (4.0 * step**2)
    return h


def energy_well(scenario, probe_directions=None, displacement_cap=5.0, excursion=None,
                step=0.1, relax_object=True, fd_step=1e-2):
    """Probe the grasp energy well.

    The object is first moved to the pose where the finger forces balance
    (``relax_object``), then displaced quasi-statically along each probe
    direction until the normal force of any contact drops to zero or the
    displacement reaches ``displacement_cap`` (mm).

    Raises
    ------
    UnstableEquilibrium
        The grasp stiffness at the equilibrium is not positive definite.
    """
    cap = check_positive(displacement_cap, "displacement_cap")
    step = check_positive(step, "step")
    grasps = _finger_grasps(scenario, excursion)
    well = _Well(scenario, grasps)
    n = len(scenario.grasp_axes)
    delta = np.zeros(n)
    qs = well.qs
    if relax_object:
        delta, qs = _balance(well)
    well.qs = qs
    hess = well.stiffness(delta, qs)
    w = np.linalg.eigvalsh(hess)
    if w[0] <= 0:
        raise UnstableEquilibrium("grasp energy Hessian is not positive definite", eigenvalues=w)
    fd = finite_difference_hessian(well.energy, delta, fd_step)
    w0 = well.energy(delta, qs)

    dirs = default_probe_directions(scenario) if probe_directions is None else probe_directions
    dirs = [check_unit_vector(d, "probe_direction", n) for d in dirs]
    works, breaks, capped = [], [], []
    for u in dirs:
        t_prev, q_prev = 0.0, qs
        hit = None
        t = 0.0
        while t < cap:
            t = min(cap, t + step)
            q_t = well.solve(delta + t * u, q_prev)
            if well.normal_forces(delta + t * u, q_t).min() <= 0.0:
                hit = (t_prev, q_prev, t)
                break
            t_prev, q_prev = t, q_t
        if hit is None:
            works.append(well.energy(delta + cap * u, q_prev) - w0)
            breaks.append(cap)
            capped.append(True)
            continue
        lo, q_lo, hi = hit
        for _ in range(40):  # bisect the break point
            mid = 0.5 * (lo + hi)
            q_mid = well.solve(delta + mid * u, q_lo)
            if well.normal_forces(delta + mid * u, q_mid).min() <= 0.0:
                hi = mid
            else:
                lo, q_lo = mid, q_mid
            if hi - lo < 1e-6:
                break
        works.append(max(0.0, well.energy(delta + lo * u, q_lo) - w0))
        breaks.append(lo)
        capped.append(False)

    pose = np.asarray(scenario.object.center) + _embed(scenario, delta)
    return EnergyWell(tuple(pose), hess, fd, tuple(tuple(d) for d in dirs), tuple(works),
                      tuple(breaks), tuple(capped))
