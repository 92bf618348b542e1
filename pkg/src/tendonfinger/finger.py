"""Two-link tendon-driven finger with elastic joints.

Generalized coordinates are ordered ``q = (theta_p, theta_d, psi_p, psi_d)``:
in-plane flexion of the proximal pin joint and distal flexure, followed by
the out-of-plane (lateral) rotation of each joint. The finger base frame has
x along the proximal link at rest, y in the flexion direction, z out of plane.

Units: N, mm, rad, N*mm.
"""

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite, check_positive
from .exceptions import ValidationError

N_COORDS = 4
IN_PLANE = (0, 1)


class Link(str, enum.Enum):
    PROXIMAL = "Proximal"
    DISTAL = "Distal"
    FINGERTIP = "Fingertip"


class Phase(str, enum.Enum):
    SWEEP = "Sweep"
    CAGE = "Cage"
    CLOSED = "Closed"

    @property
    def rank(self):
        return {"Sweep": 0, "Cage": 1, "Closed": 2}[self.value]


@dataclass(frozen=True)
class FingerParams:
    """Geometry, joint stiffnesses and tendon routing of one finger.

    ``travel_limit_stiffness`` defaults to 50x ``k_distal_bend`` when left as
    None. ``pad_stiffness`` (N/mm) is the normal stiffness of the rubber pad at
    every contact point; it is what keeps a fully closed grasp finitely stiff.
    """

    proximal_length: float = 70.0
    distal_length: float = 50.0
    k_proximal: float = 12.0
    k_distal_bend: float = 60.0
    k_distal_twist: float = 200.0
    k_proximal_twist: float = 5000.0
    r_proximal: float = 12.0
    r_distal: float = 4.0
    rest_angles: tuple = (0.0, 0.0)
    travel_limit_distal: float = 1.3
    travel_limit_stiffness: float = None
    pad_stiffness: float = 20.0

    def __post_init__(self):
        for name in ("proximal_length", "distal_length", "k_proximal", "k_distal_bend",
                     "k_distal_twist", "k_proximal_twist", "r_proximal", "r_distal",
                     "travel_limit_distal", "pad_stiffness"):
            object.__setattr__(self, name, check_positive(getattr(self, name), name))
        if self.travel_limit_stiffness is None:
            object.__setattr__(self, "travel_limit_stiffness", 50.0 * self.k_distal_bend)
        else:
            object.__setattr__(self, "travel_limit_stiffness",
                               check_positive(self.travel_limit_stiffness, "travel_limit_stiffness"))
        try:
            rest = tuple(check_finite(a, "rest_angles") for a in self.rest_angles)
        except TypeError:
            raise ValidationError("rest_angles", "expected a pair of angles") from None
        if len(rest) != 2:
            raise ValidationError("rest_angles", f"expected 2 angles, got {len(rest)}")
        if rest[1] >= self.travel_limit_distal:
            raise ValidationError("rest_angles", "distal rest angle must lie below the travel limit")
        object.__setattr__(self, "rest_angles", rest)

    @classmethod
    def preset(cls, name, **overrides):
        """Named parameter set from ``PRESETS`` with optional overrides."""
        if name not in PRESETS:
            raise ValidationError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    @property
    def moment_arms(self):
        return np.array([self.r_proximal, self.r_distal])

    @property
    def power_grasp_capable(self):
        """Distal joint stiffer than proximal as seen through the tendon."""
        return self.k_distal_bend / self.r_distal**2 > self.k_proximal / self.r_proximal**2

    def scaled(self, s):
        """Copy with every stiffness (joints, travel limit, pads) multiplied by ``s``."""
        s = check_positive(s, "scale")
        return dataclasses.replace(
            self,
            k_proximal=self.k_proximal * s,
            k_distal_bend=self.k_distal_bend * s,
            k_distal_twist=self.k_distal_twist * s,
            k_proximal_twist=self.k_proximal_twist * s,
            travel_limit_stiffness=self.travel_limit_stiffness * s,
            pad_stiffness=self.pad_stiffness * s,
        )

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["rest_angles"] = list(self.rest_angles)
        return d

    @classmethod
    def from_dict(cls, data, prefix="params"):
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ValidationError(f"{prefix}.{key}", "unknown key")
        try:
            return cls(**data)
        except ValidationError as exc:
            raise ValidationError(f"{prefix}.{exc.field}", exc.constraint) from None


# "center_60mm" moves the in-plane center of compliance of the straight finger
# to proximal_length * r_distal / (r_proximal - r_distal) = 60 mm past the
# distal joint.
PRESETS = {
    "default": {},
    "center_60mm": {"r_proximal": 13.0, "r_distal": 6.0},
}


@dataclass(frozen=True)
class ContactRecord:
    """A single frictionless contact on the finger.

    ``normal`` points from the obstacle toward the finger, i.e. along the
    force the obstacle applies to the finger.
    """

    link: Link
    location: float
    normal: tuple
    normal_force: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        if self.normal_force < 0:
            raise ValidationError("normal_force", "contact cannot pull")
        if self.location < 0:
            raise ValidationError("location", "must be >= 0")
        object.__setattr__(self, "normal", tuple(float(v) for v in self.normal))


@dataclass(frozen=True)
class FingerState:
    theta_proximal: float
    theta_distal: float
    twist_distal: float = 0.0
    tendon_excursion: float = 0.0
    tendon_tension: float = 0.0
    phase: Phase = Phase.SWEEP
    contacts: tuple = ()
    twist_proximal: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        object.__setattr__(self, "contacts", tuple(self.contacts))
        if not self.tendon_tension >= 0.0:
            raise ValidationError("tendon_tension", "tendons only pull (must be >= 0)")

    @property
    def q(self):
        return np.array([self.theta_proximal, self.theta_distal,
                         self.twist_proximal, self.twist_distal])

    @classmethod
    def at_rest(cls, params):
        return cls(*params.rest_angles)

    @classmethod
    def from_q(cls, q, **kwargs):
        q = np.asarray(q, dtype=float)
        return cls(theta_proximal=float(q[0]), theta_distal=float(q[1]),
                   twist_proximal=float(q[2]) if q.size > 2 else 0.0,
                   twist_distal=float(q[3]) if q.size > 3 else 0.0, **kwargs)


def _as_q(state):
    if isinstance(state, FingerState):
        return state.q
    q = np.zeros(N_COORDS)
    arr = np.asarray(state, dtype=float)
    q[: arr.size] = arr
    return q


def stiffness_diagonal(params):
    return np.array([params.k_proximal, params.k_distal_bend,
                     params.k_proximal_twist, params.k_distal_twist])


def elastic_energy(params, state):
    """Elastic energy stored in the joints (N*mm).

    Sum of the four torsion springs plus the quadratic travel-limit penalty
    ``0.5 * travel_limit_stiffness * max(0, theta_d - travel_limit)**2``.
    Contacts do not enter.
    """
    q = _as_q(state)
    dq = q - np.array([*params.rest_angles, 0.0, 0.0])
    over = max(0.0, q[1] - params.travel_limit_distal)
    return float(0.5 * np.dot(stiffness_diagonal(params), dq**2)
                 + 0.5 * params.travel_limit_stiffness * over**2)


def energy_gradient(params, state):
    q = _as_q(state)
    dq = q - np.array([*params.rest_angles, 0.0, 0.0])
    g = stiffness_diagonal(params) * dq
    g[1] += params.travel_limit_stiffness * max(0.0, q[1] - params.travel_limit_distal)
    return g


def energy_hessian(params, state):
    q = _as_q(state)
    h = stiffness_diagonal(params).copy()
    if q[1] > params.travel_limit_distal:
        h[1] += params.travel_limit_stiffness
    return np.diag(h)


def travel_limit_engaged(params, state):
    return bool(_as_q(state)[1] > params.travel_limit_distal)


def tendon_jacobian(params):
    """Tendon moment arms ``(r_proximal, r_distal)`` in mm per rad."""
    return params.moment_arms.copy()


def joint_torques(params, tension):
    """Joint torques (N*mm) produced by tendon ``tension`` (N)."""
    if tension < 0:
        raise ValueError("tendon tension must be >= 0")
    return tension * tendon_jacobian(params)


def tendon_displacement(params, state):
    """Tendon length taken up by the current flexion, ``r . (theta - rest)``."""
    q = _as_q(state)
    return float(np.dot(params.moment_arms, q[:2] - np.asarray(params.rest_angles)))


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(b):
    c, s = math.cos(b), math.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class FingerKinematics:
    """Frames of one finger configuration, all in the finger base frame."""

    proximal_rotation: np.ndarray
    distal_rotation: np.ndarray
    distal_joint: np.ndarray
    fingertip: np.ndarray
    # joint axes and origins in chain order (theta_p, psi_p, theta_d, psi_d)
    axes: np.ndarray = field(repr=False)
    origins: np.ndarray = field(repr=False)

    @property
    def fingertip_angle(self):
        """In-plane orientation of the distal link (rad)."""
        x = self.distal_rotation[:, 0]
        return math.atan2(x[1], x[0])

    def distal_point(self, s):
        return self.distal_joint + s * self.distal_rotation[:, 0]

    def proximal_point(self, s):
        return s * self.proximal_rotation[:, 0]


_CHAIN = (0, 2, 1, 3)  # chain position -> coordinate index


def forward_kinematics(params, state):
    """Compose base -> proximal rotation -> proximal link -> distal rotation -> distal link."""
    q = _as_q(state)
    rp = _rz(q[0]) @ _ry(q[2])
    d = rp @ np.array([params.proximal_length, 0.0, 0.0])
    rd_bend = rp @ _rz(q[1])
    rd = rd_bend @ _ry(q[3])
    tip = d + rd[:, 0] * params.distal_length
    axes = np.array([[0.0, 0.0, 1.0], _rz(q[0])[:, 1], rp[:, 2], rd_bend[:, 1]])
    origins = np.array([np.zeros(3), np.zeros(3), d, d])
    return FingerKinematics(rp, rd, d, tip, axes, origins)


def _link_point(params, kin, link, s):
    if link is Link.PROXIMAL:
        return kin.proximal_point(s), 2  # only the first two chain joints move it
    return kin.distal_point(s), 4


def point_jacobian(params, state, s, link=Link.DISTAL, kin=None):
    """6x4 geometric Jacobian ``[d position; d rotation]`` of a point on a link.

    ``s`` is the distance along the link from its joint. Columns follow the
    coordinate order ``(theta_p, theta_d, psi_p, psi_d)``.
    """
    link = Link(link)
    kin = kin or forward_kinematics(params, state)
    p, n_moving = _link_point(params, kin, link, s)
    jac = np.zeros((6, N_COORDS))
    for pos in range(n_moving):
        w, o = kin.axes[pos], kin.origins[pos]
        col = _CHAIN[pos]
        jac[:3, col] = np.cross(w, p - o)
        jac[3:, col] = w
    return jac


def point_hessian(params, state, s, link=Link.DISTAL, kin=None):
    """Second derivatives ``d^2 p / dq_i dq_j`` of a link point, shape (3, 4, 4)."""
    link = Link(link)
    kin = kin or forward_kinematics(params, state)
    p, n_moving = _link_point(params, kin, link, s)
    hess = np.zeros((3, N_COORDS, N_COORDS))
    for a in range(n_moving):
        for b in range(a, n_moving):
            wa, wb, ob = kin.axes[a], kin.axes[b], kin.origins[b]
            v = np.cross(wa, np.cross(wb, p - ob))
            i, j = _CHAIN[a], _CHAIN[b]
            hess[:, i, j] = v
            hess[:, j, i] = v
    return hess
