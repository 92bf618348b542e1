"""Compliance algebra for the finger's distal link.

A compliance matrix maps a small wrench ``(force, moment)`` applied at a
reference point to the resulting twist ``(displacement, rotation)`` there::

    C = [[C_xx,    C_xt],
         [C_xt.T,  C_tt]]

Units: C_xx in mm/N, C_xt in rad/N, C_tt in rad/(N*mm).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from ._validation import check_symmetric, check_vector, is_psd
from .exceptions import SingularConfiguration, ValidationError
from .finger import (
    IN_PLANE,
    FingerState,
    Link,
    energy_hessian,
    forward_kinematics,
    point_hessian,
    point_jacobian,
    tendon_jacobian,
)

_PSD_RTOL = 1e-10


def skew(d):
    """Matrix ``[d]x`` with ``[d]x @ v == cross(d, v)``."""
    x, y, z = d
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _sym(m):
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class ComplianceMatrix:
    """Symmetric positive semidefinite 6x6 compliance at ``point``."""

    matrix: np.ndarray
    point: tuple = (0.0, 0.0, 0.0)
    frame: str = "finger_base"

    def __post_init__(self):
        m = check_symmetric(self.matrix, "compliance", rtol=1e-12, size=6)
        if not is_psd(m, _PSD_RTOL):
            raise ValidationError("compliance", "matrix is not positive semidefinite")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "point", tuple(check_vector(self.point, "point", 3)))

    @classmethod
    def from_blocks(cls, c_xx, c_xt, c_tt, point=(0.0, 0.0, 0.0), frame="finger_base"):
        m = np.block([[np.asarray(c_xx, float), np.asarray(c_xt, float)],
                      [np.asarray(c_xt, float).T, np.asarray(c_tt, float)]])
        return cls(m, point, frame)

    @property
    def xx(self):
        return self.matrix[:3, :3]

    @property
    def xtheta(self):
        return self.matrix[:3, 3:]

    @property
    def thetatheta(self):
        return self.matrix[3:, 3:]

    @property
    def in_plane(self):
        """2x2 translational block in the finger plane."""
        return self.matrix[:2, :2]


@dataclass(frozen=True)
class AdjointMap:
    """Twist transport from a point to another point offset by ``offset`` (mm).

    A rigid body twisting by ``dtheta`` about the reference point moves the
    offset point by ``dtheta x d``, so the upper-right block is ``-[d]x``.
    """

    offset: tuple

    def __post_init__(self):
        object.__setattr__(self, "offset", tuple(check_vector(self.offset, "offset", 3)))

    @property
    def matrix(self):
        j = np.eye(6)
        j[:3, 3:] = -skew(self.offset)
        return j

    @property
    def determinant(self):
        return float(np.linalg.det(self.matrix))

    def inverse(self):
        return AdjointMap(tuple(-np.asarray(self.offset)))

    def compose(self, other):
        """Map equal to applying ``self`` then ``other``."""
        return AdjointMap(tuple(np.asarray(self.offset) + np.asarray(other.offset)))


def transport(c, d):
    """Compliance ``J C J^T`` at the point offset by ``d`` on the same rigid body."""
    d = check_vector(d, "offset", 3)
    j = AdjointMap(tuple(d)).matrix
    return ComplianceMatrix(_sym(j @ c.matrix @ j.T), tuple(np.asarray(c.point) + d), c.frame)


def offset_cartesian_compliance(c, d):
    """Translational compliance (3x3, mm/N) at the point offset by ``d``.

    Block expansion of the transport: ``C_xx + A C_xt^T + C_xt A^T + A C_tt A^T``
    with ``A = -[d]x``. The last term grows with the square of the offset.
    """
    a = -skew(check_vector(d, "offset", 3))
    return c.xx + a @ c.xtheta.T + c.xtheta @ a.T + a @ c.thetatheta @ a.T


def _as_state(state):
    if isinstance(state, FingerState):
        return state
    if hasattr(state, "state"):
        return state.state
    return FingerState.from_q(np.asarray(state, dtype=float))


def _point_on_distal(params, kin, point):
    """Return ``(s, offset)``: axial station and lateral offset in the distal frame."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.size == 1:
        return float(p[0]), np.zeros(3)
    p = check_vector(p, "point", 3)
    return float(p[0]), np.array([0.0, p[1], p[2]])


def _contact_terms(params, state, kin):
    """Constraint rows and preload Hessian from the state's contacts."""
    rows = []
    hess = np.zeros((4, 4))
    for c in state.contacts:
        link = Link.DISTAL if c.link is Link.FINGERTIP else c.link
        n = np.array([c.normal[0], c.normal[1], 0.0])
        jac = point_jacobian(params, state, c.location, link, kin)[:3]
        # a preloaded contact pushes along n; its work term adds -f n . d2p
        hess -= c.normal_force * np.einsum("i,ijk->jk", n, point_hessian(params, state, c.location, link, kin))
        if c.link is not Link.FINGERTIP:
            rows.append(n @ jac)
    return rows, hess


def joint_space_compliance(params, state, point=None, tendon_locked=True):
    """Compliance of a point rigidly attached to the distal link.

    Parameters
    ----------
    params : FingerParams
    state : FingerState or EquilibriumSolution
        Converged configuration. Proximal and distal contacts in
        ``state.contacts`` remove their normal direction; fingertip contacts
        only contribute their preload, since the fingertip is where the
        compliance is usually probed.
    point : float or array_like, optional
        Distance along the distal link (mm), or ``(x, y, z)`` in the distal
        link frame. Defaults to the fingertip.
    tendon_locked : bool
        Hold the tendon length fixed. This leaves the passive four-bar
        direction as the only in-plane compliant motion of a free finger.

    Returns
    -------
    ComplianceMatrix
        Expressed in the finger base frame at the point's current position.
    """
    state = _as_state(state)
    kin = forward_kinematics(params, state)
    s, lateral = _point_on_distal(params, kin, params.distal_length if point is None else point)
    g = point_jacobian(params, state, s, Link.DISTAL, kin)
    offset = kin.distal_rotation @ lateral
    if np.any(offset):
        g[:3] -= skew(offset) @ g[3:]
    position = kin.distal_point(s) + offset

    rows, h_contact = _contact_terms(params, state, kin)
    if tendon_locked:
        rows.insert(0, np.r_[tendon_jacobian(params), 0.0, 0.0])
    h = energy_hessian(params, state) + h_contact
    basis = null_space(np.array(rows)) if rows else np.eye(4)
    if basis.shape[1] < 4 - len(rows):
        raise SingularConfiguration("constraint rows are linearly dependent")
    h_red = _sym(basis.T @ h @ basis)
    w = np.linalg.eigvalsh(h_red)
    if w[0] <= 1e-12 * max(abs(w[-1]), 1e-300):
        raise SingularConfiguration(
            f"reduced stiffness is not positive definite (min eigenvalue {w[0]:.3e})")
    gn = g @ basis
    sv = np.linalg.svd(gn, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise SingularConfiguration("point Jacobian lost rank on the constraint manifold")
    c = gn @ np.linalg.solve(h_red, gn.T)
    return ComplianceMatrix(_sym(c), tuple(position))


@dataclass(frozen=True)
class ComplianceEllipse:
    """In-plane compliance ellipse at a point of the distal link."""

    point: tuple
    axes: tuple
    compliances: tuple
    station: float = math.nan

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float)
        if axes.shape != (2, 2) or not np.allclose(axes @ axes.T, np.eye(2), atol=1e-9):
            raise ValidationError("axes", "expected two orthonormal 2-vectors")
        comp = tuple(float(v) for v in self.compliances)
        if len(comp) != 2 or comp[0] < comp[1]:
            raise ValidationError("compliances", "expected two values sorted descending")
        if comp[1] < -_PSD_RTOL * max(abs(comp[0]), 1.0):
            raise ValidationError("compliances", "must be >= 0")
        object.__setattr__(self, "axes", tuple(tuple(a) for a in axes))
        object.__setattr__(self, "compliances", (comp[0], max(comp[1], 0.0)))

    @property
    def major(self):
        return self.compliances[0]


def ellipse_from_compliance(c, station=math.nan):
    w, v = np.linalg.eigh(c.in_plane)
    order = [1, 0]
    axes = v[:, order].T
    # fix the sign so the output is deterministic
    for i in range(2):
        k = int(np.argmax(np.abs(axes[i])))
        if axes[i, k] < 0:
            axes[i] = -axes[i]
    return ComplianceEllipse(tuple(c.point[:2]), axes, tuple(w[order]), station)


def compliance_field(params, state, sample_points):
    """In-plane compliance ellipses at stations (mm) along the distal link axis."""
    return [ellipse_from_compliance(joint_space_compliance(params, state, float(s)), float(s))
            for s in sample_points]


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(f, lo, hi, tol=0.01):
    """Minimum of a unimodal function on ``[lo, hi]`` to within ``tol``."""
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def center_of_compliance(params, state=None, search=(0.0, None), tol=0.01):
    """Station along the distal link axis (mm past the distal joint) of least compliance.

    The search interval defaults to three distal link lengths, since the
    centre may sit beyond the fingertip. Returns ``(station, ellipse)``.
    """
    state = FingerState.at_rest(params) if state is None else _as_state(state)
    lo, hi = search
    hi = 3.0 * params.distal_length if hi is None else hi

    def major(s):
        return ellipse_from_compliance(joint_space_compliance(params, state, s)).major

    s = golden_section_minimize(major, lo, hi, tol)
    return s, ellipse_from_compliance(joint_space_compliance(params, state, s), s)


def closing_direction(params, state):
    """Unit in-plane fingertip velocity under increasing tendon excursion."""
    state = _as_state(state)
    h = energy_hessian(params, state)[np.ix_(IN_PLANE, IN_PLANE)]
    r = tendon_jacobian(params)
    dq = np.linalg.solve(h, r)
    dq /= r @ dq
    v = point_jacobian(params, state, params.distal_length)[:2, :2] @ dq
    return v / np.linalg.norm(v)


def full_closing_excursions(params, count=50):
    """``count`` excursions (mm) taking the free finger from rest to a 90 degree proximal flexion.

    Uses the closed-form free-closing rate ``d theta_p / de = (r_p/k_p) / sum(r_i^2/k_i)``.
    """
    if int(count) < 2:
        raise ValidationError("count", "need at least 2 samples")
    rate = (params.r_proximal / params.k_proximal) / (
        params.r_proximal**2 / params.k_proximal + params.r_distal**2 / params.k_distal_bend)
    span = 0.5 * math.pi - params.rest_angles[0]
    if span <= 0:
        raise ValidationError("rest_angles", "proximal rest angle must be below 90 degrees")
    return np.linspace(0.0, span / rate, int(count))


def principal_direction_alignment(params, trajectory):
    """Angle (deg, in [0, 90]) between fingertip motion and the principal compliance axis.

    The principal axis is the major axis of the in-plane fingertip ellipse
    with the tendon locked; angles are between lines, so the sign of either
    direction does not matter.
    """
    out = []
    for sol in trajectory:
        state = _as_state(sol)
        if state.contacts:
            raise ValidationError("trajectory", "alignment is defined for the free finger only")
        ell = ellipse_from_compliance(joint_space_compliance(params, state))
        if ell.major <= 0.0:
            raise SingularConfiguration("fingertip sits at the center of compliance")
        v = closing_direction(params, state)
        cosang = min(1.0, abs(float(np.dot(v, ell.axes[0]))))
        out.append(math.degrees(math.acos(cosang)))
    return out


def twist_contributions(params, state=None, point=None):
    """Out-of-plane fingertip compliance (mm/N) added by each lateral joint.

    Each twist joint ``j`` contributes ``(dz/dpsi_j)**2 / k_j``, i.e. the
    square of its lever arm to the point over its stiffness. Returns a dict
    with keys ``"proximal"`` and ``"distal"``.
    """
    state = FingerState.at_rest(params) if state is None else _as_state(state)
    s = params.distal_length if point is None else float(point)
    g = point_jacobian(params, state, s)
    return {"proximal": float(g[2, 2] ** 2 / params.k_proximal_twist),
            "distal": float(g[2, 3] ** 2 / params.k_distal_twist)}
