"""Quasi-static equilibrium of a tendon-driven finger.

The equilibrium configuration minimizes joint elastic energy with the tendon
treated as an inextensible constraint ``r . (theta - rest) >= excursion``.
Contacts are frictionless; each contact point is backed by the finger's pad
spring, so an active contact stores ``0.5 * pad_stiffness * penetration**2``
and transmits ``pad_stiffness * penetration`` along its normal.

All geometry in this module is planar and expressed in the finger base frame.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._newton import minimize_on_subspace
from ._validation import check_positive, check_vector
from .exceptions import InfeasibleGeometry, NonConvergence, ValidationError
from .finger import (
    ContactRecord,
    FingerParams,
    FingerState,
    Link,
    Phase,
    elastic_energy,
    energy_gradient,
    travel_limit_engaged,
)

_BOTH_LINKS = (Link.PROXIMAL, Link.DISTAL)
_TIE_TOL = 1e-9
_CONTINUATION_STEP = 0.5  # mm of excursion per step when closing from rest


def _links(links):
    out = tuple(Link(l) for l in links)
    if not out or any(l is Link.FINGERTIP for l in out):
        raise ValidationError("links", "obstacle links must be Proximal and/or Distal")
    return out


@dataclass(frozen=True)
class HalfPlane:
    """Obstacle filling ``{p : normal . (p - point) < 0}``."""

    point: tuple
    normal: tuple
    links: tuple = _BOTH_LINKS

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in check_vector(self.point, "point", 2)))
        n = check_vector(self.normal, "normal", 2)
        if np.linalg.norm(n) == 0:
            raise ValidationError("normal", "zero vector")
        object.__setattr__(self, "normal", tuple(float(v) for v in n / np.linalg.norm(n)))
        object.__setattr__(self, "links", _links(self.links))

    def contains(self, p):
        return float(np.dot(self.normal, np.asarray(p) - self.point)) < 0.0

    def segment_gaps(self, a, b, skip_start=False):
        """Signed gaps ``(gap, location, normal)`` of the segment end points.

        A straight segment penetrates a half-plane deepest at an end, and
        penalizing both ends keeps the pad energy smooth when a link lies
        flat on the plane.
        """
        n, p0 = np.asarray(self.normal), np.asarray(self.point)
        length = float(np.linalg.norm(b - a))
        ends = [(float(n @ (b - p0)), length, n)]
        if not skip_start:
            ends.append((float(n @ (a - p0)), 0.0, n))
        return ends


@dataclass(frozen=True)
class Circle:
    """Disc obstacle: the cross-section of a cylinder or a sphere's great circle."""

    center: tuple
    radius: float
    links: tuple = _BOTH_LINKS

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in check_vector(self.center, "center", 2)))
        object.__setattr__(self, "radius", check_positive(self.radius, "radius"))
        object.__setattr__(self, "links", _links(self.links))

    def contains(self, p):
        return float(np.linalg.norm(np.asarray(p) - self.center)) < self.radius

    def segment_gaps(self, a, b, skip_start=False):
        """Gap of the segment point closest to the center (one entry)."""
        c = np.asarray(self.center)
        ab = b - a
        length = float(np.linalg.norm(ab))
        t = min(1.0, max(0.0, float((c - a) @ ab) / (length * length)))
        p = a + t * ab
        d = p - c
        dist = float(np.linalg.norm(d))
        if dist == 0.0:
            n = np.array([-ab[1], ab[0]]) / length
        else:
            n = d / dist
        return [(dist - self.radius, t * length, n)]


@dataclass(frozen=True)
class EquilibriumProblem:
    params: FingerParams
    tendon_excursion: float
    obstacles: tuple = ()
    solver_tolerance: float = 1e-8
    max_iterations: int = 500

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "solver_tolerance",
                           check_positive(self.solver_tolerance, "solver_tolerance"))
        if int(self.max_iterations) < 1:
            raise ValidationError("max_iterations", "must be >= 1")
        object.__setattr__(self, "tendon_excursion", float(self.tendon_excursion))

    def with_excursion(self, excursion):
        return EquilibriumProblem(self.params, excursion, self.obstacles,
                                  self.solver_tolerance, self.max_iterations)


@dataclass(frozen=True)
class EquilibriumSolution:
    state: FingerState
    energy: float
    active_constraints: tuple
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    contact_energy: float = field(default=0.0)

    @property
    def phase(self):
        return self.state.phase

    @property
    def total_energy(self):
        return self.energy + self.contact_energy


def planar_points(params, q):
    """Base, distal joint and fingertip positions (2-D) for in-plane angles ``q``."""
    tp, td = q[0], q[1]
    d = params.proximal_length * np.array([math.cos(tp), math.sin(tp)])
    tip = d + params.distal_length * np.array([math.cos(tp + td), math.sin(tp + td)])
    return np.zeros(2), d, tip


def _planar_jacobian(q, p, link, joint_d):
    """2x2 in-plane Jacobian of a material point ``p`` on ``link``."""
    jac = np.zeros((2, 2))
    jac[:, 0] = (-p[1], p[0])
    if link is Link.DISTAL:
        r = p - joint_d
        jac[:, 1] = (-r[1], r[0])
    return jac


def _contacts(params, obstacles, q):
    """Yield ``(link, gap, location, normal, jacobian)`` for every obstacle/link pair."""
    base, d, tip = planar_points(params, q)
    segs = {Link.PROXIMAL: (base, d), Link.DISTAL: (d, tip)}
    for obs in obstacles:
        for link in obs.links:
            a, b = segs[link]
            # the distal joint already belongs to the proximal link's end
            skip = link is Link.DISTAL and Link.PROXIMAL in obs.links
            for gap, loc, n in obs.segment_gaps(a, b, skip):
                p = a + (b - a) * (loc / np.linalg.norm(b - a))
                yield link, gap, loc, n, _planar_jacobian(q, p, link, d)


def _pad_energy(params, obstacles, q):
    k = params.pad_stiffness
    return sum(0.5 * k * min(0.0, gap) ** 2 for _, gap, _, _, _ in _contacts(params, obstacles, q))


def _pad_gradient(params, obstacles, q):
    k = params.pad_stiffness
    g = np.zeros(2)
    for _, gap, _, n, jac in _contacts(params, obstacles, q):
        if gap < 0.0:
            g += k * gap * (jac.T @ n)
    return g


def total_energy(problem, q):
    """Joint elastic energy plus pad energy at in-plane angles ``q`` (N*mm)."""
    q = np.asarray(q, dtype=float)
    return elastic_energy(problem.params, q) + _pad_energy(problem.params, problem.obstacles, q)


def total_gradient(problem, q):
    q = np.asarray(q, dtype=float)
    return energy_gradient(problem.params, q)[:2] + _pad_gradient(problem.params, problem.obstacles, q)


def _check_base(problem):
    for i, obs in enumerate(problem.obstacles):
        if obs.contains((0.0, 0.0)):
            raise InfeasibleGeometry(f"obstacle {i} overlaps the finger base")


def _minimize(problem, q0):
    """Return (q, tension, iterations, projected gradient norm)."""
    params = problem.params
    r = params.moment_arms
    rest = np.asarray(params.rest_angles)
    e = problem.tendon_excursion
    fun = lambda q: total_energy(problem, q)
    grad = lambda q: total_gradient(problem, q)
    q, it, gn = minimize_on_subspace(fun, grad, q0, A=r[None, :], b=[e + r @ rest],
                                     tol=problem.solver_tolerance,
                                     max_iter=problem.max_iterations)
    tension = float(r @ grad(q)) / float(r @ r)
    if tension >= 0.0:
        return q, tension, it, gn
    # slack tendon: contacts hold the joints past the excursion, so the tendon
    # constraint is an inequality r . (theta - rest) >= e
    cons = {"type": "ineq", "fun": lambda x: r @ (x - rest) - e, "jac": lambda x: r}
    res = minimize(fun, q, jac=grad, method="SLSQP", constraints=[cons],
                   options={"ftol": 1e-14, "maxiter": problem.max_iterations})
    q2 = res.x
    if r @ (q2 - rest) <= e + 1e-9:
        return q, 0.0, it, gn
    q2, it2, gn2 = minimize_on_subspace(fun, grad, q2, tol=problem.solver_tolerance,
                                        max_iter=problem.max_iterations)
    if r @ (q2 - rest) < e - 1e-9:
        return q, 0.0, it, gn
    return q2, 0.0, it + int(res.nit) + it2, gn2


def _label(params, q, contacts):
    links = {c.link for c in contacts}
    prox = Link.PROXIMAL in links
    dist = bool(links & {Link.DISTAL, Link.FINGERTIP})
    if prox and dist:
        return Phase.CLOSED
    if dist and travel_limit_engaged(params, q):
        return Phase.CLOSED
    if prox or dist:
        return Phase.CAGE
    return Phase.SWEEP


def _assemble(problem, q, tension, iterations, gnorm):
    params = problem.params
    per_link = {}
    for link, gap, loc, n, _ in _contacts(params, problem.obstacles, q):
        if gap >= 0.0:
            continue
        length = params.proximal_length if link is Link.PROXIMAL else params.distal_length
        if -gap > 0.5 * length:
            raise InfeasibleGeometry(f"{link.value.lower()} link driven through an obstacle")
        force = params.pad_stiffness * (-gap)
        if link in per_link:
            # several points of one link touch: report the most distal one
            # carrying the summed force
            loc0, n0, f0 = per_link[link]
            per_link[link] = (max(loc, loc0), n0 if loc0 >= loc else n, f0 + force)
        else:
            per_link[link] = (loc, n, force)
    contacts = []
    for link, (loc, n, force) in per_link.items():
        length = params.proximal_length if link is Link.PROXIMAL else params.distal_length
        if link is Link.DISTAL and loc >= length - 1e-9:
            link = Link.FINGERTIP
        contacts.append(ContactRecord(link, min(loc, length), tuple(float(v) for v in n), force))
    phase = _label(params, q, contacts)
    state = FingerState(
        theta_proximal=float(q[0]), theta_distal=float(q[1]),
        tendon_excursion=problem.tendon_excursion, tendon_tension=tension,
        phase=phase, contacts=tuple(contacts))
    active = []
    if tension > 0.0:
        active.append("tendon")
    active.extend(f"contact:{c.link.value}" for c in contacts)
    if travel_limit_engaged(params, q):
        active.append("travel_limit")
    return EquilibriumSolution(
        state=state, energy=elastic_energy(params, q), active_constraints=tuple(active),
        converged=gnorm <= problem.solver_tolerance, iterations=iterations,
        gradient_norm=gnorm, contact_energy=_pad_energy(params, problem.obstacles, q))


def _start(problem, initial):
    if initial is None:
        return np.asarray(problem.params.rest_angles, dtype=float)
    if isinstance(initial, EquilibriumSolution):
        initial = initial.state
    if isinstance(initial, FingerState):
        return initial.q[:2].copy()
    return np.asarray(initial, dtype=float)[:2].copy()


def solve_free_closing(problem, initial=None):
    """Equilibrium of the unobstructed finger at the given tendon excursion."""
    if problem.obstacles:
        raise ValidationError("obstacles", "solve_free_closing takes a problem without obstacles")
    if problem.tendon_excursion < 0:
        raise ValidationError("tendon_excursion", "must be >= 0")
    q, tension, it, gn = _minimize(problem, _start(problem, initial))
    return _assemble(problem, q, tension, it, gn)


def solve_contact_equilibrium(problem, initial=None):
    """Equilibrium with frictionless, pad-backed contacts against the obstacles.

    Raises InfeasibleGeometry when an obstacle covers the finger base or a
    link ends up pushed through an obstacle.
    """
    _check_base(problem)
    if initial is None and problem.tendon_excursion > _CONTINUATION_STEP:
        # close quasi-statically from rest: a cold start projected onto the
        # tendon line can sit inside an obstacle and slide through it
        n = math.ceil(problem.tendon_excursion / _CONTINUATION_STEP)
        for e in np.linspace(0.0, problem.tendon_excursion, n + 1)[1:-1]:
            initial = solve_contact_equilibrium(problem.with_excursion(e), initial if initial is not None
                                                else problem.params.rest_angles)
    q, tension, it, gn = _minimize(problem, _start(problem, initial))
    return _assemble(problem, q, tension, it, gn)


def solve(problem, initial=None):
    if problem.obstacles:
        return solve_contact_equilibrium(problem, initial)
    return solve_free_closing(problem, initial)


def closing_trajectory(problem, excursion_samples):
    """Solve a sequence of excursions, warm-starting each from the previous."""
    samples = [float(e) for e in excursion_samples]
    if any(b < a for a, b in zip(samples, samples[1:])):
        raise ValidationError("excursion_samples", "must be sorted ascending")
    out = []
    prev = None
    for i, e in enumerate(samples):
        try:
            sol = solve(problem.with_excursion(e), prev)
        except NonConvergence as exc:
            raise NonConvergence(f"sample {i} (excursion {e} mm): {exc}",
                                 gradient_norm=exc.gradient_norm,
                                 iterations=exc.iterations, sample_index=i) from exc
        except InfeasibleGeometry as exc:
            raise InfeasibleGeometry(f"sample {i} (excursion {e} mm): {exc}") from exc
        # dE/de equals the tendon tension >= 0; a drop means the finger jumped
        # to another branch, i.e. slipped through an obstacle between samples
        if prev is not None and sol.total_energy < prev.total_energy - 1e-9 * (1.0 + prev.total_energy):
            raise InfeasibleGeometry(
                f"sample {i} (excursion {e} mm): energy dropped along the trajectory; "
                "a link passed through an obstacle")
        out.append(sol)
        prev = sol
    return out


def kkt_residual(problem, solution):
    """Stationarity residual ``|grad E_total - tension * r|`` at a solution (N*mm)."""
    q = solution.state.q[:2]
    r = problem.params.moment_arms
    return float(np.linalg.norm(total_gradient(problem, q) - solution.state.tendon_tension * r))
