"""Damped Newton minimization on an affine subspace.

The problems here have at most four unknowns, so Hessians are dense and
can be built by central differences of the analytic gradient.
"""

import numpy as np
from scipy.linalg import null_space

from .exceptions import NonConvergence


def fd_hessian(grad, x, step=1e-6):
    n = x.size
    h = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step * max(1.0, abs(x[i]))
        h[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * e[i])
    return 0.5 * (h + h.T)


def minimize_on_subspace(fun, grad, x0, A=None, b=None, tol=1e-8, max_iter=500,
                         hess=None, max_step=0.5):
    """Minimize ``fun`` subject to ``A @ x == b``.

    Returns ``(x, iterations, projected_gradient_norm)``. Raises
    NonConvergence when ``max_iter`` is exhausted with the projected gradient
    still above ``tol``. ``max_step`` caps the length of a single step.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    if A is None or len(A) == 0:
        Z = np.eye(n)
    else:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        # project the start onto the constraint set
        x = x - np.linalg.lstsq(A, A @ x - b, rcond=None)[0]
        Z = null_space(A)
    if Z.shape[1] == 0:
        return x, 0, 0.0
    hess = hess or (lambda y: fd_hessian(grad, y))

    f = fun(x)
    g = Z.T @ grad(x)
    gnorm = float(np.linalg.norm(g))
    for it in range(max_iter):
        H = Z.T @ hess(x) @ Z
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        scale = max(abs(w).max(), 1e-12)
        saddle = w[0] < -1e-9 * scale
        if gnorm <= tol and not saddle:
            return x, it, gnorm
        floor = 1e-8 * scale
        wa = np.maximum(np.abs(w), floor)  # modified Newton: flip/clip negative curvature
        p = -(V @ ((V.T @ g) / wa))
        if saddle:
            # symmetric saddles have no gradient along the unstable mode, so
            # step along it explicitly
            v = V[:, 0] if g @ V[:, 0] <= 0 else -V[:, 0]
            p = p + 0.1 * max_step * v
        pn = np.linalg.norm(p)
        if pn > max_step:
            p *= max_step / pn
        slope = float(g @ p)
        alpha = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + alpha * (Z @ p)
            f_new = fun(x_new)
            if f_new <= f + 1e-4 * alpha * slope and (not saddle or f_new < f):
                accepted = True
                break
            alpha *= 0.5
        if not accepted or abs(f_new - f) <= 1e-13 * (1.0 + abs(f)):
            # near the optimum energy differences drown in roundoff; fall
            # back to accepting the full step if it reduces the gradient
            x_try = x + Z @ p
            g_try = Z.T @ grad(x_try)
            if np.linalg.norm(g_try) < gnorm:
                x_new, f_new = x_try, fun(x_try)
            elif not accepted:
                if gnorm <= tol:
                    return x, it, gnorm
                break
        x, f = x_new, f_new
        g = Z.T @ grad(x)
        gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return x, max_iter, gnorm
    raise NonConvergence(
        f"projected gradient {gnorm:.3e} above tolerance {tol:.1e}",
        gradient_norm=gnorm, iterations=max_iter)
