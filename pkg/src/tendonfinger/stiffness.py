"""Identification of grasp stiffness matrices from cyclic disturbance data.

The object is pushed back and forth along a set of directions while the
reaction force is recorded. Each sample obeys

    f = K @ dx + h * dir + noise

with ``K`` symmetric, ``h`` a per-axis friction offset and ``dir = +1`` on the
forward stroke, ``-1`` on the return stroke. Only the upper triangle of ``K``
is a fit parameter, so symmetry holds by construction.
"""

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_symmetric
from .exceptions import ParseError, RankDeficientData, ValidationError

WELL_CONDITIONED_LIMIT = 3.0
_AXES = "xyz"


def _upper(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _direction_flags(direction, m):
    if direction is None:
        return np.zeros(m)
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.size != m:
        raise ValidationError("direction", f"expected {m} flags, got {d.size}")
    if not np.all(np.isin(d, (-1.0, 0.0, 1.0))):
        raise ValidationError("direction", "flags must be +1, -1 or 0")
    return d


def design_matrix(displacement, direction=None, fit_hysteresis=True):
    """Stacked regression matrix for the symmetric-K-plus-offset model.

    Rows are ordered sample-major (all force components of sample 0, then
    sample 1, ...). Columns are the upper triangle of K, row by row, followed
    by the per-axis offsets when ``fit_hysteresis`` is set.
    """
    dx = np.atleast_2d(np.asarray(displacement, dtype=float))
    m, n = dx.shape
    pairs = _upper(n)
    p = len(pairs) + (n if fit_hysteresis else 0)
    a = np.zeros((m, n, p))
    for col, (i, j) in enumerate(pairs):
        a[:, i, col] = dx[:, j]
        if i != j:
            a[:, j, col] = dx[:, i]
    if fit_hysteresis:
        flags = _direction_flags(direction, m)
        for i in range(n):
            a[:, i, len(pairs) + i] = flags
    return a.reshape(m * n, p)


def _unpack(theta, n):
    k = np.zeros((n, n))
    for col, (i, j) in enumerate(_upper(n)):
        k[i, j] = k[j, i] = theta[col]
    return k


class StiffnessEstimator(RegressorMixin, BaseEstimator):
    """Least-squares estimator of a symmetric stiffness matrix.

    Parameters
    ----------
    fit_hysteresis : bool
        Jointly estimate a per-axis force offset that flips sign with the
        stroke direction.
    rank_tol : float
        Relative singular-value threshold below which the design is declared
        rank deficient.

    Attributes
    ----------
    stiffness_ : ndarray (n, n)
    hysteresis_offset_ : ndarray (n,)
    stderr_ : ndarray (n, n)
        Standard errors of the stiffness entries.
    residual_rms_ : float
    n_features_in_ : int
    """

    def __init__(self, fit_hysteresis=True, rank_tol=1e-10):
        self.fit_hysteresis = fit_hysteresis
        self.rank_tol = rank_tol

    def fit(self, X, y, direction=None):
        """Fit to displacements ``X`` (mm) and forces ``y`` (N), both (m, n)."""
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = np.atleast_2d(y.T).T
        m, n = X.shape
        if y.shape != (m, n):
            raise ValidationError("force", f"force must have shape {(m, n)}, got {y.shape}")
        self._check_span(X)
        with_offset = self.fit_hysteresis and direction is not None
        a = design_matrix(X, direction, with_offset)
        p = n * (n + 1) // 2 + n
        if m < 2 * p:
            raise ValidationError("samples", f"need at least {2 * p} samples, got {m}")
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        if s[-1] <= self.rank_tol * s[0]:
            raise RankDeficientData("regression design is rank deficient (offsets need both stroke directions)",
                                    null_direction=vt[-1])
        theta = vt.T @ ((u.T @ y.reshape(-1)) / s)
        resid = y.reshape(-1) - a @ theta
        dof = a.shape[0] - a.shape[1]
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * (vt.T / s**2) @ vt

        npair = n * (n + 1) // 2
        self.stiffness_ = _unpack(theta, n)
        self.hysteresis_offset_ = theta[npair:] if with_offset else np.zeros(n)
        self.stderr_ = _unpack(np.sqrt(np.diag(cov))[:npair], n)
        self.residual_rms_ = float(np.sqrt(np.mean(resid**2)))
        self.n_samples_ = m
        self.n_features_in_ = n
        return self

    def _check_span(self, X):
        _, s, vt = np.linalg.svd(X, full_matrices=False)
        if s.size < X.shape[1] or s[-1] <= self.rank_tol * max(s[0], 1e-300):
            raise RankDeficientData("displacements do not span the space", null_direction=vt[-1])

    def predict(self, X, direction=None):
        """Forces for displacements ``X``; ``direction`` None means the stroke average."""
        check_is_fitted(self, "stiffness_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError("displacement", f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        flags = _direction_flags(direction, X.shape[0])
        return X @ self.stiffness_ + np.outer(flags, self.hysteresis_offset_)


@dataclass(frozen=True)
class CycleDataset:
    """Displacement/force samples collected over back-and-forth cycles.

    ``direction`` is +1 on forward strokes, -1 on backward strokes.
    """

    displacement: np.ndarray
    force: np.ndarray
    cycle: np.ndarray
    direction: np.ndarray
    max_displacement: float = 3.0

    def __post_init__(self):
        dx = np.atleast_2d(np.asarray(self.displacement, dtype=float))
        f = np.atleast_2d(np.asarray(self.force, dtype=float))
        cyc = np.asarray(self.cycle).reshape(-1)
        dirs = np.asarray(self.direction, dtype=float).reshape(-1)
        m, n = dx.shape
        if n not in (2, 3):
            raise ValidationError("dimension", f"must be 2 or 3, got {n}")
        if f.shape != (m, n):
            raise ValidationError("force", f"shape {f.shape} does not match displacement {(m, n)}")
        if cyc.size != m or dirs.size != m:
            raise ValidationError("cycle", "cycle and direction need one entry per sample")
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(f))):
            raise ValidationError("samples", "entries must be finite")
        if not np.all(np.isin(dirs, (-1.0, 1.0))):
            raise ValidationError("direction", "must be forward (+1) or backward (-1)")
        if np.any(np.linalg.norm(dx, axis=1) > self.max_displacement + 1e-12):
            raise ValidationError("displacement", f"norm exceeds {self.max_displacement} mm")
        if not np.all(cyc == np.round(cyc)):
            raise ValidationError("cycle", "cycle indices must be integers")
        cyc = cyc.astype(int)
        for c in np.unique(cyc):
            if len(np.unique(dirs[cyc == c])) != 2:
                raise ValidationError("cycle", f"cycle {c} lacks one stroke direction")
        for name, val in (("displacement", dx), ("force", f), ("cycle", cyc), ("direction", dirs)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dimension(self):
        return self.displacement.shape[1]

    def __len__(self):
        return self.displacement.shape[0]

    def columns(self):
        n = self.dimension
        return ([f"d{a}_mm" for a in _AXES[:n]] + [f"f{a}_N" for a in _AXES[:n]]
                + ["cycle", "direction"])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for dx, f, c, d in zip(self.displacement, self.force, self.cycle, self.direction):
            w.writerow([repr(float(v)) for v in dx] + [repr(float(v)) for v in f]
                       + [int(c), "forward" if d > 0 else "backward"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, max_displacement=3.0):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ParseError("empty CSV")
        header = [h.strip() for h in rows[0]]
        n = {6: 2, 8: 3}.get(len(header))
        if n is None:
            raise ParseError(f"expected 6 or 8 columns, got {len(header)}")
        expected = ([f"d{a}_mm" for a in _AXES[:n]] + [f"f{a}_N" for a in _AXES[:n]]
                    + ["cycle", "direction"])
        if header != expected:
            raise ParseError(f"header must be {','.join(expected)}")
        flag = {"forward": 1.0, "backward": -1.0, "1": 1.0, "-1": -1.0, "+1": 1.0}
        dx, f, cyc, dirs = [], [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"line {lineno}: expected {len(header)} fields")
            try:
                vals = [float(v) for v in row[:2 * n]]
                c = int(row[2 * n])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            d = flag.get(row[2 * n + 1].strip())
            if d is None:
                raise ParseError(f"line {lineno}: direction must be forward or backward")
            dx.append(vals[:n])
            f.append(vals[n:])
            cyc.append(c)
            dirs.append(d)
        if not dx:
            raise ParseError("no samples")
        return cls(np.array(dx), np.array(f), np.array(cyc), np.array(dirs), max_displacement)


@dataclass(frozen=True)
class StiffnessFit:
    """Result of :func:`fit_stiffness`. Units: N/mm for the matrix, N otherwise."""

    matrix: np.ndarray
    residual_rms: float
    stderr: np.ndarray
    hysteresis_offset: np.ndarray
    n_samples: int

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "stderr": self.stderr.tolist(),
            "hysteresis_offset_N": self.hysteresis_offset.tolist(),
            "residual_rms_N": self.residual_rms,
            "n_samples": self.n_samples,
            "units": "N/mm",
        }


def fit_stiffness(data, fit_hysteresis=True):
    """Least-squares symmetric stiffness fit of a :class:`CycleDataset`.

    Raises
    ------
    RankDeficientData
        The displacements do not span the space; ``null_direction`` names
        the unexcited direction.
    """
    est = StiffnessEstimator(fit_hysteresis=fit_hysteresis).fit(
        data.displacement, data.force, direction=data.direction)
    return StiffnessFit(est.stiffness_, est.residual_rms_, est.stderr_,
                        np.asarray(est.hysteresis_offset_, dtype=float), est.n_samples_)


def probe_directions(n):
    """Coordinate axes followed by the pairwise diagonals ``(e_i +- e_j)/sqrt 2``."""
    eye = np.eye(n)
    dirs = list(eye)
    for i, j in itertools.combinations(range(n), 2):
        dirs.append((eye[i] + eye[j]) / math.sqrt(2.0))
        dirs.append((eye[i] - eye[j]) / math.sqrt(2.0))
    return dirs


def synthesize_cycles(k_true, hysteresis=0.0, noise_sigma=0.0, n_cycles=2, amplitude=2.0,
                      seed=0, samples_per_quarter=10):
    """Triangle-wave disturbance cycles along every axis and diagonal.

    Each cycle visits every probe direction with the profile
    ``0 -> +A -> 0 -> -A -> 0``; the stroke is forward while the signed
    displacement grows. Samples sit at the midpoints of equal time steps, so
    no sample lands on a turning point.
    """
    k = check_symmetric(k_true, "k_true")
    n = k.shape[0]
    if n not in (2, 3):
        raise ValidationError("k_true", "must be 2x2 or 3x3")
    amp = float(amplitude)
    if not amp > 0:
        raise ValidationError("amplitude", "must be > 0")
    h = np.broadcast_to(np.asarray(hysteresis, dtype=float), (n,))
    if int(n_cycles) < 1 or int(samples_per_quarter) < 1:
        raise ValidationError("n_cycles", "n_cycles and samples_per_quarter must be >= 1")
    rng = np.random.default_rng(seed)

    q = int(samples_per_quarter)
    t = (np.arange(4 * q) + 0.5) / q  # in [0, 4)
    s = np.where(t < 1, t, np.where(t < 3, 2 - t, t - 4))
    stroke = np.where((t < 1) | (t >= 3), 1.0, -1.0)

    dx, cyc, dirs = [], [], []
    for c in range(int(n_cycles)):
        for u in probe_directions(n):
            dx.append(amp * np.outer(s, u))
            cyc.append(np.full(s.size, c))
            dirs.append(stroke)
    dx = np.vstack(dx)
    dirs = np.concatenate(dirs)
    f = dx @ k + np.outer(dirs, h)
    if noise_sigma > 0:
        f = f + rng.normal(0.0, float(noise_sigma), size=f.shape)
    return CycleDataset(dx, f, np.concatenate(cyc), dirs, max_displacement=max(3.0, amp))


@dataclass(frozen=True)
class ConditioningReport:
    """Eigen-structure of a stiffness matrix (eigenvalues ascending, N/mm)."""

    eigenvalues: np.ndarray
    principal_axes: np.ndarray
    condition_number: float
    well_conditioned: bool
    threshold: float = WELL_CONDITIONED_LIMIT

    def to_dict(self):
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "principal_axes": self.principal_axes.T.tolist(),
            "condition_number": self.condition_number,
            "well_conditioned": self.well_conditioned,
            "threshold": self.threshold,
            "units": "N/mm",
        }


def conditioning_report(fit, threshold=WELL_CONDITIONED_LIMIT):
    """Eigen-decomposition and condition number of a fitted (or raw) stiffness.

    ``fit`` may be a :class:`StiffnessFit` or a symmetric array. The matrix is
    flagged well-conditioned when max/min eigenvalue is below ``threshold``.
    Columns of ``principal_axes`` are the unit eigenvectors.
    """
    k = fit.matrix if isinstance(fit, StiffnessFit) else fit
    k = check_symmetric(k, "matrix", rtol=1e-9)
    w, v = np.linalg.eigh(k)
    # deterministic orientation: largest component positive
    idx = np.argmax(np.abs(v), axis=0)
    v = v * np.sign(v[idx, np.arange(v.shape[1])])
    cond = float(w[-1] / w[0]) if w[0] > 0 else math.inf
    return ConditioningReport(w, v, cond, bool(cond < threshold), float(threshold))
