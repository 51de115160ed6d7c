"""
Damped least-squares (Levenberg-Marquardt) fitting.

Every curve fit in the toolkit goes through :func:`fit`.  Parameters are
declared with :class:`Param`; each carries a transform that maps it to an
unconstrained internal coordinate:

``free``
    ``u = p / scale``
``log``
    ``u = log(p / scale)``, keeps ``p`` in ``(0, inf)``
``bounded``
    ``u = logit((p - lo) / (hi - lo))``, keeps ``p`` in ``(lo, hi)``

The iteration works on ``u``; results, standard errors and covariance are
reported for the natural parameters ``p``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import FitError, NonFiniteModelError

__all__ = ["Param", "FitProblem", "FitResult", "fit", "numeric_jacobian",
           "covariance"]

_EPS = np.finfo(float).eps
_STEP = _EPS ** (1.0 / 3.0)
_LOG_CLIP = 700.0

TRANSFORMS = ("free", "log", "bounded")


@dataclass(frozen=True)
class Param:
    """Declaration of one fit parameter.

    Parameters
    ----------
    name : str
    value : float
        Initial value in natural units.
    transform : {"free", "log", "bounded"}
    bounds : tuple of float, optional
        ``(lo, hi)``; required for ``bounded``.
    scale : float, optional
        Typical magnitude.  Used to make internal coordinates O(1);
        defaults to ``|value|`` (or 1 when the value is zero).
    """
    name: str
    value: float
    transform: str = "free"
    bounds: tuple = None
    scale: float = None

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"initial value of {self.name} is not finite")
        if self.transform == "log" and self.value <= 0:
            raise ValueError(f"log-positive parameter {self.name} needs a positive start")
        if self.transform == "bounded":
            if self.bounds is None:
                raise ValueError(f"bounded parameter {self.name} needs bounds")
            lo, hi = self.bounds
            if not lo < self.value < hi:
                raise ValueError(f"start of {self.name} must lie strictly inside {self.bounds}")

    @property
    def hint(self):
        if self.scale is not None and self.scale > 0:
            return float(self.scale)
        return abs(self.value) if self.value != 0 else 1.0

    def to_internal(self, p):
        if self.transform == "free":
            return p / self.hint
        if self.transform == "log":
            return math.log(p / self.hint)
        lo, hi = self.bounds
        z = (p - lo) / (hi - lo)
        return math.log(z / (1.0 - z))

    def to_natural(self, u):
        if self.transform == "free":
            return u * self.hint
        if self.transform == "log":
            return self.hint * math.exp(min(max(u, -_LOG_CLIP), _LOG_CLIP))
        lo, hi = self.bounds
        if u >= 0:
            z = 1.0 / (1.0 + math.exp(-u))
        else:
            e = math.exp(u)
            z = e / (1.0 + e)
        return lo + (hi - lo) * z

    def dnatural_dinternal(self, p):
        if self.transform == "free":
            return self.hint
        if self.transform == "log":
            return p
        lo, hi = self.bounds
        return (p - lo) * (hi - p) / (hi - lo)


@dataclass
class FitProblem:
    """Model, data and parameter declarations for one fit.

    ``model(p, x)`` receives the natural parameter vector as a numpy array
    and must return predictions with the shape of ``y``.  ``weights`` may be
    ``None`` (unit weights), ``"poisson"`` (``1 / max(y, 1)``) or an array.
    """
    model: object
    x: np.ndarray
    y: np.ndarray
    params: list
    weights: object = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.size < 1:
            raise FitError("fit needs at least one data point")
        if isinstance(self.weights, str):
            if self.weights != "poisson":
                raise ValueError(f"unknown weighting {self.weights!r}")
            self.weights = 1.0 / np.maximum(self.y, 1.0)
        elif self.weights is None:
            self.weights = np.ones_like(self.y)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.y.shape or np.any(self.weights < 0):
                raise ValueError("weights must be non-negative and match y")

    @property
    def names(self):
        return tuple(p.name for p in self.params)


@dataclass
class FitResult:
    names: tuple
    params: np.ndarray
    stderr: np.ndarray
    covariance: np.ndarray
    cost: float
    n_iter: int
    converged: bool
    residuals: np.ndarray
    message: str = ""
    rank_deficient: bool = False
    dof: int = 0
    n_points: int = 0
    flags: list = field(default_factory=list)

    def __getitem__(self, name):
        return float(self.params[self.names.index(name)])

    def error(self, name):
        return float(self.stderr[self.names.index(name)])

    def values(self):
        return {n: float(v) for n, v in zip(self.names, self.params)}

    def errors(self):
        return {n: float(v) for n, v in zip(self.names, self.stderr)}

    @property
    def reduced_chi2(self):
        return self.cost / self.dof if self.dof > 0 else float("nan")


def numeric_jacobian(model, params, x, scale=None):
    """Central-difference Jacobian ``d model(p, x) / d p``.

    The step for parameter ``j`` is ``max(|p_j|, scale_j) * eps**(1/3)``.

    Returns
    -------
    ndarray, shape (len(y), len(params))

    Raises
    ------
    NonFiniteModelError
        If any entry is not finite; the message names the parameter and
        the first offending x.
    """
    p = np.array(params, dtype=float)
    x = np.asarray(x, dtype=float)
    if scale is None:
        scale = np.ones_like(p)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), p.shape)
    cols = []
    for j in range(p.size):
        h = max(abs(p[j]), scale[j]) * _STEP
        up = p.copy()
        dn = p.copy()
        up[j] += h
        dn[j] -= h
        col = (np.asarray(model(up, x), dtype=float)
               - np.asarray(model(dn, x), dtype=float)) / (up[j] - dn[j])
        bad = ~np.isfinite(col)
        if np.any(bad):
            idx = int(np.argmax(bad))
            xi = x[idx] if x.ndim and x.shape[0] == col.shape[0] else None
            raise NonFiniteModelError(
                f"non-finite derivative w.r.t. parameter {j} at x={xi!r}, params={p.tolist()}",
                params=p, x=xi, parameter=j)
        cols.append(col.ravel())
    return np.column_stack(cols) if cols else np.zeros((np.size(model(p, x)), 0))


def covariance(jac, residuals, n_params=None):
    """Parameter covariance ``s^2 (J^T J)^-1`` with ``s^2 = cost / (n - p)``.

    Uses an SVD pseudo-inverse; returns ``(cov, stderr, rank_deficient,
    dof)``.  When ``n <= p`` the scale is undefined and NaN is reported.
    """
    jac = np.asarray(jac, dtype=float)
    r = np.asarray(residuals, dtype=float)
    n, p = jac.shape
    if n_params is None:
        n_params = p
    dof = n - n_params
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    tol = max(n, p) * _EPS * (s[0] if s.size else 0.0)
    keep = s > tol
    rank_deficient = bool(np.count_nonzero(keep) < p)
    inv_s2 = np.zeros_like(s)
    inv_s2[keep] = 1.0 / s[keep] ** 2
    jtj_inv = (vt.T * inv_s2) @ vt
    if dof < 1:
        cov = np.full((p, p), np.nan)
    else:
        cov = (r @ r) / dof * jtj_inv
        cov = 0.5 * (cov + cov.T)
    stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None)) if dof >= 1 else np.full(p, np.nan)
    return cov, stderr, rank_deficient, dof


class _Evaluator:
    """Residuals and Jacobian in internal coordinates."""

    def __init__(self, problem):
        self.problem = problem
        self.sw = np.sqrt(problem.weights)

    def natural(self, u):
        return np.array([par.to_natural(float(v))
                         for par, v in zip(self.problem.params, u)])

    def predict(self, p):
        return np.asarray(self.problem.model(p, self.problem.x), dtype=float)

    def residuals(self, u):
        p = self.natural(u)
        return self.sw * (self.problem.y - self.predict(p)).reshape(self.problem.y.shape)

    def jacobian(self, u):
        def f(uu, x):
            return self.predict(self.natural(uu))
        try:
            jf = numeric_jacobian(f, u, self.problem.x, scale=1.0)
        except NonFiniteModelError as exc:
            exc.params = self.natural(u)
            raise NonFiniteModelError(
                f"non-finite Jacobian (parameter {self.problem.names[exc.parameter]}) "
                f"at x={exc.x!r}, params={exc.params.tolist()}",
                params=exc.params, x=exc.x, parameter=exc.parameter) from None
        return -(self.sw.ravel()[:, None] * jf)


def fit(problem, rel_tol=1e-10, grad_tol=1e-10, max_iter=200, step_tol=1e-12,
        callback=None):
    """Solve a :class:`FitProblem` by Levenberg-Marquardt.

    Damping starts at ``1e-3 * max(diag(J^T J))`` and is multiplied by 2 on a
    rejected step, divided by 3 on an accepted one.  Only steps that lower
    the cost are accepted.  The fit is declared converged when an accepted
    step lowers the cost by less than ``rel_tol`` (relative), when the
    residual vector is orthogonal to every Jacobian column to within
    ``grad_tol`` (scaled gradient), when the residual norm has dropped
    to floating-point resolution of the data, or when a trial step is
    smaller than ``step_tol`` relative to the internal parameter vector
    (the optimum is resolved to machine precision).  ``max_iter`` bounds the
    number of trial steps.  Non-convergence is reported via
    ``converged=False`` with the best point found.

    ``callback(iteration, params, cost)``, if given, is called with the
    natural parameters after the start and after every accepted step.
    """
    ev = _Evaluator(problem)
    names = problem.names
    u = np.array([par.to_internal(par.value) for par in problem.params])
    r = ev.residuals(u)
    if not np.all(np.isfinite(r)):
        raise NonFiniteModelError(
            f"model is not finite at the initial parameters {ev.natural(u).tolist()}",
            params=ev.natural(u))
    n = r.size
    npar = u.size
    y_norm = float(np.linalg.norm(ev.sw * problem.y))
    floor = 64 * _EPS * max(y_norm, np.finfo(float).tiny)

    cost = float(r @ r)
    if callback is not None:
        callback(0, ev.natural(u), cost)
    J = ev.jacobian(u)
    jtj_diag = np.einsum("ij,ij->j", J, J)
    lam = 1e-3 * float(jtj_diag.max()) if npar and jtj_diag.max() > 0 else 1e-3
    converged = False
    message = "maximum number of iterations reached"
    it = 0
    while it < max_iter:
        if math.sqrt(cost) <= floor:
            converged, message = True, "residuals at floating-point resolution"
            break
        g = J.T @ r
        col_norm = np.sqrt(np.einsum("ij,ij->j", J, J))
        with np.errstate(divide="ignore", invalid="ignore"):
            cosines = np.where(col_norm > 0, np.abs(g) / (col_norm * math.sqrt(cost)), 0.0)
        if npar == 0 or float(cosines.max()) < grad_tol:
            converged, message = True, "gradient below tolerance"
            break
        it += 1
        A = np.vstack([J, math.sqrt(lam) * np.eye(npar)])
        b = np.concatenate([-r, np.zeros(npar)])
        delta = np.linalg.lstsq(A, b, rcond=None)[0]
        u_new = u + delta
        small_step = float(np.linalg.norm(delta)) <= step_tol * (float(np.linalg.norm(u)) + step_tol)
        try:
            r_new = ev.residuals(u_new)
            finite = bool(np.all(np.isfinite(r_new)))
        except (FloatingPointError, OverflowError, ValueError):
            finite = False
        cost_new = float(r_new @ r_new) if finite else math.inf
        if cost_new < cost:
            rel = (cost - cost_new) / cost
            u, r, cost = u_new, r_new, cost_new
            lam /= 3.0
            if callback is not None:
                callback(it, ev.natural(u), cost)
            J = ev.jacobian(u)
            if rel < rel_tol:
                converged, message = True, "relative cost decrease below tolerance"
                break
            if small_step:
                converged, message = True, "step below tolerance"
                break
        else:
            if small_step and finite:
                converged, message = True, "step below tolerance"
                break
            lam *= 2.0
            if lam > 1e300:
                message = "damping diverged"
                break

    p = ev.natural(u)
    dpdu = np.array([par.dnatural_dinternal(v) for par, v in zip(problem.params, p)])
    with np.errstate(divide="ignore", invalid="ignore"):
        J_nat = np.where(dpdu != 0, J / np.where(dpdu != 0, dpdu, 1.0), 0.0)
    cov, stderr, rank_def, dof = covariance(J_nat, r, npar)
    flags = []
    if rank_def:
        flags.append("rank_deficient")
    if dof < 1:
        flags.append("stderr_undefined")
    if not converged:
        flags.append("not_converged")
    return FitResult(names=names, params=p, stderr=stderr, covariance=cov,
                     cost=cost, n_iter=it, converged=converged,
                     residuals=problem.y - ev.predict(p).reshape(problem.y.shape),
                     message=message, rank_deficient=rank_def, dof=dof,
                     n_points=n, flags=flags)
