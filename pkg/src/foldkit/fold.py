"""Fold curve of the critical manifold and fast eigen-data along it.

The fold curve is the zero set of ``Phi = (f1, f2, det df/dx)``, solved for
``(x1, x2, y1)`` as functions of ``y2``.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, astuple, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateFold, NoConvergence, SolverError, WrongBranch
from .newton import damped_newton
from .system import Params, SystemDefinition, X1, X2, Y1, cubic, cubic_d1

NEWTON_TOL = 1e-12
LAMBDA_FLOOR = 1e-6
KAPPA_FLOOR = 1e-6
ZERO_EIG_TOL = 1e-8
INDEPENDENCE_FLOOR = 1e-6

FOLD_CSV_HEADER = ["y2", "x1", "x2", "y1", "lambda", "v", "w", "d", "K", "kappa", "residual"]


@dataclass(frozen=True)
class Branch:
    """Box the fold solution must stay in; Phi = 0 has several solutions."""

    x1_lo: float = -1.5
    x1_hi: float = -0.5
    x2_lo: float = -math.inf
    x2_hi: float = -1.0

    def contains(self, x1, x2) -> bool:
        return self.x1_lo <= x1 <= self.x1_hi and self.x2_lo <= x2 < self.x2_hi


LOWER_FOLD = Branch()
UPPER_FOLD = Branch(0.5, 1.5, -math.inf, -1.0)


@dataclass(frozen=True)
class FoldPoint:
    y2: float
    x1_star: float
    x2_star: float
    y1_star: float
    lam: float
    v: float
    w: float
    d: float
    K: float
    kappa: float
    residual: float

    @property
    def state(self) -> np.ndarray:
        return np.array([self.x1_star, self.x2_star, self.y1_star, self.y2])

    @property
    def psi(self) -> np.ndarray:
        return np.array([self.x1_star, self.x2_star, self.y1_star])

    @property
    def P(self) -> np.ndarray:
        """Columns are the eigenvectors ``(1, v)`` and ``(w, 1)``."""
        return np.array([[1.0, self.w], [self.v, 1.0]])

    def csv_row(self) -> list:
        return [repr(float(x)) for x in astuple(self)]


def phi(system: SystemDefinition, s, p: Params) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    f = system.fast_rhs(s, p)
    return np.array([f[0], f[1], np.linalg.det(system.fast_jacobian(s, p))])


def det_gradient(system: SystemDefinition, s, p: Params) -> np.ndarray:
    """Gradient of ``det df/dx`` with respect to the full state."""
    a = system.fast_jacobian(s, p)
    h = system.fast_hessian(s, p)
    return (h[0, 0] * a[1, 1] + a[0, 0] * h[1, 1]
            - h[0, 1] * a[1, 0] - a[0, 1] * h[1, 0])


def phi_jacobian(system: SystemDefinition, s, p: Params) -> np.ndarray:
    """3x4 Jacobian of Phi with respect to ``(x1, x2, y1, y2)``."""
    return np.vstack([system.fast_state_jacobian(s, p), det_gradient(system, s, p)])


def fast_eigen(system: SystemDefinition, s, p: Params, lambda_floor=LAMBDA_FLOOR):
    """Eigen-data of the fast Jacobian at a fold point.

    Returns ``(lam, v, w, d)`` where ``(1, v)`` spans the kernel, ``(w, 1)`` is
    the eigenvector of the nonzero eigenvalue ``lam`` and ``d = 1/(1 - v w)``.
    """
    a = system.fast_jacobian(np.asarray(s, dtype=float), p)
    vals, vecs = np.linalg.eig(a)
    if np.iscomplexobj(vals):
        raise DegenerateFold(f"complex fast eigenvalues {vals}")
    i0 = int(np.argmin(np.abs(vals)))
    i1 = 1 - i0
    lam = float(vals[i1])
    if abs(lam) < lambda_floor:
        raise DegenerateFold(f"eigenvalue not separated: lambda={lam:.3e}")
    null, other = vecs[:, i0], vecs[:, i1]
    if abs(null[0]) < 1e-12 or abs(other[1]) < 1e-12:
        raise DegenerateFold("kernel not transverse to x2 (fold of the second fast variable)")
    v = float(null[1] / null[0])
    w = float(other[0] / other[1])
    lam = float(np.trace(a) - vals[i0])
    return lam, v, w, 1.0 / (1.0 - v * w)


def manifold_curvature(system: SystemDefinition, s, p: Params, lam, v, w) -> float:
    """``K``: second derivative of ``y1 - y1*`` along the kernel coordinate.

    Differentiating ``f(x* + P xi, y1* + eta, y2) = 0`` twice in ``xi1`` at the
    fold gives ``lam (w, 1) xi2'' + f_y1 eta'' = -D2f[(1, v), (1, v)]``.
    """
    h = system.fast_hessian(s, p)
    u = np.array([1.0, v, 0.0, 0.0])
    q = np.einsum("iab,a,b->i", h, u, u)
    b = np.column_stack([system.fast_jacobian(s, p) @ np.array([w, 1.0]),
                         system.fast_slow_partials(s, p)[:, 0]])
    try:
        _, eta2 = np.linalg.solve(b, -q)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFold("f_y1 parallel to the stable eigenvector") from exc
    return float(eta2)


def fold_kappa(system: SystemDefinition, s, p: Params, v) -> float:
    return float(det_gradient(system, s, p)[:2] @ np.array([1.0, v]))


def solve_fold_point(system: SystemDefinition, y2: float, seed, p: Params,
                     branch: Optional[Branch] = LOWER_FOLD,
                     newton_tol=NEWTON_TOL, max_iter=50,
                     lambda_floor=LAMBDA_FLOOR, kappa_floor=KAPPA_FLOOR) -> FoldPoint:
    """Solve ``Phi(x1, x2, y1; y2) = 0`` by damped Newton from ``seed``."""
    y2 = float(y2)

    def fun(z):
        return phi(system, (z[0], z[1], z[2], y2), p)

    def jac(z):
        return phi_jacobian(system, (z[0], z[1], z[2], y2), p)[:, :3]

    try:
        z, res, _ = damped_newton(fun, jac, seed, tol=newton_tol, max_iter=max_iter)
    except NoConvergence as exc:
        raise NoConvergence(f"fold solve at y2={y2!r}: {exc}") from None
    if branch is not None and not branch.contains(z[0], z[1]):
        raise WrongBranch(f"fold solve at y2={y2!r} left branch {branch}: x1={z[0]:.6g}, x2={z[1]:.6g}")
    s = np.array([z[0], z[1], z[2], y2])
    lam, v, w, d = fast_eigen(system, s, p, lambda_floor)
    if lam >= -lambda_floor:
        raise DegenerateFold(f"fold at y2={y2!r} not simple: lambda={lam:.3e} not negative")
    if abs(v * w) >= 1.0:
        raise DegenerateFold(f"fold at y2={y2!r}: |v w| >= 1")
    kappa = fold_kappa(system, s, p, v)
    if abs(kappa) <= kappa_floor:
        raise DegenerateFold(f"fold at y2={y2!r}: kappa={kappa:.3e} below floor")
    K = manifold_curvature(system, s, p, lam, v, w)
    return FoldPoint(y2, float(z[0]), float(z[1]), float(z[2]),
                     lam, v, w, d, K, kappa, float(res))


def fold_tangent(system: SystemDefinition, fp: FoldPoint, p: Params) -> np.ndarray:
    """``d(x1*, x2*, y1*)/dy2`` from ``M psi' = -Phi_y2``."""
    j = phi_jacobian(system, fp.state, p)
    try:
        return np.linalg.solve(j[:, :3], -j[:, 3])
    except np.linalg.LinAlgError as exc:
        raise DegenerateFold(f"singular fold Jacobian at y2={fp.y2!r}") from exc


def fold_curve(system: SystemDefinition, y2_min, y2_max, n, seed, p: Params,
               **solver_kw) -> list:
    """Fold points on a uniform ``y2`` grid, each seeded by its predecessor."""
    if n < 2:
        raise ValueError("n must be at least 2")
    points = []
    z = np.asarray(seed, dtype=float)
    for y2 in np.linspace(y2_min, y2_max, n):
        try:
            fp = solve_fold_point(system, y2, z, p, **solver_kw)
        except SolverError as exc:
            exc.y2 = float(y2)
            raise
        points.append(fp)
        z = fp.psi
    return points


def curve_second_difference(points: Sequence[FoldPoint]) -> float:
    """Largest second difference of the ``psi`` components along a curve."""
    if len(points) < 3:
        return 0.0
    psi = np.array([fp.psi for fp in points])
    return float(np.max(np.abs(np.diff(psi, n=2, axis=0))))


def write_fold_csv(points: Sequence[FoldPoint], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FOLD_CSV_HEADER)
    for fp in points:
        writer.writerow(fp.csv_row())


@dataclass(frozen=True)
class FoldDiagnostics:
    simple_zero: bool          # one simple zero eigenvalue, other in the left half-plane
    slow_independent: bool     # f_y1 or f_y2 independent of the stable eigenvector
    nondegenerate: bool        # kappa != 0
    lambda_margin: float
    kappa_margin: float
    independence: float

    @property
    def ok(self) -> bool:
        return self.simple_zero and self.slow_independent and self.nondegenerate


def simple_fold_check(system: SystemDefinition, point, p: Params,
                      zero_tol=ZERO_EIG_TOL, lambda_floor=LAMBDA_FLOOR,
                      kappa_floor=KAPPA_FLOOR,
                      independence_floor=INDEPENDENCE_FLOOR) -> FoldDiagnostics:
    """Check the simple-fold conditions at a point (FoldPoint or 4-state).

    ``kappa_margin`` is ``|kappa / lambda|``, the rate at which the critical
    eigenvalue moves along the kernel direction; it equals ``|F''(x1*)|`` for
    uncoupled cubic oscillators.
    """
    s = point.state if isinstance(point, FoldPoint) else np.asarray(point, dtype=float)
    a = system.fast_jacobian(s, p)
    vals, vecs = np.linalg.eig(a)
    vals = np.real_if_close(vals)
    i0 = int(np.argmin(np.abs(vals)))
    i1 = 1 - i0
    mu0, lam = vals[i0], vals[i1]
    simple_zero = bool(np.isreal(mu0) and abs(mu0) < zero_tol
                       and np.isreal(lam) and np.real(lam) < -lambda_floor)

    null = np.real(vecs[:, i0])
    other = np.real(vecs[:, i1])
    v = null[1] / null[0] if abs(null[0]) > 1e-12 else np.inf
    wvec = other / other[1] if abs(other[1]) > 1e-12 else other
    fy = system.fast_slow_partials(s, p)
    independence = max(abs(np.linalg.det(np.column_stack([fy[:, k], wvec]))) for k in range(2))

    if np.isfinite(v):
        kappa = fold_kappa(system, s, p, v)
        kappa_margin = abs(kappa / np.real(lam)) if np.real(lam) != 0 else np.inf
    else:
        kappa, kappa_margin = 0.0, 0.0
    return FoldDiagnostics(
        simple_zero=simple_zero,
        slow_independent=bool(independence > independence_floor),
        nondegenerate=bool(abs(kappa) > kappa_floor),
        lambda_margin=float(abs(np.real(lam))),
        kappa_margin=float(kappa_margin),
        independence=float(independence),
    )


def fhn_seed(y2: float, upper: bool = False) -> np.ndarray:
    """Uncoupled fold point of the cubic FitzHugh-Nagumo pair: oscillator 1
    at its fold ``x1 = -1`` (or ``+1``), oscillator 2 on the branch
    ``F(x2) = y2`` with ``x2 < -1``."""
    roots = np.roots([-1.0, 0.0, 3.0, -y2])
    real = np.real(roots[np.abs(np.imag(roots)) < 1e-9])
    left = real[real < -1.0]
    if left.size == 0:
        raise DegenerateFold(f"no branch x2 < -1 with F(x2) = {y2}")
    x1 = 1.0 if upper else -1.0
    return np.array([x1, float(left.min()), cubic(x1)])


class FoldSolver:
    """Cached fold-point solver for one set of fast parameters.

    New points are seeded from the nearest cached solution when it lies within
    ``max_step`` in ``y2``; otherwise from ``seed_fn`` if given, else by
    marching from the nearest cached solution. The fold curve does not depend
    on the slow parameters, so a solver can be shared across ``c1`` values.
    """

    def __init__(self, system: SystemDefinition, params: Params,
                 seed_fn: Optional[Callable[[float], np.ndarray]] = None,
                 anchor: Optional[tuple] = None,
                 branch: Optional[Branch] = LOWER_FOLD,
                 max_step: float = 0.05, **solver_kw):
        self.system = system
        self.params = params
        self.seed_fn = seed_fn
        self.branch = branch
        self.max_step = max_step
        self.solver_kw = solver_kw
        self._keys: list = []
        self._points: dict = {}
        if seed_fn is None and anchor is None:
            if system.name == "fhn":
                self.seed_fn = fhn_seed
            else:
                raise ValueError("need seed_fn or anchor=(y2, seed)")
        if anchor is not None:
            y2, seed = anchor
            self._store(self._solve(y2, seed))

    def _solve(self, y2, seed) -> FoldPoint:
        return solve_fold_point(self.system, y2, seed, self.params,
                                branch=self.branch, **self.solver_kw)

    def _store(self, fp: FoldPoint) -> FoldPoint:
        if fp.y2 not in self._points:
            bisect.insort(self._keys, fp.y2)
        self._points[fp.y2] = fp
        return fp

    def _nearest(self, y2) -> Optional[FoldPoint]:
        if not self._keys:
            return None
        i = bisect.bisect_left(self._keys, y2)
        cands = [self._keys[j] for j in (i - 1, i) if 0 <= j < len(self._keys)]
        return self._points[min(cands, key=lambda k: abs(k - y2))]

    def compatible(self, p: Params) -> bool:
        return (p.alpha1, p.alpha2) == (self.params.alpha1, self.params.alpha2)

    def __call__(self, y2: float) -> FoldPoint:
        y2 = float(y2)
        hit = self._points.get(y2)
        if hit is not None:
            return hit
        near = self._nearest(y2)
        if near is not None and abs(near.y2 - y2) <= self.max_step:
            return self._store(self._solve(y2, near.psi))
        if self.seed_fn is not None:
            return self._store(self._solve(y2, self.seed_fn(y2)))
        # march from the nearest known point
        n = int(math.ceil(abs(y2 - near.y2) / self.max_step))
        fp = near
        for yk in np.linspace(near.y2, y2, n + 1)[1:]:
            fp = self._store(self._solve(yk, fp.psi))
        return fp
