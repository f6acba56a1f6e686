"""Reduced and desingularized flows near the fold, folded singularities and
the folded saddle-node (type II) transcritical transition.

Coordinates are the diagonalized chart centred on the fold point at ``y2``::

    (x1, x2) = x*(y2) + P(y2) @ (xi1, xi2),   y1 = y1*(y2) + eta

The critical manifold is solved numerically for ``(xi2, eta)`` as functions
of ``(xi1, y2)``; ``m = d eta / d xi1`` is the singular factor of the reduced
system ``m xi1' = g1, y2' = g2`` and the desingularized field is
``(g1, m g2)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (ChartViolation, DegenerateSingularity, NoConvergence,
                     NoRootInBracket, NoSignChange, SolverError)
from .fold import FoldPoint, FoldSolver, fold_tangent
from .newton import damped_newton
from .system import Params, SystemDefinition, eval_full_rhs, fhn_system

CHART_RADIUS = 0.5
FD_STEP = 1e-6
ROOT_TOL = 1e-11
DEGEN_TOL = 1e-9
DEGENERATE_SLOPE = 1e-8
NU_MAX = 0.1
Y2_SCAN = (-1.999, 1.0, 61)


class FoldedKind(str, enum.Enum):
    SADDLE = "FoldedSaddle"
    NODE_ATTRACTING = "FoldedNodeAttracting"
    NODE_REPELLING = "FoldedNodeRepelling"
    FOCUS = "FoldedFocus"
    DEGENERATE = "DegenerateNearFSN"


class PlanarKind(str, enum.Enum):
    SADDLE = "Saddle"
    STABLE_NODE = "StableNode"
    UNSTABLE_NODE = "UnstableNode"
    STABLE_FOCUS = "StableFocus"
    UNSTABLE_FOCUS = "UnstableFocus"
    CENTER = "Center"
    DEGENERATE = "Degenerate"


def classify_folded(jac, degen_tol=DEGEN_TOL) -> FoldedKind:
    det = np.linalg.det(jac)
    tr = np.trace(jac)
    if abs(det) < degen_tol:
        return FoldedKind.DEGENERATE
    if det < 0:
        return FoldedKind.SADDLE
    if tr * tr - 4 * det < 0:
        return FoldedKind.FOCUS
    return FoldedKind.NODE_ATTRACTING if tr < 0 else FoldedKind.NODE_REPELLING


def classify_planar(jac, degen_tol=DEGEN_TOL) -> PlanarKind:
    det = np.linalg.det(jac)
    tr = np.trace(jac)
    if abs(det) < degen_tol:
        return PlanarKind.DEGENERATE
    if det < 0:
        return PlanarKind.SADDLE
    if tr == 0:
        return PlanarKind.CENTER
    if tr * tr - 4 * det < 0:
        return PlanarKind.STABLE_FOCUS if tr < 0 else PlanarKind.UNSTABLE_FOCUS
    return PlanarKind.STABLE_NODE if tr < 0 else PlanarKind.UNSTABLE_NODE


@dataclass(frozen=True)
class ManifoldPoint:
    x1: float            # chart coordinate xi1
    y2: float
    xi2: float
    eta: float
    m: float             # d eta / d xi1
    state: np.ndarray    # lifted (x1, x2, y1, y2)
    fold: FoldPoint


class ReducedSystem:
    """Reduced dynamics on the critical manifold for one parameter point.

    Fold points are obtained from a :class:`FoldSolver`, shared between
    instances that differ only in slow parameters (see :meth:`with_params`).
    """

    def __init__(self, params: Params, system: Optional[SystemDefinition] = None,
                 fold_solver: Optional[FoldSolver] = None,
                 chart_radius=CHART_RADIUS, fd_step=FD_STEP,
                 root_tol=ROOT_TOL, degen_tol=DEGEN_TOL):
        self.params = params
        self.system = system or (fold_solver.system if fold_solver else fhn_system())
        if fold_solver is None or not fold_solver.compatible(params):
            fold_solver = FoldSolver(self.system, params)
        self.fold_solver = fold_solver
        self.chart_radius = chart_radius
        self.fd_step = fd_step
        self.root_tol = root_tol
        self.degen_tol = degen_tol
        self._tangent: dict = {}

    def with_params(self, **changes) -> "ReducedSystem":
        return ReducedSystem(self.params.replace(**changes), self.system, self.fold_solver,
                             self.chart_radius, self.fd_step, self.root_tol, self.degen_tol)

    def with_c1(self, c1) -> "ReducedSystem":
        return self.with_params(c1=float(c1))

    # -- fold data -------------------------------------------------------
    def fold(self, y2) -> FoldPoint:
        return self.fold_solver(y2)

    def tangent(self, y2) -> np.ndarray:
        y2 = float(y2)
        t = self._tangent.get(y2)
        if t is None:
            t = fold_tangent(self.system, self.fold(y2), self.params)
            self._tangent[y2] = t
        return t

    def dy1star_dy2(self, y2) -> float:
        return float(self.tangent(y2)[2])

    # -- critical manifold in the chart ----------------------------------
    def manifold(self, x1, y2) -> ManifoldPoint:
        x1, y2 = float(x1), float(y2)
        if not abs(x1) < self.chart_radius:
            raise ChartViolation(f"|x1|={abs(x1):.3g} outside chart radius {self.chart_radius}")
        fp = self.fold(y2)
        if x1 == 0.0:
            return ManifoldPoint(0.0, y2, 0.0, 0.0, 0.0, fp.state, fp)
        sy, p = self.system, self.params
        P = fp.P
        xstar = np.array([fp.x1_star, fp.x2_star])

        def lift(z):
            x = xstar + P @ np.array([x1, z[0]])
            return np.array([x[0], x[1], fp.y1_star + z[1], y2])

        def fun(z):
            return sy.fast_rhs(lift(z), p)

        def jac(z):
            s = lift(z)
            return np.column_stack([sy.fast_jacobian(s, p) @ P[:, 1],
                                    sy.fast_slow_partials(s, p)[:, 0]])

        try:
            z, _, _ = damped_newton(fun, jac, [0.0, 0.5 * fp.K * x1 * x1], tol=1e-13)
        except NoConvergence as exc:
            raise NoConvergence(f"manifold solve at x1={x1!r}, y2={y2!r}: {exc}") from None
        s = lift(z)
        a = jac(z)
        _, m = np.linalg.solve(a, -(sy.fast_jacobian(s, p) @ P[:, 0]))
        return ManifoldPoint(x1, y2, float(z[0]), float(z[1]), float(m), s, fp)

    def m(self, x1, y2) -> float:
        return self.manifold(x1, y2).m

    # -- slow flow -------------------------------------------------------
    def g(self, x1, y2) -> np.ndarray:
        """``(g1, g2)``: slow field on the manifold, ``g1`` carrying the
        ``-dy1*/dy2 * g2`` term from the moving fold point."""
        mp = self.manifold(x1, y2)
        s1, s2 = self.system.slow_rhs(mp.state, self.params)
        return np.array([s1 - self.dy1star_dy2(y2) * s2, s2])

    def g1(self, x1, y2) -> float:
        return float(self.g(x1, y2)[0])

    def g2(self, x1, y2) -> float:
        return float(self.g(x1, y2)[1])

    def desing_rhs(self, s) -> np.ndarray:
        mp = self.manifold(s[0], s[1])
        s1, s2 = self.system.slow_rhs(mp.state, self.params)
        return np.array([s1 - self.dy1star_dy2(s[1]) * s2, mp.m * s2])

    def reduced_rhs(self, s) -> np.ndarray:
        mp = self.manifold(s[0], s[1])
        if mp.m == 0.0:
            raise ChartViolation("reduced flow is singular on the fold line")
        s1, s2 = self.system.slow_rhs(mp.state, self.params)
        return np.array([(s1 - self.dy1star_dy2(s[1]) * s2) / mp.m, s2])

    # -- derivatives by central differences ------------------------------
    def g_jacobian(self, x1, y2) -> np.ndarray:
        """2x2 Jacobian of ``(g1, g2)`` with respect to ``(x1, y2)``."""
        h = self.fd_step
        cols = [(self.g(x1 + h, y2) - self.g(x1 - h, y2)) / (2 * h),
                (self.g(x1, y2 + h) - self.g(x1, y2 - h)) / (2 * h)]
        return np.column_stack(cols)

    def desing_jacobian(self, x1, y2) -> np.ndarray:
        h = self.fd_step
        cols = [(self.desing_rhs((x1 + h, y2)) - self.desing_rhs((x1 - h, y2))) / (2 * h),
                (self.desing_rhs((x1, y2 + h)) - self.desing_rhs((x1, y2 - h))) / (2 * h)]
        return np.column_stack(cols)

    def lift(self, x1, y2) -> np.ndarray:
        return self.manifold(x1, y2).state


def _scan_roots(fun, lo, hi, n):
    grid = np.linspace(lo, hi, n)
    vals = []
    for y in grid:
        try:
            vals.append(fun(y))
        except SolverError:
            vals.append(np.nan)
    vals = np.array(vals)
    brackets = [(grid[i], grid[i + 1]) for i in range(n - 1)
                if np.isfinite(vals[i]) and np.isfinite(vals[i + 1])
                and np.sign(vals[i]) != np.sign(vals[i + 1])]
    return grid, vals, brackets


def _root(fun, bracket, scan, near, what):
    if bracket is None:
        grid, vals, brackets = _scan_roots(fun, *scan)
        finite = vals[np.isfinite(vals)]
        if finite.size and np.max(np.abs(finite)) < ROOT_TOL:
            raise DegenerateSingularity(f"{what} vanishes identically on the scanned fold line")
        if not brackets:
            raise NoRootInBracket(f"no sign change of {what} on y2 in [{scan[0]}, {scan[1]}]")
        if near is None:
            bracket = brackets[0]
        else:
            bracket = min(brackets, key=lambda b: abs(0.5 * (b[0] + b[1]) - near))
    lo, hi = bracket
    flo, fhi = fun(lo), fun(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        if max(abs(flo), abs(fhi)) < ROOT_TOL:
            raise DegenerateSingularity(f"{what} vanishes identically in bracket {bracket}")
        raise NoRootInBracket(f"no root of {what} in y2 bracket {bracket}")
    return float(brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


@dataclass
class FoldedSingularity:
    y2_fold: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    kind: FoldedKind
    c1: float
    g1_residual: float
    dg1_dy2: float
    g2: float
    K: float

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.jacobian))


def find_folded_singularity(rs: ReducedSystem, bracket=None, near=None,
                            scan=Y2_SCAN) -> FoldedSingularity:
    """Root of ``g1(0, y2)`` and the desingularized Jacobian there.

    The Jacobian is ``[[dg1/dx1, dg1/dy2], [K g2, 0]]``: the lower-left entry is
    ``d(m g2)/dx1`` at the fold line, with ``m'(0) = K``. When the scan finds
    several roots and ``near`` is not given, the root closest to ``ybar2``
    (where an ordinary equilibrium can reach the fold) is taken.
    """
    if bracket is None and near is None:
        try:
            near = ybar2(rs, scan=scan)
        except (SolverError, NoRootInBracket):
            near = None
    y2f = _root(lambda y: rs.g1(0.0, y), bracket, scan, near, "g1(0, y2)")
    res = rs.g1(0.0, y2f)
    if abs(res) >= rs.root_tol:
        raise NoConvergence(f"folded singularity residual {res:.3e} above {rs.root_tol}")
    gj = rs.g_jacobian(0.0, y2f)
    if abs(gj[0, 1]) < DEGENERATE_SLOPE:
        raise DegenerateSingularity(f"dg1/dy2 = {gj[0, 1]:.3e}: fold line degenerate")
    K = rs.fold(y2f).K
    g2 = rs.g2(0.0, y2f)
    jac = np.array([[gj[0, 0], gj[0, 1]], [K * g2, 0.0]])
    return FoldedSingularity(y2f, jac, np.linalg.eigvals(jac), classify_folded(jac, rs.degen_tol),
                             rs.params.c1, float(res), float(gj[0, 1]), float(g2), float(K))


@dataclass
class OrdinaryEquilibrium:
    x1_e: float
    y2_e: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    kind: PlanarKind
    residual: float
    full_residual: float
    state: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.jacobian))


def ybar2(rs: ReducedSystem, bracket=None, scan=Y2_SCAN) -> float:
    """Root of ``g2(0, y2)``: where a true equilibrium can sit on the fold."""
    return _root(lambda y: rs.g2(0.0, y), bracket, scan, None, "g2(0, y2)")


def find_ordinary_equilibrium(rs: ReducedSystem, seed=None) -> OrdinaryEquilibrium:
    """Solve ``g1 = g2 = 0`` in the chart and lift to the full system."""
    if seed is None:
        seed = (0.0, ybar2(rs))

    def fun(z):
        return rs.g(z[0], z[1])

    try:
        z, res, _ = damped_newton(fun, lambda z: rs.g_jacobian(z[0], z[1]), seed,
                                  tol=rs.root_tol, max_iter=50)
    except ChartViolation as exc:
        raise ChartViolation(f"ordinary equilibrium outside chart: {exc}") from None
    x1e, y2e = float(z[0]), float(z[1])
    if not abs(x1e) < rs.chart_radius:
        raise ChartViolation(f"ordinary equilibrium x1={x1e:.4g} outside chart")
    state = rs.lift(x1e, y2e)
    full = float(np.max(np.abs(eval_full_rhs(rs.system, state, rs.params))))
    jac = rs.desing_jacobian(x1e, y2e)
    return OrdinaryEquilibrium(x1e, y2e, jac, np.linalg.eigvals(jac),
                               classify_planar(jac, rs.degen_tol), float(res), full, state)


def fhn_g(rs: ReducedSystem, x1, y2) -> np.ndarray:
    """Closed-form ``(g1, g2)`` for the coupled FitzHugh-Nagumo pair, truncated
    at first order in ``x1``."""
    p = rs.params
    fp = rs.fold(y2)
    g2 = fp.x2_star + fp.v * x1 - p.c2 + p.beta2 * (fp.y1_star - y2)
    g1 = (fp.x1_star + x1 - p.c1 + p.beta1 * (y2 - fp.y1_star)
          - rs.dy1star_dy2(y2) * g2)
    return np.array([g1, g2])


# -- reduced vs desingularized trajectories --------------------------------
FOLD_GUARD = 0.05
STRIP_OUTER = 0.4


@dataclass
class FlowMatchReport:
    hausdorff: float
    reduced_time: float          # reduced-flow time covered by the run
    orientation: str             # "same" or "reversed"
    aligned: bool                # field directions agree with ``orientation``
    complete: bool               # False if the run stopped at the fold guard
    left_strip: bool             # desingularized run stopped past |x1| = outer
    desing: np.ndarray
    reduced: np.ndarray
    message: str = ""


def _segment_distances(points, poly):
    """Distance from each point to the polyline ``poly`` (vectorized)."""
    a, b = poly[:-1], poly[1:]
    ab = b - a
    ll = np.einsum("ij,ij->i", ab, ab)
    out = np.empty(len(points))
    for i, q in enumerate(points):
        if len(poly) == 1:
            out[i] = np.linalg.norm(q - poly[0])
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.clip(np.where(ll > 0, np.einsum("ij,ij->i", q - a, ab) / ll, 0.0), 0.0, 1.0)
        out[i] = np.min(np.linalg.norm(a + u[:, None] * ab - q, axis=1))
    return out


def hausdorff_polylines(p, q) -> float:
    """Symmetric Hausdorff distance between two piecewise-linear curves."""
    p, q = np.atleast_2d(p), np.atleast_2d(q)
    return float(max(_segment_distances(p, q).max(), _segment_distances(q, p).max()))


def _guarded_rk4(fun, s0, T, h, guard, outer=np.inf):
    # returns (points, status) with status "ok", "fold" or "strip"
    n = max(1, int(np.ceil(abs(T) / h - 1e-9)))
    h = T / n
    s = np.array(s0, dtype=float)
    out = [s]
    for _ in range(n):
        k1 = fun(s)
        k2 = fun(s + 0.5 * h * k1)
        k3 = fun(s + 0.5 * h * k2)
        k4 = fun(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if abs(s[0]) <= guard:
            return np.array(out), "fold"
        out.append(s)
        if abs(s[0]) > outer:
            return np.array(out), "strip"
    return np.array(out), "ok"


def reduced_flow_match(rs: ReducedSystem, s0, T=1.0, h=5e-3, guard=FOLD_GUARD,
                       outer=STRIP_OUTER) -> FlowMatchReport:
    """Integrate the desingularized field for time ``T`` and the reduced
    field for the matching reduced time, then compare the two point sets.

    Runs are confined to the strip ``guard < |x1| <= outer``: the
    desingularized run stops at the first step past ``outer`` and the reduced
    run then covers exactly the reduced time reached.

    The desingularized run carries reduced time ``tau`` with ``dtau/ds = m``;
    where ``m < 0`` (``x1 < 0`` for ``K > 0``) ``tau`` runs backwards and the
    reduced trajectory is traced by integrating the negated reduced field.
    """
    s0 = np.asarray(s0, dtype=float)
    if abs(s0[0]) <= guard:
        raise ChartViolation(f"start |x1|={abs(s0[0]):.3g} within fold guard {guard}")
    if np.max(np.abs(rs.desing_rhs(s0))) == 0.0:
        pts = s0[None, :]
        return FlowMatchReport(0.0, 0.0, "same", True, True, False, pts, pts, "fixed point")

    def aug(z):
        mp = rs.manifold(z[0], z[1])
        s1, s2 = rs.system.slow_rhs(mp.state, rs.params)
        return np.array([s1 - rs.dy1star_dy2(z[1]) * s2, mp.m * s2, mp.m])

    if not abs(s0[0]) <= outer:
        raise ChartViolation(f"start |x1|={abs(s0[0]):.3g} outside strip bound {outer}")
    da, status = _guarded_rk4(aug, [s0[0], s0[1], 0.0], T, h, guard, outer)
    tau = float(da[-1, 2])
    sign = 1.0 if tau >= 0 else -1.0
    ra, status_r = _guarded_rk4(lambda z: sign * rs.reduced_rhs(z), s0, abs(tau), h, guard)
    complete = status != "fold" and status_r != "fold"
    desing, reduced = da[:, :2], ra
    dist = hausdorff_polylines(desing, reduced)
    orientation = "same" if tau >= 0 else "reversed"
    dot = float(np.dot(rs.desing_rhs(s0), rs.reduced_rhs(s0)))
    aligned = (dot > 0) == (orientation == "same")
    msg = "" if complete else f"fold guard |x1|<={guard} reached; partial report"
    return FlowMatchReport(dist, tau, orientation, aligned, complete, status == "strip",
                           desing, reduced, msg)
