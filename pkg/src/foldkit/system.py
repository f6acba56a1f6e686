"""Two-fast/two-slow coupled oscillator systems.

A state is a plain 4-vector ordered ``(x1, x2, y1, y2)``. The fast right-hand
side ``f`` is returned *without* the ``1/epsilon`` factor; :func:`eval_full_rhs`
assembles the slow-time vector field.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .errors import EvaluationOverflow

X1, X2, Y1, Y2 = range(4)


@dataclass(frozen=True)
class Params:
    """Model parameters. Defaults are the coupled FitzHugh-Nagumo set used
    for the numerical experiments (``c1`` at the stable-equilibrium value)."""

    epsilon: float = 0.1
    alpha1: float = 0.01
    alpha2: float = 0.01
    beta1: float = 0.01
    beta2: float = 0.01
    c1: float = -0.99
    c2: float = -1.5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValueError(f"parameter {f.name} must be finite")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def nu(self) -> float:
        return max(self.alpha1, self.alpha2, self.beta1, self.beta2)

    def replace(self, **changes) -> "Params":
        return dataclasses.replace(self, **changes)

    def uncoupled(self) -> "Params":
        return self.replace(alpha1=0.0, alpha2=0.0, beta1=0.0, beta2=0.0)

    def with_coupling(self, nu: float) -> "Params":
        return self.replace(alpha1=nu, alpha2=nu, beta1=nu, beta2=nu)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in dataclasses.fields(self)])

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SystemDefinition:
    """Evaluatable slow-fast system with analytic partial derivatives.

    ``fast_hessian`` returns the second derivatives of ``f`` with respect to
    the full state, shape ``(2, 4, 4)``; entry ``[i, a, b]`` is
    ``d^2 f_i / ds_a ds_b``. ``compiled_rhs``, when present, is a numba kernel
    ``(t, s, params_array) -> ds/dt``; ``compiled_run`` an optional cached RK4
    loop over it (see :func:`foldkit.integrate.integrate`).
    """

    name: str
    fast_rhs: Callable[[np.ndarray, Params], np.ndarray]
    slow_rhs: Callable[[np.ndarray, Params], np.ndarray]
    fast_jacobian: Callable[[np.ndarray, Params], np.ndarray]
    fast_slow_partials: Callable[[np.ndarray, Params], np.ndarray]
    fast_hessian: Callable[[np.ndarray, Params], np.ndarray]
    compiled_rhs: Optional[Callable] = field(default=None, compare=False)
    compiled_run: Optional[Callable] = field(default=None, compare=False)

    def fast_state_jacobian(self, s, p) -> np.ndarray:
        """2x4 matrix of first derivatives of ``f`` w.r.t. the full state."""
        return np.hstack([self.fast_jacobian(s, p), self.fast_slow_partials(s, p)])


def cubic(z):
    return -z**3 + 3.0 * z


def cubic_d1(z):
    return -3.0 * z**2 + 3.0


def cubic_d2(z):
    return -6.0 * z


def _fhn_fast(s, p):
    x1, x2, y1, y2 = s
    return np.array([
        cubic(x1) - y1 + p.alpha1 * (x2 - x1),
        cubic(x2) - y2 + p.alpha2 * (x1 - x2),
    ])


def _fhn_slow(s, p):
    x1, x2, y1, y2 = s
    return np.array([
        x1 - p.c1 + p.beta1 * (y2 - y1),
        x2 - p.c2 + p.beta2 * (y1 - y2),
    ])


def _fhn_fast_jacobian(s, p):
    x1, x2 = s[X1], s[X2]
    return np.array([
        [cubic_d1(x1) - p.alpha1, p.alpha1],
        [p.alpha2, cubic_d1(x2) - p.alpha2],
    ])


def _fhn_fast_slow_partials(s, p):
    return np.array([[-1.0, 0.0], [0.0, -1.0]])


def _fhn_fast_hessian(s, p):
    h = np.zeros((2, 4, 4))
    h[0, X1, X1] = cubic_d2(s[X1])
    h[1, X2, X2] = cubic_d2(s[X2])
    return h


@numba.njit(cache=True)
def fhn_compiled_rhs(t, s, q):
    # q = Params.as_array(): epsilon, alpha1, alpha2, beta1, beta2, c1, c2
    x1, x2, y1, y2 = s[0], s[1], s[2], s[3]
    out = np.empty(4)
    out[0] = (-x1**3 + 3.0 * x1 - y1 + q[1] * (x2 - x1)) / q[0]
    out[1] = (-x2**3 + 3.0 * x2 - y2 + q[2] * (x1 - x2)) / q[0]
    out[2] = x1 - q[5] + q[3] * (y2 - y1)
    out[3] = x2 - q[6] + q[4] * (y1 - y2)
    return out


@numba.njit(cache=True)
def fhn_compiled_run(s0, t0, dt, n, every, q, out):
    # RK4 loop with the kernel bound as a global, so numba can cache it on disk
    s = s0.copy()
    out[0] = s
    for i in range(n):
        t = t0 + i * dt
        k1 = fhn_compiled_rhs(t, s, q)
        k2 = fhn_compiled_rhs(t + 0.5 * dt, s + 0.5 * dt * k1, q)
        k3 = fhn_compiled_rhs(t + 0.5 * dt, s + 0.5 * dt * k2, q)
        k4 = fhn_compiled_rhs(t + dt, s + dt * k3, q)
        s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for j in range(s.size):
            if not np.isfinite(s[j]):
                return i + 1, s
        if (i + 1) % every == 0:
            out[(i + 1) // every] = s
    return n, s


def fhn_system() -> SystemDefinition:
    """Two diffusively coupled FitzHugh-Nagumo oscillators with
    ``F(z) = -z^3 + 3z``, ``G_j = x_j - c_j`` and linear coupling in both the
    fast (``alpha``) and slow (``beta``) equations."""
    return SystemDefinition(
        name="fhn",
        fast_rhs=_fhn_fast,
        slow_rhs=_fhn_slow,
        fast_jacobian=_fhn_fast_jacobian,
        fast_slow_partials=_fhn_fast_slow_partials,
        fast_hessian=_fhn_fast_hessian,
        compiled_rhs=fhn_compiled_rhs,
        compiled_run=fhn_compiled_run,
    )


def eval_full_rhs(system: SystemDefinition, s, p: Params) -> np.ndarray:
    """Slow-time vector field ``(f1/eps, f2/eps, g1, g2)``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.concatenate([system.fast_rhs(s, p) / p.epsilon, system.slow_rhs(s, p)])
    if not np.all(np.isfinite(out)):
        raise EvaluationOverflow(f"evaluation overflow at state {s}")
    return out


def python_field(system: SystemDefinition, p: Params):
    """Return ``field(t, s)`` for the generic (uncompiled) integrator path."""
    def field(t, s):
        return eval_full_rhs(system, s, p)
    return field


@dataclass
class FdReport:
    passed: bool
    max_rel_error: float
    failures: list  # (block, index, analytic, numeric)

    def __str__(self):
        head = f"fd_check {'PASS' if self.passed else 'FAIL'} max_rel_error={self.max_rel_error:.3e}"
        lines = [head] + [f"  {b}{idx}: analytic={a:.12g} numeric={n:.12g}"
                          for b, idx, a, n in self.failures]
        return "\n".join(lines)


def fd_check(system: SystemDefinition, s, p: Params, h: float = 1e-5,
             rtol: float = 1e-6, atol: float = 1e-9) -> FdReport:
    """Audit analytic partials against central differences.

    Checks ``df/dx``, ``df/dy`` (differencing ``fast_rhs``) and the Hessian
    (differencing the analytic first derivatives). Entry errors are relative;
    absolute discrepancies below ``atol`` count as zero.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    s = np.asarray(s, dtype=float)

    num_first = np.empty((2, 4))
    num_second = np.empty((2, 4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        num_first[:, k] = (system.fast_rhs(s + e, p) - system.fast_rhs(s - e, p)) / (2 * h)
        num_second[:, :, k] = (system.fast_state_jacobian(s + e, p)
                               - system.fast_state_jacobian(s - e, p)) / (2 * h)

    blocks = [
        ("fast_jacobian", system.fast_jacobian(s, p), num_first[:, :2]),
        ("fast_slow_partials", system.fast_slow_partials(s, p), num_first[:, 2:]),
        ("fast_hessian", system.fast_hessian(s, p), num_second),
    ]
    worst = 0.0
    failures = []
    for name, analytic, numeric in blocks:
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(diff > atol, diff / scale, 0.0)
        worst = max(worst, float(np.max(rel)))
        for idx in zip(*np.nonzero(rel >= rtol)):
            failures.append((name, tuple(int(i) for i in idx),
                             float(analytic[idx]), float(numeric[idx])))
    return FdReport(passed=not failures, max_rel_error=worst, failures=failures)
