import numpy as np

from .errors import NoConvergence


def damped_newton(fun, jac, z0, tol=1e-12, max_iter=50, max_halvings=8):
    """Newton's method with step halving on residual increase.

    Converged when ``max|fun(z)| < tol``; one extra full step is then tried
    and kept only if it does not increase the residual, which usually takes
    the iterate to machine precision.

    Returns
    -------
    z : ndarray
    residual : float
    iterations : int
    """
    z = np.array(z0, dtype=float)
    r = np.asarray(fun(z), dtype=float)
    rn = np.max(np.abs(r))
    for it in range(max_iter + 1):
        if rn < tol:
            z, rn = _polish(fun, jac, z, r, rn)
            return z, rn, it
        if it == max_iter or not np.isfinite(rn):
            break
        try:
            step = np.linalg.solve(jac(z), -r)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Jacobian at {z}") from exc
        lam = 1.0
        for _ in range(max_halvings + 1):
            z_new = z + lam * step
            r_new = np.asarray(fun(z_new), dtype=float)
            rn_new = np.max(np.abs(r_new))
            if rn_new < rn:
                break
            lam *= 0.5
        z, r, rn = z_new, r_new, rn_new
    raise NoConvergence(
        f"no convergence after {max_iter} iterations (residual {rn:.3e})")


def _polish(fun, jac, z, r, rn):
    try:
        z_new = z + np.linalg.solve(jac(z), -r)
    except np.linalg.LinAlgError:
        return z, rn
    rn_new = np.max(np.abs(fun(z_new)))
    if rn_new <= rn:
        return z_new, rn_new
    return z, rn
