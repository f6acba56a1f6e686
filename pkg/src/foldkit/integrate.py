"""Fixed-step classical RK4 with decimated trajectory recording."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from numba.core.registry import CPUDispatcher

from .errors import BlowUp

STATE_HEADER = ["t", "x1", "x2", "y1", "y2"]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)
    final_time: float = 0.0
    final_state: np.ndarray = None
    blowup: bool = False
    blowup_time: float = math.nan

    def __len__(self):
        return len(self.times)

    def decimate(self, k: int) -> "Trajectory":
        meta = dict(self.meta, record_every=self.meta.get("record_every", 1) * k)
        return Trajectory(self.times[::k], self.states[::k], meta, self.final_time,
                          self.final_state, self.blowup, self.blowup_time)

    def write_csv(self, fh, header=STATE_HEADER) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, s in zip(self.times, self.states):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in s])


def rk4_step(field, s, t, dt, *args):
    """One classical RK4 step of ``ds/dt = field(t, s, *args)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = field(t, s, *args)
        k2 = field(t + 0.5 * dt, s + 0.5 * dt * k1, *args)
        k3 = field(t + 0.5 * dt, s + 0.5 * dt * k2, *args)
        k4 = field(t + dt, s + dt * k3, *args)
        out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise BlowUp(f"blow-up at t={t + dt!r}", t + dt)
    return out


@numba.njit(cache=True)
def _integrate_compiled(field, s0, t0, dt, n, every, q, out):
    s = s0.copy()
    out[0] = s
    for i in range(n):
        t = t0 + i * dt
        k1 = field(t, s, q)
        k2 = field(t + 0.5 * dt, s + 0.5 * dt * k1, q)
        k3 = field(t + 0.5 * dt, s + 0.5 * dt * k2, q)
        k4 = field(t + dt, s + dt * k3, q)
        s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for j in range(s.size):
            if not np.isfinite(s[j]):
                return i + 1, s
        if (i + 1) % every == 0:
            out[(i + 1) // every] = s
    return n, s


def step_count(t0, t_end, dt) -> int:
    return int(math.ceil((t_end - t0) / dt - 1e-9))


def integrate(field, s0, t0, t_end, dt, record_every=10, args=(), meta=None,
              runner=None) -> Trajectory:
    """Integrate with ``ceil((t_end - t0)/dt)`` RK4 steps, keeping every
    ``record_every``-th state (the initial state is always kept).

    ``field(t, s, *args)`` must return an array. A numba-compiled field with a
    single parameter-array argument runs in a compiled loop; ``runner``, a
    compiled loop with the field built in (``SystemDefinition.compiled_run``),
    replaces the generic one and avoids recompiling it per process. A non-finite state
    stops the run; the partial trajectory is returned with ``blowup`` set.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < t0:
        raise ValueError("t_end must not precede t0")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    s0 = np.array(s0, dtype=float)
    n = step_count(t0, t_end, dt)
    n_rec = n // record_every + 1
    meta = dict(meta or {}, dt=dt, record_every=record_every, integrator="rk4")

    if (runner is not None or isinstance(field, CPUDispatcher)) and len(args) == 1:
        out = np.empty((n_rec, s0.size))
        q = np.asarray(args[0], dtype=float)
        if runner is not None:
            done, last = runner(s0, float(t0), float(dt), n, record_every, q, out)
        else:
            done, last = _integrate_compiled(field, s0, float(t0), float(dt), n, record_every,
                                             q, out)
        blowup = done < n or not np.all(np.isfinite(last))
        kept = done // record_every + 1 if not blowup else (done - 1) // record_every + 1
        times = t0 + np.arange(kept) * (record_every * dt)
        return Trajectory(times, out[:kept], meta, t0 + done * dt, last, blowup,
                          t0 + done * dt if blowup else math.nan)

    states = [s0]
    s = s0
    for i in range(n):
        t = t0 + i * dt
        try:
            s = rk4_step(field, s, t, dt, *args)
        except BlowUp as exc:
            times = t0 + np.arange(len(states)) * (record_every * dt)
            return Trajectory(times, np.array(states), meta, t0 + i * dt, s, True, exc.t)
        if (i + 1) % record_every == 0:
            states.append(s)
    times = t0 + np.arange(len(states)) * (record_every * dt)
    return Trajectory(times, np.array(states), meta, t0 + n * dt, s)


def stability_probe(jacobian_eigs, s_samples, dt, limit=2.5) -> float:
    """Largest ``|lambda| dt`` over sample states; warns above ``limit``.

    ``jacobian_eigs(s)`` returns eigenvalues of the linearized field at ``s``.
    """
    worst = max(float(np.max(np.abs(jacobian_eigs(s)))) for s in s_samples) * dt
    if worst > limit:
        warnings.warn(f"RK4 step may be unstable: max |lambda| dt = {worst:.3g} > {limit}",
                      RuntimeWarning, stacklevel=2)
    return worst
