import io
import math
import warnings

import numpy as np
import pytest

from foldkit.errors import BlowUp
from foldkit.integrate import integrate, rk4_step, stability_probe, step_count
from foldkit.mmo import SimConfig, simulate
from foldkit.reduced import ReducedSystem, find_ordinary_equilibrium
from foldkit.system import Params, fhn_system, python_field


def test_rk4_zero_field():
    s = np.array([1.0, -2.0])
    assert np.array_equal(rk4_step(lambda t, x: np.zeros_like(x), s, 0.0, 0.1), s)


def test_rk4_exponential_one_step():
    dt = 0.001
    x1 = rk4_step(lambda t, x: x, np.array([1.0]), 0.0, dt)[0]
    poly = 1 + dt + dt**2 / 2 + dt**3 / 6 + dt**4 / 24
    assert x1 == pytest.approx(poly, abs=1e-16)
    assert abs(x1 - math.exp(dt)) < 1e-15
    assert repr(float(x1)).startswith("1.0010005001667")


def test_rk4_half_step_error_ratio():
    errs = [abs(rk4_step(lambda t, x: -x, np.array([1.0]), 0.0, dt)[0] - math.exp(-dt))
            for dt in (0.1, 0.05)]
    assert 28 < errs[0] / errs[1] < 36  # local error O(dt^5)


def test_rk4_blowup():
    with pytest.raises(BlowUp) as ei:
        rk4_step(lambda t, x: x * 1e308, np.array([1e10]), 2.0, 0.5)
    assert ei.value.t == 2.5


def test_rotation_energy_drift():
    field = lambda t, x: np.array([x[1], -x[0]])
    tr = integrate(field, [1.0, 0.0], 0.0, 10.0, 0.001, record_every=100)
    energy = np.sum(tr.states**2, axis=1)
    assert len(tr) == 101
    assert np.max(np.abs(energy - 1.0)) < 1e-10


def test_global_order_four():
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = integrate(lambda t, x: -x, [1.0], 0.0, 1.0, dt, record_every=1)
        errs.append(abs(tr.final_state[0] - math.exp(-1)))
    for a, b in zip(errs, errs[1:]):
        assert abs(a / b / 16 - 1) < 0.2


def test_record_counts_and_times():
    tr = integrate(lambda t, x: -x, [1.0], 0.0, 1.0, 0.01, record_every=10)
    assert len(tr) == 11
    assert np.allclose(np.diff(tr.times), 0.1)
    assert tr.final_time == pytest.approx(1.0)
    assert step_count(0.0, 500.0, 0.001) == 500_000


def test_single_record_when_t_end_equals_t0():
    tr = integrate(lambda t, x: -x, [3.0], 2.0, 2.0, 0.01)
    assert len(tr) == 1 and tr.times[0] == 2.0 and tr.final_state[0] == 3.0


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(t_end=-1.0), dict(record_every=0)])
def test_integrate_rejects_bad_arguments(kw):
    args = dict(t_end=1.0, dt=0.1, record_every=1)
    args.update(kw)
    with pytest.raises(ValueError):
        integrate(lambda t, x: x, [1.0], 0.0, args["t_end"], args["dt"], args["record_every"])


def test_blowup_returns_partial_trajectory():
    tr = integrate(lambda t, x: x * x, [1.0], 0.0, 2.0, 0.01, record_every=1)
    assert tr.blowup and 0.9 < tr.blowup_time < 1.1
    assert np.all(np.isfinite(tr.states))
    assert len(tr) < 201


def test_compiled_blowup_flag(fhn):
    p = Params(epsilon=0.1)
    tr = integrate(fhn.compiled_rhs, [50.0, 0.0, 0.0, 0.0], 0.0, 1.0, 0.01, 1, args=(p.as_array(),))
    assert tr.blowup
    assert np.all(np.isfinite(tr.states))


def test_compiled_path_matches_python_path(fhn):
    p = Params(c1=-0.9883)
    s0 = [-0.9, -1.5, -2.0, -1.125]
    a = integrate(fhn.compiled_rhs, s0, 0.0, 2.0, 0.001, 10, args=(p.as_array(),))
    b = integrate(python_field(fhn, p), s0, 0.0, 2.0, 0.001, 10)
    assert a.states.shape == b.states.shape == (201, 4)
    assert np.max(np.abs(a.states - b.states)) < 1e-12


def test_full_run_record_count():
    tr = simulate(SimConfig(Params(), t_end=500.0))
    assert len(tr) == 50_001
    assert tr.final_time == pytest.approx(500.0)
    assert tr.meta["dt"] == 0.001 and tr.meta["integrator"] == "rk4"


def test_determinism():
    cfg = SimConfig(Params(c1=-0.988295), t_end=20.0)
    a, b = simulate(cfg), simulate(cfg)
    assert np.array_equal(a.states, b.states)
    buf_a, buf_b = io.StringIO(), io.StringIO()
    a.write_csv(buf_a)
    b.write_csv(buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()
    assert buf_a.getvalue().splitlines()[0] == "t,x1,x2,y1,y2"


def test_self_convergence_before_lock_on():
    a = simulate(SimConfig(Params(c1=-0.988295), t_end=5.0, dt=0.001, record_every=1))
    b = simulate(SimConfig(Params(c1=-0.988295), t_end=5.0, dt=0.0005, record_every=2))
    assert np.max(np.abs(a.final_state - b.final_state)) < 1e-8


def test_equilibrium_run_approaches_computed_equilibrium():
    # the equilibrium at c1 = -0.99 is a weakly damped focus (rate ~0.011), so
    # the 1e-6 neighbourhood is reached only well after t = 500
    p = Params()
    oe = find_ordinary_equilibrium(ReducedSystem(p))
    at_500 = simulate(SimConfig(p, t_end=500.0)).final_state
    late = simulate(SimConfig(p, t_end=1500.0, record_every=1000)).final_state
    assert np.max(np.abs(at_500 - oe.state)) < 1e-2
    assert np.max(np.abs(late - oe.state)) < 1e-6


def test_stability_probe_warns():
    fhn = fhn_system()
    p = Params()
    eigs = lambda s: np.linalg.eigvals(fhn.fast_jacobian(s, p)) / p.epsilon
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert stability_probe(eigs, [np.zeros(4), np.array([2.0, 2.0, 0, 0])], 0.001) < 2.5
    with pytest.warns(RuntimeWarning):
        stability_probe(eigs, [np.array([2.0, 2.0, 0, 0])], 0.1)


def test_decimate():
    tr = integrate(lambda t, x: -x, [1.0], 0.0, 1.0, 0.01, record_every=1)
    d = tr.decimate(2)
    assert len(d) == 51 and d.meta["record_every"] == 2
    assert np.array_equal(d.states, tr.states[::2])
