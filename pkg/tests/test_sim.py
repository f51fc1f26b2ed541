import math

import numpy as np
import pytest

from pfem import phcore, sim
from pfem.models import ModelConfig, build
from pfem.verify import random_state


def _swe1d(**kw):
    return build(ModelConfig(**{"model": "swe1d", "n": 8, **kw}))


def _signal(prob, A):
    return sim.harmonic_inflow_1d(prob, A, 2 * math.pi)


def _run(sys, x0, signal, dt, T, method):
    return sim.simulate(sys, x0, signal, T, dt, method=method, check_power=False).final_state


def test_linear_midpoint_conserves_energy(rng):
    prob = build(ModelConfig(model="beam", n=6))
    x = rng.standard_normal(prob.sys.n)
    H0 = phcore.hamiltonian(prob.sys, x)
    st = sim.MidpointStepper(prob.sys)
    for k in range(50):
        x = st.step(x, sim.zero_signal(4), k * 1e-2, 1e-2)
    assert abs(phcore.hamiltonian(prob.sys, x) - H0) < 1e-12 * H0


@pytest.mark.parametrize("method", ["midpoint", "rk4"])
@pytest.mark.parametrize("model", ["swe1d", "swe2d", "beam"])
def test_equilibrium_preserved(method, model):
    prob = build(ModelConfig(model=model, n=4, nx=2, ny=2))
    x0 = prob.flat_state()
    x = _run(prob.sys, x0, sim.zero_signal(prob.sys.nb), 1e-2, 0.1, method)
    # unchanged up to the Newton tolerance
    assert np.abs(x - x0).max() < 1e-10 * max(1.0, np.abs(x0).max())


@pytest.mark.parametrize("method,ratio,k", [("midpoint", 4.0, 64), ("rk4", 16.0, 256)])
def test_richardson_order(method, ratio, k):
    prob = _swe1d(q_order=2, p_order=1)
    sig = _signal(prob, 0.3)
    x0 = prob.flat_state()
    T = 0.08
    ref = _run(prob.sys, x0, sig, T / 2048, T, "rk4")
    e1 = np.linalg.norm(_run(prob.sys, x0, sig, T / k, T, method) - ref)
    e2 = np.linalg.norm(_run(prob.sys, x0, sig, T / (2 * k), T, method) - ref)
    assert e1 / e2 == pytest.approx(ratio, rel=0.1)


def test_midpoint_and_rk4_agree_to_second_order():
    prob = _swe1d()
    sig = _signal(prob, 0.3)
    x0 = prob.flat_state()
    diffs = []
    for dt in (0.01, 0.005):
        a = _run(prob.sys, x0, sig, dt, 0.1, "midpoint")
        b = _run(prob.sys, x0, sig, dt, 0.1, "rk4")
        diffs.append(np.linalg.norm(a - b))
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.15)


def test_step_failure_reports_residuals():
    prob = _swe1d()
    st = sim.MidpointStepper(prob.sys, tol=1e-40, maxit=2)
    with pytest.raises(sim.StepFailure) as info:
        st.step(prob.flat_state(), _signal(prob, 0.5), 0.0, 1e-2)
    assert len(info.value.residuals) >= 2


def test_step_rejects_nonpositive_dt():
    prob = _swe1d()
    with pytest.raises(ValueError):
        sim.step_midpoint(prob.sys, prob.flat_state(), sim.zero_signal(2), 0.0, 0.0)


def test_rest_observables_constant():
    prob = build(ModelConfig(model="swe2d", nx=3, ny=3))
    tr = sim.simulate(prob.sys, prob.flat_state(), sim.zero_signal(prob.sys.nb), 0.2, 0.01)
    for v in (tr.H, tr.V):
        assert np.ptp(v) <= 1e-12 * abs(v[0])
    assert np.ptp(tr.y, axis=0).max() <= 1e-12 * np.abs(tr.y).max()
    assert np.all(np.diff(tr.times) > 0)


def test_partial_trajectory_on_failure():
    prob = _swe1d(hamiltonian="quadratic")
    good = _signal(prob, 1.0)

    class Blowup:
        def __call__(self, t):
            return good(t) if t < 0.05 else np.full(2, np.nan)

    with pytest.raises(sim.SimulationError) as info:
        sim.simulate(prob.sys, prob.flat_state(), Blowup(), 0.2, 0.01)
    tr = info.value.trajectory
    assert 1 < len(tr.times) < 21 and np.all(np.isfinite(tr.H))


def test_energy_bookkeeping_linear_is_exact():
    prob = _swe1d()
    lsys = sim.linearized_system(prob)
    sig = _signal(prob, 0.3)
    dt = 1e-2
    x = prob.flat_state()
    st = sim.MidpointStepper(lsys)
    for k in range(20):
        t = k * dt
        xn = st.step(x, sig, t, dt)
        y, _ = phcore.output(lsys, 0.5 * (x + xn))
        dH = phcore.hamiltonian(lsys, xn) - phcore.hamiltonian(lsys, x)
        assert abs(dH - dt * y @ sig(t + dt / 2)) < 1e-9 * abs(phcore.hamiltonian(lsys, x))
        x = xn


def test_energy_bookkeeping_nonlinear_third_order():
    prob = _swe1d(q_order=2, p_order=1)
    sig = _signal(prob, 0.5)
    x0 = prob.flat_state()

    def defect(dt):
        x = x0.copy()
        worst = 0.0
        st = sim.MidpointStepper(prob.sys)
        for k in range(int(round(0.02 / dt))):
            t = k * dt
            xn = st.step(x, sig, t, dt)
            y, _ = phcore.output(prob.sys, 0.5 * (x + xn))
            dH = phcore.hamiltonian(prob.sys, xn) - phcore.hamiltonian(prob.sys, x)
            worst = max(worst, abs(dH - dt * y @ sig(t + dt / 2)))
            x = xn
        return worst

    assert defect(0.001) / defect(0.0005) == pytest.approx(8.0, rel=0.1)


def test_volume_conservation_linear_long_run():
    prob = _swe1d()
    lsys = sim.linearized_system(prob)
    # inputs are +z volume flows at both ends, so equal values carry zero net inflow
    w = sim.side_weights(prob, {"left": 1.0, "right": 1.0})
    sig = sim.BoundarySignal(w, 1.0, 2 * math.pi, "sin")
    tr = sim.simulate(lsys, prob.flat_state(), sig, 10.0, 1e-3, check_power=False)
    assert len(tr.times) == 10001
    assert tr.volume_drift().max() < 1e-10


def test_power_residual_recorded():
    prob = _swe1d()
    tr = sim.simulate(prob.sys, prob.flat_state(), _signal(prob, 0.3), 0.05, 0.01)
    assert tr.power_residual_max < 1e-12


def test_side_weights_average_corners():
    prob = build(ModelConfig(model="swe2d", nx=2, ny=2))
    w = sim.side_weights(prob, {"up": 1.0, "left": -1.0})
    X = prob.port_coords()
    corner = np.flatnonzero((np.abs(X[:, 0]) < 1e-12) & (np.abs(X[:, 1] - 1) < 1e-12))
    assert w[corner] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        sim.side_weights(prob, {"outer": 1.0})


def test_signal_window():
    s = sim.BoundarySignal(np.ones(2), 2.0, math.pi, "sin", 0.0, 1.0)
    assert np.allclose(s(0.5), 2.0) and not s(1.5).any()
    with pytest.raises(ValueError):
        sim.BoundarySignal(np.ones(2), 1.0, 1.0, "sin", 1.0, 0.5)


def test_calibrated_amplitude_hits_target():
    prob = _swe1d(n=16)
    sig = _signal(prob, 1.0)
    A = sim.calibrate_amplitude(prob, sig, 0.5, 1e-2, target=1e-3)
    tr = sim.simulate(sim.linearized_system(prob), prob.flat_state(), sig.scaled(A), 0.5, 1e-2,
                      store_states=True)
    assert sim.max_height_deviation(prob, tr.states) == pytest.approx(1e-3, rel=1e-9)


def test_outputs_written(tmp_path):
    prob = _swe1d(n=4)
    tr = sim.simulate(prob.sys, prob.flat_state(), _signal(prob, 1.0), 0.1, 0.05,
                      snapshot_times=(0.05, 0.1))
    paths = sim.write_outputs(tmp_path, prob, tr)
    assert [p.name for p in paths] == ["trace.csv", "snap_0.05.csv", "snap_0.1.csv"]
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,H,V,y_0,y_1" and len(lines) == 4
    snap = (tmp_path / "snap_0.1.csv").read_text().splitlines()
    assert snap[0] == "x,h,u" and len(snap) == 6


def test_simulate_rejects_bad_grid():
    prob = _swe1d(n=4)
    with pytest.raises(ValueError):
        sim.simulate(prob.sys, prob.flat_state(), sim.zero_signal(2), 0.1, 0.03)
    with pytest.raises(ValueError):
        sim.simulate(prob.sys, prob.flat_state(), sim.zero_signal(2), 0.1, 0.05, snapshot_times=(0.07,))
