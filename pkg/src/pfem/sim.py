"""Time integration and experiment protocols.

The implicit midpoint rule is the default integrator. For the nonlinear
shallow water Hamiltonian the Newton iteration runs in coefficient space on
the sparse augmented system in (coefficients, efforts); the iterates are the
same as in tilde coordinates (linear change of variables).
"""
from dataclasses import dataclass, field, replace
import csv
import math
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as cst
from . import phcore

NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50


class StepFailure(RuntimeError):
    def __init__(self, msg, t=None, residuals=()):
        super().__init__(msg)
        self.t = t
        self.residuals = list(residuals)


class SimulationError(RuntimeError):
    """A step failed; ``trajectory`` holds everything computed before the failure."""

    def __init__(self, msg, trajectory):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass(frozen=True)
class BoundarySignal:
    """u(t) = A * f(omega t) * weights on the active window [t0, t1], zero outside."""

    weights: np.ndarray
    amplitude: float = 1.0
    omega: float = 2 * math.pi
    func: str = "cos"
    t0: float = 0.0
    t1: float = math.inf

    def __post_init__(self):
        if self.t1 < self.t0:
            raise ValueError("signal window must satisfy t1 >= t0")
        if self.func not in ("cos", "sin", "const"):
            raise ValueError(f"unknown signal function {self.func!r}")
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def __call__(self, t: float) -> np.ndarray:
        if t < self.t0 or t > self.t1:
            return np.zeros_like(self.weights)
        if self.func == "cos":
            s = math.cos(self.omega * t)
        elif self.func == "sin":
            s = math.sin(self.omega * t)
        else:
            s = 1.0
        return self.amplitude * s * self.weights

    def scaled(self, factor: float) -> "BoundarySignal":
        return replace(self, amplitude=self.amplitude * factor)


def zero_signal(nb: int) -> BoundarySignal:
    return BoundarySignal(np.zeros(nb), 0.0, 0.0, "const")


def side_weights(prob, amplitudes: dict) -> np.ndarray:
    """Per-port weights from per-side amplitudes; shared corner nodes get the side average."""
    mesh = prob.mesh
    if mesh.dim == 1:
        return np.array([amplitudes.get("left", 0.0), amplitudes.get("right", 0.0)])
    names = tuple(prob.bspace.sides) or mesh.side_names
    unknown = set(amplitudes) - set(names)
    if unknown:
        raise ValueError(f"unknown boundary sides {sorted(unknown)}; ports exist on {names}")
    if prob.bspace.kind != "trace":
        w = np.zeros(prob.bspace.size)
        w[0] = sum(amplitudes.values())
        return w
    sums = np.zeros(prob.bspace.size)
    counts = np.zeros(prob.bspace.size)
    pos = {int(d): k for k, d in enumerate(prob.bspace.dofs)}
    for name in names:
        dofs = prob.space_q.boundary_dofs(name)
        idx = np.array([pos[int(d)] for d in dofs])
        sums[idx] += amplitudes.get(name, 0.0)
        counts[idx] += 1
    return sums / np.maximum(counts, 1)


@dataclass
class Trajectory:
    times: np.ndarray
    H: np.ndarray
    V: np.ndarray
    y: np.ndarray  # pointwise outputs y_hat, one row per time
    snapshots: dict = field(default_factory=dict)  # requested time -> state
    states: np.ndarray = None
    power_residual_max: float = 0.0
    newton_iterations: int = 0

    @property
    def final_state(self):
        return self._last

    def volume_drift(self) -> np.ndarray:
        return np.abs(self.V - self.V[0]) / abs(self.V[0]) if self.V[0] != 0 else np.abs(self.V - self.V[0])


class MidpointStepper:
    """Implicit midpoint with (modified) Newton; caches factorizations between steps."""

    def __init__(self, sys: phcore.ReducedPHS, tol: float = NEWTON_TOL, maxit: int = NEWTON_MAXIT):
        self.sys = sys
        self.tol = tol
        self.maxit = maxit
        self._lu = None
        self._lu_dt = None
        self.iterations = 0
        m = sys.model
        self.coefficient_space = m.kind == cst.SWE
        if self.coefficient_space:
            ops = sys.ops
            self.M = sp.block_diag([ops.M_q, ops.M_p], format="csc")
            D = sp.csr_matrix(ops.D)
            self.S = sp.bmat([[None, D], [-D.T, None]], format="csr")
            nb = ops.B.shape[1]
            Bfull = sp.vstack([ops.B, sp.csr_matrix((sys.np_, nb))]) if sys.input_on == "q" \
                else sp.vstack([sp.csr_matrix((sys.nq, nb)), ops.B])
            self.Bfull = sp.csr_matrix(Bfull)
            self._Mlu = spla.splu(self.M)

    # -- coefficient-space helpers (swe kind)
    def _untilde(self, x):
        return np.concatenate(self.sys.model.untilde(x))

    def _tilde(self, a):
        nq = self.sys.nq
        return self.sys.model.tilde(a[:nq], a[nq:])

    def _tilde_residual_norm(self, r):
        # |L^{-1} r|^2 = r^T M^{-1} r
        return math.sqrt(max(r @ self._Mlu.solve(r), 0.0))

    def _coef_jacobian(self, a, dt):
        """Augmented matrix [[M, -dt/2 S], [-Hess_c, M]] in the unknowns (da, de).

        Its Schur complement M - dt/2 S M^{-1} Hess_c is the exact Newton
        Jacobian for the coefficient form M da/dt = S e + B u, M e = grad_c H.
        """
        m, nq = self.sys.model, self.sys.nq
        T = m.tensors
        Hqp = m.kin * T.contract_p(a[nq:])
        Hpp = m.kin * T.contract_q(a[:nq])
        Hc = sp.bmat([[m.G, Hqp], [Hqp.T, Hpp]], format="csr")
        return sp.bmat([[self.M, -0.5 * dt * self.S], [-Hc, self.M]], format="csc")

    def _efforts(self, a):
        m, nq = self.sys.model, self.sys.nq
        gq, gp = cst.coefficient_gradient(m, a[:nq], a[nq:])
        return self._Mlu.solve(np.concatenate([gq, gp]))

    def _step_coefficient(self, x, u, dt, t):
        n = self.sys.n
        a_n = self._untilde(x)
        forcing = self.M @ a_n + 0.5 * dt * (self.Bfull @ u)

        def resid(a):
            return self.M @ a - forcing - 0.5 * dt * (self.S @ self._efforts(a))

        def newton_dir(r):
            return self._lu.solve(np.concatenate([-r, np.zeros(n)]))[:n]

        a = a_n.copy()
        scale = 1.0 + math.sqrt(x @ x)
        r = resid(a)
        res = self._tilde_residual_norm(r)
        history = [res]
        if self._lu is None or self._lu_dt != dt:
            self._lu, self._lu_dt = spla.splu(self._coef_jacobian(a, dt)), dt
        polish = 0
        for it in range(self.maxit):
            if res <= self.tol * scale:
                # a couple of cheap extra iterations push the residual to rounding level
                if polish >= 2 or (len(history) > 1 and history[-2] < 2 * res):
                    break
                polish += 1
            a = a + newton_dir(r)
            self.iterations += 1
            r = resid(a)
            new = self._tilde_residual_norm(r)
            if new > 0.25 * res and new > self.tol * scale:
                # slow contraction: refresh the Jacobian at the current iterate
                self._lu = spla.splu(self._coef_jacobian(a, dt))
            res = new
            history.append(res)
            if not np.isfinite(res):
                break
        if not (res <= self.tol * scale):
            raise StepFailure(f"Newton did not converge at t={t:.6g}: residual {res:.3e}", t, history)
        return self._tilde(2 * a - a_n)

    def _step_tilde(self, x, u, dt, t):
        sys = self.sys
        m = sys.model
        if m.kind == cst.QUADRATIC:
            # linear problem: one exact solve with a cached factorization
            if self._lu is None or self._lu_dt != dt:
                A = np.eye(sys.n) - 0.5 * dt * sys.structure_matrix() @ m.Q
                self._lu, self._lu_dt = sla.lu_factor(A), dt
            f0 = phcore.rhs(sys, x, u)
            dz = sla.lu_solve(self._lu, 0.5 * dt * f0, check_finite=False)
            self.iterations += 1
            return x + 2 * dz
        raise ValueError(f"unsupported model kind {m.kind!r}")

    def step(self, x, signal, t, dt):
        if not dt > 0:
            raise ValueError("dt must be positive")
        u = signal(t + 0.5 * dt)
        if self.coefficient_space:
            out = self._step_coefficient(np.asarray(x, dtype=float), u, dt, t)
        else:
            out = self._step_tilde(np.asarray(x, dtype=float), u, dt, t)
        if not np.all(np.isfinite(out)):
            raise StepFailure(f"non-finite state at t={t:.6g}", t)
        return out


def step_midpoint(sys, x, signal, t, dt, stepper: MidpointStepper = None):
    stepper = stepper or MidpointStepper(sys)
    return stepper.step(x, signal, t, dt)


def step_rk4(sys, x, signal, t, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = lambda s, y: phcore.rhs(sys, y, signal(s))
    k1 = f(t, x)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    k4 = f(t + dt, x + dt * k3)
    out = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise StepFailure(f"non-finite state at t={t:.6g}", t)
    return out


def simulate(sys, x0, signal, t_end: float, dt: float, snapshot_times=(), method: str = "midpoint",
             store_states: bool = False, check_power: bool = True) -> Trajectory:
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if method not in ("midpoint", "rk4"):
        raise ValueError(f"unknown integrator {method!r}")
    nsteps = int(round(t_end / dt))
    if abs(nsteps * dt - t_end) > 1e-9 * t_end:
        raise ValueError("t_end must be an integer multiple of dt")
    snaps = {float(ts): int(round(ts / dt)) for ts in snapshot_times}
    for ts, k in snaps.items():
        if not 0 <= k <= nsteps or abs(k * dt - ts) > 1e-9 * max(1.0, ts):
            raise ValueError(f"snapshot time {ts} is not on the time grid")
    stepper = MidpointStepper(sys) if method == "midpoint" else None
    c = sys.volume_weights()
    times = np.arange(nsteps + 1) * dt
    H = np.full(nsteps + 1, np.nan)
    V = np.full(nsteps + 1, np.nan)
    Y = np.full((nsteps + 1, sys.nb), np.nan)
    states = np.full((nsteps + 1, sys.n), np.nan) if store_states else None
    traj = Trajectory(times, H, V, Y, {}, states)
    x = np.array(x0, dtype=float)
    pmax = 0.0

    def record(k, x):
        nonlocal pmax
        e = phcore.gradient(sys, x)
        H[k] = phcore.hamiltonian(sys, x)
        V[k] = c @ x[: sys.nq]
        _, Y[k] = phcore.output_from_effort(sys, e)
        if check_power:
            u = signal(times[k])
            y, _ = phcore.output_from_effort(sys, e)
            pr = e @ phcore.rhs_from_effort(sys, e, u) - y @ u
            pmax = max(pmax, abs(pr) / (abs(H[k]) + abs(y @ u) + 1e-300))
        if states is not None:
            states[k] = x
        for ts, kk in snaps.items():
            if kk == k:
                traj.snapshots[ts] = x.copy()

    record(0, x)
    for k in range(nsteps):
        t = times[k]
        try:
            if method == "midpoint":
                x = stepper.step(x, signal, t, dt)
            else:
                x = step_rk4(sys, x, signal, t, dt)
        except StepFailure as exc:
            keep = k + 1
            traj.times, traj.H, traj.V, traj.y = times[:keep], H[:keep], V[:keep], Y[:keep]
            traj._last = x
            traj.power_residual_max = pmax
            raise SimulationError(str(exc), traj) from exc
        record(k + 1, x)
    traj._last = x
    traj.power_residual_max = pmax
    traj.newton_iterations = stepper.iterations if stepper else 0
    return traj


def linearized_system(prob):
    """Reduced system whose Hamiltonian is the quadratic tangent at the rest state."""
    lin = cst.linearized_model(prob.model, prob.flat_state())
    return replace(prob.sys, model=lin)


def max_height_deviation(prob, states) -> float:
    """max |h - h0| / h0 over the mesh nodes for a sequence of states."""
    h0 = prob.config.h0
    return max(np.abs(prob.fields_at_nodes(x)[:, 0] - h0).max() / h0 for x in states)


def calibrate_amplitude(prob, signal: BoundarySignal, t_end: float, dt: float,
                        target: float = 2e-4) -> float:
    """Amplitude giving max |h - h0|/h0 = target in a linearized pilot run (linear in A)."""
    lsys = linearized_system(prob)
    traj = simulate(lsys, prob.flat_state(), replace(signal, amplitude=1.0), t_end, dt,
                    store_states=True, check_power=False)
    dev = max_height_deviation(prob, traj.states)
    if dev == 0:
        raise ValueError("pilot run produced no surface deviation")
    return target / dev


def relative_field_difference(prob, x_a, x_b, x_ref) -> float:
    """||h_a - h_b||_L2 / ||h_b - h_ref||_L2 using the q-space mass matrix (tilde norm)."""
    nq = prob.sys.nq
    num = np.linalg.norm(x_a[:nq] - x_b[:nq])
    den = np.linalg.norm(x_b[:nq] - x_ref[:nq])
    return float(num / den)


def write_trace_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "H", "V"] + [f"y_{k}" for k in range(traj.y.shape[1])])
        for k in range(len(traj.times)):
            w.writerow([repr(float(traj.times[k])), repr(float(traj.H[k])), repr(float(traj.V[k]))]
                       + [repr(float(v)) for v in traj.y[k]])


def write_snapshot_csv(path, prob, x) -> None:
    pts = prob.node_coords()
    F = prob.fields_at_nodes(x)
    if prob.dim == 1:
        head = ["x", "h", "u"]
    else:
        head = ["x", "y", "h", "u", "v"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for p, f in zip(pts, F):
            w.writerow([repr(float(v)) for v in np.concatenate([p, f])])


def snapshot_name(t: float) -> str:
    return f"snap_{t:g}.csv"


def write_outputs(outdir, prob, traj: Trajectory) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "trace.csv"]
    write_trace_csv(paths[0], traj)
    for t, x in sorted(traj.snapshots.items()):
        p = outdir / snapshot_name(t)
        write_snapshot_csv(p, prob, x)
        paths.append(p)
    return paths


# experiment protocols

def harmonic_inflow_1d(prob, amplitude: float = 1.0, omega: float = 2 * math.pi) -> BoundarySignal:
    """e_p(0, t) = e_p(L, t) = A cos(omega t): the same volume flow (in +z) at both ends.

    With B = [phi(0), -phi(L)] the net volume flux is zero; the water is pushed
    back and forth through the channel.
    """
    return BoundarySignal(side_weights(prob, {"left": 1.0, "right": 1.0}), amplitude, omega, "cos")


def harmonic_inflow_2d(prob, amplitude: float = 1.0, omega: float = math.pi,
                       t_off: float = 1.0) -> BoundarySignal:
    """Inflow on the upper side and the opposite flux on the left side, switched off at t_off."""
    w = side_weights(prob, {"up": 1.0, "left": -1.0})
    return BoundarySignal(w, amplitude, omega, "sin", 0.0, t_off)


@dataclass(frozen=True)
class NonlinearityResult:
    amplitude: float
    factor: float
    t_final: float
    small: float  # nonlinear/linearized difference at the final snapshot, calibrated amplitude
    large: float  # same with amplitude * factor


def nonlinearity_study(prob, signal: BoundarySignal, t_end: float, dt: float,
                       factor: float = 100.0, target: float = 2e-4) -> NonlinearityResult:
    """Compare nonlinear and linearized runs at a calibrated and an amplified amplitude."""
    A = calibrate_amplitude(prob, signal, t_end, dt, target)
    lsys = linearized_system(prob)
    x0 = prob.flat_state()
    diffs = []
    for f in (1.0, factor):
        s = replace(signal, amplitude=A * f)
        tn = simulate(prob.sys, x0, s, t_end, dt, snapshot_times=(t_end,), check_power=False)
        tl = simulate(lsys, x0, s, t_end, dt, snapshot_times=(t_end,), check_power=False)
        diffs.append(relative_field_difference(prob, tn.snapshots[t_end], tl.snapshots[t_end], x0))
    return NonlinearityResult(A, factor, t_end, diffs[0], diffs[1])
