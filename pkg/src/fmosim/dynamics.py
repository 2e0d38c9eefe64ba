"""Deterministic master-equation propagation with observable recording.

The right-hand side is always applied as direct matrix products via the
kernel backends, never as an assembled superoperator matrix.  Fixed-step RK4
is the default; an embedded Dormand-Prince 5(4) pair with PI step control is
available for stiff strongly-damped-bath runs.  The population flowing into
the sink is additionally accumulated as an RK4-consistent quadrature of the
source-site population, giving a redundant transfer-efficiency series that
cross-checks the directly recorded sink level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .basis import LayoutError
from .kernels import BACKEND_NAME, make_stepper
from .linalg import QuantumState, StateValidityError, assert_valid_state
from .model import Generator


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    step_dt: float = 0.001            # ps
    method: str = "rk4"               # rk4 | rk45
    adaptive_tol: float = 1e-8
    record_every: int = 5             # steps between recorded points
    tol_trace: float = 1e-9
    tol_hermiticity: float = 1e-9
    tol_positivity: float = 1e-7
    positivity_check_stride: int = 0  # records; 0 = roughly every 100 steps
    abort_factor: float = 10.0

    def __post_init__(self):
        if self.step_dt <= 0 or self.t_end <= 0:
            raise ValueError("step_dt and t_end must be positive")
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    """Time grid plus recorded observables of one run."""

    times: np.ndarray
    series: dict[str, np.ndarray]
    layout: object
    final_state: QuantumState
    t_fine: np.ndarray
    source_population_fine: np.ndarray
    sink_integral: np.ndarray
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    validity: dict[str, float] = field(default_factory=dict)
    meta: dict[str, object] = field(default_factory=dict)

    @property
    def site_populations(self) -> np.ndarray:
        cols = sorted((k for k in self.series if k.startswith("site")),
                      key=lambda s: int(s.replace("site", "")))
        return np.stack([self.series[k] for k in cols], axis=1)

    @property
    def sink_population(self) -> np.ndarray:
        return self.series["sink"]

    @property
    def ground_population(self) -> np.ndarray:
        return self.series["ground"]

    def negativities(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.series.items() if k.startswith("neg_") or k == "ep"}


class SeriesObserver:
    """Base class for custom scalar observables recorded along a run."""

    columns: tuple[str, ...] = ()

    def measure(self, t: float, rho: np.ndarray) -> tuple[float, ...]:
        raise NotImplementedError


def _record_plan(n_total: int, record_every: int) -> list[int]:
    marks = list(range(0, n_total, record_every))
    if marks[-1] != n_total:
        marks.append(n_total)
    return marks


def evolve(gen: Generator, rho0: QuantumState, cfg: IntegratorConfig,
           observers: tuple[SeriesObserver, ...] = (),
           snapshot_times: tuple[float, ...] = ()) -> Trajectory:
    """Propagate rho0 under gen over [0, t_end], recording observables.

    Aborts with :class:`StateValidityError` if the state drifts beyond
    ``abort_factor`` times the configured physicality tolerances mid-run.
    """
    if rho0.layout.labels != gen.layout.labels or rho0.dim != gen.dim:
        raise LayoutError(
            f"initial state layout {rho0.layout.labels} (dim {rho0.dim}) does not match "
            f"generator layout {gen.layout.labels} (dim {gen.dim})")
    rep = assert_valid_state(rho0, cfg.tol_hermiticity, cfg.tol_trace, cfg.tol_positivity)
    if not rep.ok:
        raise StateValidityError(f"initial state is unphysical: {rep}")

    t_start = time.perf_counter()
    stepper = make_stepper(gen.pack())
    dt = cfg.step_dt
    n_total = max(1, int(round(cfg.t_end / dt)))
    marks = _record_plan(n_total, cfg.record_every)
    pos_stride = cfg.positivity_check_stride
    if pos_stride <= 0:
        pos_stride = max(1, int(round(100 / cfg.record_every)))

    weights = gen.population_weights()
    for lab, diag in gen.mode_number_diags.items():
        weights[lab] = diag
    track_sink = gen.source_site is not None

    stack = np.ascontiguousarray(rho0.entries[None, :, :].copy())
    times: list[float] = []
    rows: dict[str, list[float]] = {k: [] for k in weights}
    for obs in observers:
        for c in obs.columns:
            rows[c] = []
    sink_quad: list[float] = []
    t_fine: list[float] = []
    p3_fine: list[float] = []
    snapshots: dict[float, np.ndarray] = {}
    snap_left = sorted(snapshot_times)

    max_trace = 0.0
    max_herm = 0.0
    min_eig = np.inf
    quad_acc = 0.0

    def record(step_index: int, check_positivity: bool):
        nonlocal max_trace, max_herm, min_eig
        t = step_index * dt
        rho = stack[0]
        times.append(t)
        diag = np.real(np.diagonal(rho))
        for lab, w in weights.items():
            rows[lab].append(float(w @ diag))
        for obs in observers:
            vals = obs.measure(t, rho)
            for c, v in zip(obs.columns, vals):
                rows[c].append(float(v))
        sink_quad.append(2.0 * gen.sink_rate * quad_acc)
        tr_dev = abs(complex(np.trace(rho)) - 1.0)
        herm_dev = float(np.max(np.abs(rho - rho.conj().T)))
        max_trace = max(max_trace, tr_dev)
        max_herm = max(max_herm, herm_dev)
        if tr_dev > cfg.abort_factor * cfg.tol_trace or herm_dev > cfg.abort_factor * cfg.tol_hermiticity:
            raise StateValidityError(
                f"state drifted unphysically at t={t:.4f} ps: "
                f"|tr-1|={tr_dev:.3e}, hermiticity={herm_dev:.3e}")
        if check_positivity:
            w_eig = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
            min_eig = min(min_eig, float(w_eig[0]))
            if w_eig[0] < -cfg.abort_factor * cfg.tol_positivity:
                raise StateValidityError(
                    f"state lost positivity at t={t:.4f} ps: min eigenvalue {w_eig[0]:.3e}")
        while snap_left and abs(snap_left[0] - t) <= 0.5 * dt * cfg.record_every:
            snapshots[snap_left.pop(0)] = rho.copy()

    record(0, check_positivity=True)
    n_records = 0
    for k in range(len(marks) - 1):
        lo, hi = marks[k], marks[k + 1]
        span = hi - lo
        if cfg.method == "rk4":
            if track_sink:
                buf = np.empty(span + 1)
                quad_acc += stepper.rk4_span(stack, lo * dt, dt, span, buf)
                if not t_fine:
                    t_fine.append(lo * dt)
                    p3_fine.append(buf[0])
                t_fine.extend((lo + i) * dt for i in range(1, span + 1))
                p3_fine.extend(buf[1:span + 1])
            else:
                stepper.rk4_span(stack, lo * dt, dt, span)
        else:
            quad_inc, seg_t, seg_p3 = _adaptive_span(stepper, stack, lo * dt, hi * dt,
                                                     cfg, gen, track_sink)
            quad_acc += quad_inc
            if track_sink:
                if not t_fine:
                    t_fine.append(seg_t[0])
                    p3_fine.append(seg_p3[0])
                t_fine.extend(seg_t[1:])
                p3_fine.extend(seg_p3[1:])
        n_records += 1
        record(hi, check_positivity=(n_records % pos_stride == 0) or hi == n_total)

    series = {k: np.asarray(v) for k, v in rows.items()}
    final = QuantumState(gen.layout, stack[0].copy())
    validity = {"max_trace_deviation": max_trace, "max_hermiticity_deviation": max_herm,
                "min_eigenvalue": float(min_eig)}
    meta = {"dt_ps": dt, "method": cfg.method, "backend": BACKEND_NAME,
            "wall_s": time.perf_counter() - t_start, "n_steps": n_total}
    return Trajectory(times=np.asarray(times), series=series, layout=gen.layout,
                      final_state=final, t_fine=np.asarray(t_fine),
                      source_population_fine=np.asarray(p3_fine),
                      sink_integral=np.asarray(sink_quad), snapshots=snapshots,
                      validity=validity, meta=meta)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])


def _adaptive_span(stepper, stack, t0, t1, cfg, gen, track_sink):
    """Advance stack from t0 to t1 with embedded DP5(4) steps."""
    tol = cfg.adaptive_tol
    t = t0
    dt = min(cfg.step_dt, t1 - t0)
    ks = [np.empty_like(stack) for _ in range(7)]
    quad = 0.0
    w = gen.source_weights() if track_sink else None
    seg_t = [t0]
    seg_p3 = [float(w @ np.real(np.diagonal(stack[0])))] if track_sink else []
    while t < t1 - 1e-15:
        dt = min(dt, t1 - t)
        stepper.rhs(t, stack, ks[0])
        for i in range(1, 7):
            y = stack + dt * sum(a * k for a, k in zip(_DP_A[i], ks[:i]))
            stepper.rhs(t + _DP_C[i] * dt, y, ks[i])
        y5 = stack + dt * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        y4 = stack + dt * sum(b * k for b, k in zip(_DP_B4, ks) if b != 0.0)
        err = float(np.max(np.abs(y5 - y4)))
        scale = max(1.0, float(np.max(np.abs(y5))))
        if err <= tol * scale:
            if track_sink:
                p3_new = float(w @ np.real(np.diagonal(y5[0])))
                quad += 0.5 * dt * (seg_p3[-1] + p3_new)
                seg_p3.append(p3_new)
            stack[:] = y5
            t += dt
            seg_t.append(t)
        factor = 0.9 * (tol * scale / max(err, 1e-300)) ** 0.2
        dt *= min(5.0, max(0.2, factor))
        if dt < 1e-9:
            raise RuntimeError(f"adaptive step collapsed below 1 attosecond at t={t:.6f} ps")
    return quad, seg_t, seg_p3


def compute_p_sink(traj: Trajectory, rate: float) -> np.ndarray:
    """Transfer efficiency as the cumulative integral 2*rate*int p_source dt.

    Evaluated by the trapezoid rule on the per-step source-population trace
    and returned on the recorded time grid; it must agree with the directly
    recorded sink-level population.
    """
    if traj.source_population_fine.size == 0:
        raise ValueError("trajectory does not record a source-site population")
    t = traj.t_fine
    p3 = traj.source_population_fine
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (p3[1:] + p3[:-1]) * np.diff(t))])
    full = 2.0 * rate * cum
    return np.interp(traj.times, t, full)
