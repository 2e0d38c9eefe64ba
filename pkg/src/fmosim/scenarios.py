"""Catalog of reproducible named experiments.

Each scenario binds a model (network + noise + bath + optional drive or
pump), an initial state, the recorded observables and bipartitions, and an
optional sweep axis.  Runs are deterministic: repeated runs of the same
scenario on the same build produce identical arrays, and sweep points are
merged by axis order regardless of completion order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import Bipartition
from .dynamics import IntegratorConfig, SeriesObserver, Trajectory, evolve
from .entanglement import (RegisterTransposer, SingleExcitationAmplitudes, _log_trace_norm,
                           exciton_amplitudes, factor_split, log_negativity,
                           log_negativity_1ex)
from .kernels import BACKEND_NAME, make_stepper
from .linalg import QuantumState, StateValidityError, partial_trace
from .model import (BathSpec, Generator, InjectionSpec, LaserPulse, NetworkSpec, NoiseSpec,
                    correlated_dephasing_matrix, build_generator, default_fmo_network,
                    exciton_basis, scale_bath)

SWEEP_THREADS_ENV = "FMOSIM_SWEEP_THREADS"

CONTOUR_F_VALUES = tuple(float(f) for f in np.logspace(np.log10(0.1), np.log10(100.0), 12))

# first time negativity stays below this level for the dwell window counts as
# the end of its lifetime
ENTANGLEMENT_LIFETIME_THRESHOLD = 0.05
ENTANGLEMENT_LIFETIME_DWELL = 0.1   # ps


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    noise: NoiseSpec
    network: NetworkSpec | None = None          # None: shipped default network
    bath: BathSpec | None = None
    laser: LaserPulse | None = None
    truncation: str = "single"
    initial_state: str = "site-1"
    t_end: float = 5.0
    dt: float = 0.001
    record_every: int = 5
    method: str = "rk4"
    site_splits: tuple[int, ...] = ()
    exciton_splits: tuple[int, ...] = ()
    record_excitons: bool = False
    ancilla_split: bool = False
    population_snapshots_fs: tuple[float, ...] = ()
    sweep_parameter: str | None = None          # "f" | "dephasing"
    sweep_values: tuple = ()

    def resolve_network(self) -> NetworkSpec:
        if self.network is not None:
            return self.network
        return default_fmo_network(truncation=self.truncation)


@dataclass
class SweepResult:
    scenario: str
    parameter: str
    values: tuple
    trajectories: tuple[Trajectory, ...]

    def contour(self, column: str):
        """(times, axis values, grid) with grid[i, j] = column at (t_j, value_i)."""
        times = self.trajectories[0].times
        grid = np.full((len(self.values), times.size), np.nan)
        for i, traj in enumerate(self.trajectories):
            series = traj.series.get(column)
            if series is None:
                continue
            if traj.times.shape == times.shape and np.allclose(traj.times, times):
                grid[i] = series
            else:
                grid[i] = np.interp(times, traj.times, series)
        return times, np.asarray(self.values, dtype=object), grid


# ---------------------------------------------------------------------------
# observers


class SiteSplitNegativities(SeriesObserver):
    """Negativity across (1..k)|(k+1..N) site splits.

    Register-encoded runs use the one-excitation closed form; product-space
    runs trace out the sink and take the general partial transpose.
    """

    def __init__(self, gen: Generator, splits: tuple[int, ...]):
        self.splits = tuple(splits)
        self.columns = tuple(f"neg_k{k}" for k in self.splits)
        self.layout = gen.layout
        self.encoded = "exc" in gen.layout.labels
        if not self.encoded:
            n = sum(1 for lab in gen.layout.labels if lab.startswith("site"))
            self.n_sites = n
            self._site_labels = tuple(f"site{j}" for j in range(1, n + 1))

    def measure(self, t, rho):
        state = QuantumState(self.layout, rho)
        if self.encoded:
            amp = SingleExcitationAmplitudes.from_state(state)
            return tuple(log_negativity_1ex(amp, k).value for k in self.splits)
        reduced = partial_trace(state, set(self._site_labels))
        out = []
        for k in self.splits:
            part = factor_split(reduced.layout, {f"site{j}" for j in range(1, k + 1)})
            out.append(log_negativity(reduced, part, validity_tol=1e-5).value)
        return tuple(out)


class ExcitonObservables(SeriesObserver):
    """Exciton-split negativities and (optionally) exciton populations."""

    def __init__(self, gen: Generator, splits: tuple[int, ...], record_populations: bool):
        net = gen.network
        self.h_block = net.couplings + np.diag(net.site_energies)
        exciton_basis(net)   # fails early on degenerate exciton energies
        self.splits = tuple(splits)
        self.record_populations = record_populations
        self.layout = gen.layout
        cols = [f"neg_ex_k{k}" for k in self.splits]
        if record_populations:
            cols += [f"exciton_{j}" for j in range(1, net.n_sites + 1)]
        self.columns = tuple(cols)

    def measure(self, t, rho):
        amp = SingleExcitationAmplitudes.from_state(QuantumState(self.layout, rho))
        ex = exciton_amplitudes(amp, self.h_block)
        vals = [log_negativity_1ex(ex, k).value for k in self.splits]
        if self.record_populations:
            vals.extend(np.real(np.diagonal(ex.block)))
        return tuple(vals)


# ---------------------------------------------------------------------------
# building and running


def _stabilized_steps(gen: Generator, dt: float, record_every: int) -> tuple[float, int]:
    """Shrink the step until the stiffest decay rate is inside RK4 stability."""
    decay = float(-gen.pack().mask.min())
    if decay <= 0:
        return dt, record_every
    n_split = max(1, int(np.ceil(decay * dt / 2.4)))
    return dt / n_split, record_every * n_split


def _initial_state(gen: Generator, which: str) -> QuantumState:
    rho = np.zeros((gen.dim, gen.dim), dtype=np.complex128)
    if which == "ground":
        rho[0, 0] = 1.0
        return QuantumState(gen.layout, rho)
    if which == "site-1":
        labels, table = gen.layout.occupation_table()
        col = table[:, labels.index("site1")]
        others = np.delete(table, labels.index("site1"), axis=1)
        idx = np.flatnonzero((col == 1) & (others.sum(axis=1) == 0))
        rho[idx[0], idx[0]] = 1.0
        return QuantumState(gen.layout, rho)
    raise ValueError(f"unknown initial state {which!r}")


def build_scenario_model(s: Scenario) -> tuple[Generator, QuantumState]:
    net = s.resolve_network()
    gen = build_generator(net, s.noise, bath=s.bath, laser=s.laser)
    if s.initial_state == "max-entangled-ancilla":
        raise ValueError("ancilla-protocol scenarios are run via their dedicated path")
    return gen, _initial_state(gen, s.initial_state)


def _apply_sweep_value(s: Scenario, value) -> Scenario:
    if s.sweep_parameter == "f":
        if s.bath is None:
            raise ValueError("scenario sweeps f but has no structured bath")
        return replace(s, bath=scale_bath(s.bath, float(value)), sweep_parameter=None,
                       sweep_values=())
    if s.sweep_parameter == "dephasing":
        local = s.noise.dephasing
        if value == "local":
            noise = replace(s.noise, correlated_dephasing=None)
        elif value == "correlated":
            noise = replace(s.noise,
                            correlated_dephasing=correlated_dephasing_matrix(local, 1.0))
        else:
            raise ValueError(f"unknown dephasing sweep value {value!r}")
        return replace(s, noise=noise, sweep_parameter=None, sweep_values=())
    raise ValueError(f"unknown sweep parameter {s.sweep_parameter!r}")


def _run_single(s: Scenario) -> Trajectory:
    if s.initial_state == "max-entangled-ancilla" or s.ancilla_split:
        return _run_entangling_power(s)
    gen, rho0 = build_scenario_model(s)
    dt, rec = _stabilized_steps(gen, s.dt, s.record_every)
    cfg = IntegratorConfig(t_end=s.t_end, step_dt=dt, record_every=rec, method=s.method)
    observers: list[SeriesObserver] = []
    if s.site_splits:
        observers.append(SiteSplitNegativities(gen, s.site_splits))
    if s.exciton_splits or s.record_excitons:
        observers.append(ExcitonObservables(gen, s.exciton_splits, s.record_excitons))
    snaps = tuple(t_fs * 1e-3 for t_fs in s.population_snapshots_fs)
    traj = evolve(gen, rho0, cfg, observers=tuple(observers), snapshot_times=snaps)
    traj.meta["scenario"] = s.name
    return traj


def _run_entangling_power(s: Scenario) -> Trajectory:
    """Ancilla-protocol run exploiting that the generator never touches the
    ancilla: the joint state is stepped as independent ancilla-index blocks."""
    import time as _time

    from .basis import BasisLayout, ancilla_register, join_layouts

    t_start = _time.perf_counter()
    gen = build_generator(s.resolve_network(), s.noise, bath=s.bath)
    if "exc" not in gen.layout.labels:
        raise ValueError("the ancilla protocol scenario needs a register-encoded system")
    n = gen.network.n_sites
    dim_sm = gen.dim
    dim_exc = gen.layout.dim_of("exc")
    bath_dim = dim_sm // dim_exc
    dt, rec = _stabilized_steps(gen, s.dt, s.record_every)
    n_total = max(1, int(round(s.t_end / dt)))
    marks = list(range(0, n_total, rec))
    if marks[-1] != n_total:
        marks.append(n_total)

    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    pair_index = {p: i for i, p in enumerate(pairs)}
    stack = np.zeros((len(pairs), dim_sm, dim_sm), dtype=np.complex128)
    for (a, b), i in pair_index.items():
        ia = (a + 1) * bath_dim
        ib = (b + 1) * bath_dim
        stack[i, ia, ib] = 1.0 / n

    exc_layout = BasisLayout((("exc", dim_exc),), {"exc": gen.layout.encodings["exc"]})
    red_layout = join_layouts(exc_layout, ancilla_register(n))
    transposer = RegisterTransposer(red_layout, {"site1", "anc1"})

    stepper = make_stepper(gen.pack())
    weights = gen.population_weights()
    times: list[float] = []
    series: dict[str, list[float]] = {k: [] for k in weights}
    series["ep"] = []
    max_trace = 0.0
    max_herm = 0.0
    min_eig = np.inf
    pos_stride = max(1, int(round(100 / rec)))

    def assemble_reduced() -> np.ndarray:
        joint = np.zeros((dim_exc * n, dim_exc * n), dtype=np.complex128)
        for (a, b), i in pair_index.items():
            blk = stack[i].reshape(dim_exc, bath_dim, dim_exc, bath_dim)
            red = np.trace(blk, axis1=1, axis2=3)
            joint[a::n, b::n] = red
            if a != b:
                joint[b::n, a::n] = red.conj().T
        return joint

    def assemble_full() -> np.ndarray:
        joint = np.zeros((dim_sm * n, dim_sm * n), dtype=np.complex128)
        for (a, b), i in pair_index.items():
            joint[a::n, b::n] = stack[i]
            if a != b:
                joint[b::n, a::n] = stack[i].conj().T
        return joint

    def record(step, check_pos):
        nonlocal max_trace, max_herm, min_eig
        t = step * dt
        times.append(t)
        joint = assemble_reduced()
        diag_sm = sum(np.real(np.diagonal(stack[pair_index[(a, a)]])) for a in range(n))
        for lab, w in weights.items():
            series[lab].append(float(w @ diag_sm))
        tr_dev = abs(complex(np.trace(joint)) - 1.0)
        herm_dev = float(np.max(np.abs(joint - joint.conj().T)))
        max_trace = max(max_trace, tr_dev)
        max_herm = max(max_herm, herm_dev)
        if tr_dev > 1e-8 or herm_dev > 1e-8:
            raise StateValidityError(
                f"ancilla-protocol state drifted at t={t:.4f} ps "
                f"(|tr-1|={tr_dev:.2e}, herm={herm_dev:.2e})")
        pt = transposer.apply(joint)
        w_pt = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
        series["ep"].append(_log_trace_norm(w_pt))
        if check_pos:
            w_eig = np.linalg.eigvalsh(assemble_full())
            min_eig = min(min_eig, float(w_eig[0]))

    record(0, True)
    n_rec = 0
    for k in range(len(marks) - 1):
        span = marks[k + 1] - marks[k]
        stepper.rk4_span(stack, marks[k] * dt, dt, span)
        n_rec += 1
        record(marks[k + 1], (n_rec % pos_stride == 0) or marks[k + 1] == n_total)

    traj = Trajectory(
        times=np.asarray(times), series={k: np.asarray(v) for k, v in series.items()},
        layout=red_layout, final_state=QuantumState(red_layout, assemble_reduced()),
        t_fine=np.zeros(0), source_population_fine=np.zeros(0),
        sink_integral=np.zeros(0), snapshots={},
        validity={"max_trace_deviation": max_trace, "max_hermiticity_deviation": max_herm,
                  "min_eigenvalue": float(min_eig)},
        meta={"dt_ps": dt, "method": "rk4", "backend": BACKEND_NAME,
              "wall_s": _time.perf_counter() - t_start, "n_steps": n_total,
              "scenario": s.name})
    return traj


def run_scenario(s: Scenario, max_workers: int | None = None) -> Trajectory | SweepResult:
    """Run a scenario; sweeps return one trajectory per axis value."""
    if s.sweep_parameter is None:
        return _run_single(s)
    points = [_apply_sweep_value(s, v) for v in s.sweep_values]
    if max_workers is None:
        max_workers = int(os.environ.get(SWEEP_THREADS_ENV, "0") or 0)
    if max_workers <= 0:
        max_workers = min(4, os.cpu_count() or 1)
    if max_workers == 1 or len(points) == 1:
        trajs = tuple(_run_single(p) for p in points)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            trajs = tuple(pool.map(_run_single, points))
    return SweepResult(s.name, s.sweep_parameter, tuple(s.sweep_values), trajs)


def entanglement_lifetime(times: np.ndarray, negativity: np.ndarray,
                          threshold: float = ENTANGLEMENT_LIFETIME_THRESHOLD,
                          dwell: float = ENTANGLEMENT_LIFETIME_DWELL) -> float:
    """First time negativity drops below threshold and stays below for `dwell` ps."""
    below = negativity < threshold
    n = times.size
    for i in range(n):
        if not below[i]:
            continue
        j = i
        while j < n and below[j]:
            j += 1
        if j >= n or times[min(j, n - 1)] - times[i] >= dwell:
            return float(times[i])
    return float(times[-1])


# ---------------------------------------------------------------------------
# catalog


def catalog() -> dict[str, Scenario]:
    """The named experiments shipped with the package."""
    markov = NoiseSpec.markovian_defaults(7)
    no_deph = NoiseSpec.markovian_defaults(7, dephasing=np.zeros(7))
    all_splits = (1, 2, 3, 4, 5, 6)
    scenarios = [
        Scenario(
            name="markovian-baseline",
            description="Memoryless dephasing at the transport-optimal rates; "
                        "site-split entanglement and sink population.",
            noise=markov, site_splits=all_splits,
        ),
        Scenario(
            name="local-bath-sweep",
            description="Per-site damped two-level modes replacing the dephasing "
                        "channel; f dials the environment memory at fixed g^2/kappa.",
            noise=no_deph, bath=BathSpec(variant="local-modes"),
            site_splits=all_splits, record_every=10,
            sweep_parameter="f", sweep_values=(0.1, 1.0, 10.0, 100.0),
        ),
        Scenario(
            name="nonlocal-bath-sweep",
            description="One common damped mode with location-dependent damping; "
                        "entanglement persistence vs transfer efficiency.",
            noise=no_deph, bath=BathSpec(variant="non-local-mode"),
            site_splits=all_splits, record_every=10,
            sweep_parameter="f", sweep_values=(0.1, 1.0, 10.0, 100.0),
        ),
        Scenario(
            name="transfer-contour",
            description="Sink population over (t, f) for the common-mode bath.",
            noise=no_deph, bath=BathSpec(variant="non-local-mode"),
            site_splits=(1,), record_every=25,
            sweep_parameter="f", sweep_values=CONTOUR_F_VALUES,
        ),
        Scenario(
            name="entangling-power-contour",
            description="Entanglement the noisy evolution creates on half of a "
                        "maximally entangled system-ancilla pair, over (t, f).",
            noise=no_deph, bath=BathSpec(variant="non-local-mode"),
            initial_state="max-entangled-ancilla", ancilla_split=True, record_every=50,
            sweep_parameter="f", sweep_values=CONTOUR_F_VALUES,
        ),
        Scenario(
            name="thermal-injection",
            description="Ground start with a thermal pump on site 1; local vs "
                        "spatially correlated dephasing.",
            noise=NoiseSpec.markovian_defaults(
                7, injection=InjectionSpec(site=1, rate=1.0, n_th=100.0)),
            truncation="full", initial_state="ground",
            site_splits=all_splits, record_every=10,
            sweep_parameter="dephasing", sweep_values=("local", "correlated"),
        ),
        Scenario(
            name="laser-excitation",
            description="Ground start driven by the calibrated pi-pulse; local vs "
                        "spatially correlated dephasing.",
            noise=markov, truncation="full", initial_state="ground",
            laser=LaserPulse(field_strength=4.97968),
            t_end=1.0, site_splits=all_splits,
            population_snapshots_fs=(75.0,),
            sweep_parameter="dephasing", sweep_values=("local", "correlated"),
        ),
        Scenario(
            name="mode-entanglement",
            description="Exciton-basis entanglement splits and exciton populations "
                        "under memoryless dephasing.",
            noise=markov, t_end=2.0,
            exciton_splits=all_splits, record_excitons=True,
        ),
    ]
    return {s.name: s for s in scenarios}
