"""Model builders: network Hamiltonian, every Lindblad channel, structured
baths, and the laser drive.

Two state-space truncations are supported.  "single" keeps the zero-or-one
excitation sector as one register factor (ground + one level per site + an
explicit sink level), which is exact for all scenarios without injection or
optical driving.  "full" uses the complete qubit product space (one factor
per site plus a sink qubit) and is required whenever ground/excited
coherences or multiple excitations can appear.

All builders are pure; a :class:`Generator` is immutable after construction
and safe to share read-only across parallel runs.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .basis import BasisLayout, LayoutError, excitation_register, join_layouts, product_layout
from .kernels import DriveParams, KernelModel, pack_model
from .units import CM1_TO_RAD_PER_PS, FS_TO_PS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from importlib import resources


class ValidationError(ValueError):
    """A model specification violates its invariants."""


class ResourceError(RuntimeError):
    """A requested state space exceeds the configured size cap."""


class DegeneracyError(RuntimeError):
    """Exciton energies are degenerate, so their energy ordering is undefined."""


# Rates quoted in 1/ps throughout.
DEFAULT_DISSIPATION_RATE = 5.0e-4
DEFAULT_DEPHASING_RATES = np.array([0.157, 9.432, 7.797, 9.432, 7.797, 0.922, 9.433])
DEFAULT_SINK_RATE = 6.283
DEFAULT_SINK_SOURCE_SITE = 3
DEFAULT_BASE_MODE_RATES = np.array([1.0, 50.0, 41.0, 50.0, 41.0, 5.0, 50.0]) / 5.3

DEFAULT_DIMENSION_CAP = 8192


# ---------------------------------------------------------------------------
# specifications


@dataclass(frozen=True)
class NetworkSpec:
    """Chromophore network: energies and hoppings in rad/ps, dipoles in Debye."""

    site_energies: np.ndarray
    couplings: np.ndarray
    dipole_moments: np.ndarray | None = None
    excitation_truncation: str = "single"

    def __post_init__(self):
        e = np.asarray(self.site_energies, dtype=np.float64)
        v = np.asarray(self.couplings, dtype=np.float64)
        n = e.shape[0]
        if n < 2:
            raise ValidationError(f"need at least 2 sites, got {n}")
        if v.shape != (n, n):
            raise ValidationError(f"couplings shape {v.shape} does not match {n} sites")
        if np.max(np.abs(v - v.T)) > 1e-12:
            raise ValidationError("couplings matrix must be symmetric")
        if np.max(np.abs(np.diag(v))) > 0:
            raise ValidationError("couplings matrix must have zero diagonal")
        if self.excitation_truncation not in ("single", "full"):
            raise ValidationError(f"unknown truncation {self.excitation_truncation!r}")
        mu = self.dipole_moments
        if mu is not None:
            mu = np.asarray(mu, dtype=np.float64)
            if mu.shape != (n, 3):
                raise ValidationError(f"dipole moments shape {mu.shape}, expected ({n}, 3)")
        object.__setattr__(self, "site_energies", e)
        object.__setattr__(self, "couplings", v)
        object.__setattr__(self, "dipole_moments", mu)

    @property
    def n_sites(self) -> int:
        return self.site_energies.shape[0]


@dataclass(frozen=True)
class InjectionSpec:
    site: int
    rate: float
    n_th: float

    def __post_init__(self):
        if self.rate < 0 or self.n_th < 0:
            raise ValidationError("injection rate and thermal occupancy must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    """Dissipation, dephasing, sink and injection rates (1/ps)."""

    dissipation: np.ndarray
    dephasing: np.ndarray
    sink_rate: float = DEFAULT_SINK_RATE
    sink_source_site: int = DEFAULT_SINK_SOURCE_SITE
    correlated_dephasing: np.ndarray | None = None
    injection: InjectionSpec | None = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.dissipation, dtype=np.float64))
        d = np.atleast_1d(np.asarray(self.dephasing, dtype=np.float64))
        if np.any(g < 0) or np.any(d < 0) or self.sink_rate < 0:
            raise ValidationError("all rates must be >= 0")
        object.__setattr__(self, "dissipation", g)
        object.__setattr__(self, "dephasing", d)
        c = self.correlated_dephasing
        if c is not None:
            c = np.asarray(c, dtype=np.float64)
            if c.shape[0] != c.shape[1]:
                raise ValidationError("correlated dephasing matrix must be square")
            if np.max(np.abs(c - c.T)) > 1e-12:
                raise ValidationError("correlated dephasing matrix must be symmetric")
            w = np.linalg.eigvalsh(c)
            if w[0] < -1e-12:
                raise ValidationError(
                    f"correlated dephasing matrix is not positive semidefinite "
                    f"(eigenvalue {w[0]:.6e})")
            object.__setattr__(self, "correlated_dephasing", c)

    @staticmethod
    def markovian_defaults(n_sites: int = 7, **overrides) -> "NoiseSpec":
        if n_sites == 7:
            deph = DEFAULT_DEPHASING_RATES.copy()
        else:
            deph = np.zeros(n_sites)
        kw = dict(dissipation=np.full(n_sites, DEFAULT_DISSIPATION_RATE), dephasing=deph)
        kw.update(overrides)
        return NoiseSpec(**kw)


def correlated_dephasing_matrix(local_rates: np.ndarray, correlation: float) -> np.ndarray:
    """(1-c)*diag(gamma) + c*sqrt(gamma_m gamma_n): PSD with the local diagonal."""
    if not 0.0 <= correlation <= 1.0:
        raise ValidationError(f"correlation strength must lie in [0, 1], got {correlation}")
    g = np.asarray(local_rates, dtype=np.float64)
    root = np.sqrt(np.outer(g, g))
    return (1.0 - correlation) * np.diag(g) + correlation * root


@dataclass(frozen=True)
class BathSpec:
    """Structured-environment variant with the Markovianity dial f.

    Effective rates are g = sqrt(f)*g0 and kappa = f*kappa0, which holds the
    site-mode effective coupling g^2/kappa fixed while f tunes the memory
    time of the environment (large f recovers the memoryless limit).
    """

    variant: str = "none"                    # none | local-modes | non-local-mode
    f: float = 1.0
    base_couplings: np.ndarray = field(default_factory=lambda: DEFAULT_BASE_MODE_RATES.copy())
    base_dampings: np.ndarray = field(default_factory=lambda: DEFAULT_BASE_MODE_RATES.copy())
    mode_frequencies: np.ndarray | None = None   # local modes; default resonant with sites
    levels_per_mode: int = 2                     # local modes (two-level approximation)
    max_total_mode_excitations: int = 2          # local modes, joint truncation
    mode_levels: int | None = None               # non-local mode: d+1 ladder levels; None = by f

    def __post_init__(self):
        if self.variant not in ("none", "local-modes", "non-local-mode"):
            raise ValidationError(f"unknown bath variant {self.variant!r}")
        if self.f <= 0:
            raise ValidationError(f"bath scaling f must be positive, got {self.f}")
        if self.levels_per_mode < 2:
            raise ValidationError("levels_per_mode must be >= 2")
        if self.mode_levels is not None and self.mode_levels < 2:
            raise ValidationError("non-local mode needs at least 2 levels (d >= 1)")
        object.__setattr__(self, "base_couplings",
                           np.asarray(self.base_couplings, dtype=np.float64))
        object.__setattr__(self, "base_dampings",
                           np.asarray(self.base_dampings, dtype=np.float64))

    @property
    def couplings(self) -> np.ndarray:
        return np.sqrt(self.f) * self.base_couplings

    @property
    def dampings(self) -> np.ndarray:
        return self.f * self.base_dampings

    def resolved_mode_levels(self) -> int:
        """Ladder size for the common mode.

        Its occupancy scales like (g/kappa)^2 = (g0/kappa0)^2 / f, so when no
        explicit size is given the ladder grows as 1/sqrt(f); the run-time
        top-level occupancy series verifies the choice.
        """
        if self.mode_levels is not None:
            return self.mode_levels
        return int(np.clip(np.ceil(3.0 + 6.0 / np.sqrt(self.f)), 4, 24))


def scale_bath(bath: BathSpec, f: float) -> BathSpec:
    """Same bath at a different Markovianity f (g^2/kappa is f-independent)."""
    if f <= 0:
        raise ValidationError(f"bath scaling f must be positive, got {f}")
    return replace(bath, f=f)


@dataclass(frozen=True)
class LaserPulse:
    """Gaussian optical pulse in the spectroscopic field convention.

    ``field_strength`` in 1/(Debye*cm): multiplied by a dipole in Debye it is
    an interaction energy in cm^-1.  ``width`` is the Gaussian standard
    deviation of the field envelope.
    """

    field_strength: float
    width_fs: float = 60.0
    center_fs: float = 120.0
    polarization: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    carrier: float | str = "site-1"          # rad/ps, or "site-j" for resonance
    frame: str = "rotating"

    def __post_init__(self):
        if self.width_fs <= 0:
            raise ValidationError("pulse width must be positive")
        e = np.asarray(self.polarization, dtype=np.float64)
        if e.shape != (3,) or abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValidationError("polarization must be a unit 3-vector")
        if self.frame not in ("rotating", "lab"):
            raise ValidationError(f"unknown frame {self.frame!r}")
        object.__setattr__(self, "polarization", e)

    def carrier_frequency(self, net: NetworkSpec) -> float:
        if isinstance(self.carrier, str):
            if not self.carrier.startswith("site-"):
                raise ValidationError(f"carrier must be a frequency or 'site-j', got {self.carrier!r}")
            j = int(self.carrier.split("-", 1)[1])
            return float(net.site_energies[j - 1])
        return float(self.carrier)


# ---------------------------------------------------------------------------
# operators on the two truncations


class _SiteOps:
    """sigma_j^-, number operators and the sink jump for a given layout."""

    def __init__(self, layout: BasisLayout, n_sites: int, truncation: str):
        self.layout = layout
        self.n_sites = n_sites
        self.truncation = truncation
        self.dim = layout.total_dim

    def lower(self, j: int) -> sp.coo_matrix:
        if self.truncation == "single":
            return sp.coo_matrix(([1.0], ([0], [j])), shape=(self.dim, self.dim))
        return self._qubit_op(f"site{j}", sp.coo_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))

    def raise_(self, j: int) -> sp.coo_matrix:
        return self.lower(j).T.tocoo()

    def number_diag(self, label: str) -> np.ndarray:
        labels, table = self.layout.occupation_table()
        return table[:, labels.index(label)].astype(np.float64)

    def sink_jump(self, source: int) -> sp.coo_matrix:
        if "sink" not in self.layout.site_labels():
            raise LayoutError("layout has no sink level")
        if self.truncation == "single":
            sink_level = self.n_sites + 1
            return sp.coo_matrix(([1.0], ([sink_level], [source])), shape=(self.dim, self.dim))
        up = self._qubit_op("sink", sp.coo_matrix(np.array([[0.0, 0.0], [1.0, 0.0]])))
        down = self._qubit_op(f"site{source}", sp.coo_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))
        return (up @ down).tocoo()

    def _qubit_op(self, label: str, op2: sp.spmatrix) -> sp.coo_matrix:
        m = sp.identity(1, format="coo")
        for lab, d in self.layout.factors:
            m = sp.kron(m, op2 if lab == label else sp.identity(d, format="coo"), format="coo")
        return m.tocoo()


def _network_layout(net: NetworkSpec) -> BasisLayout:
    if net.excitation_truncation == "single":
        return excitation_register(net.n_sites)
    factors = [(f"site{j}", 2) for j in range(1, net.n_sites + 1)] + [("sink", 2)]
    return product_layout(*factors)


def build_network_hamiltonian(net: NetworkSpec) -> tuple[np.ndarray, BasisLayout]:
    """Coherent part: site energies on the diagonal, hoppings off-diagonal.

    In the single-excitation truncation the basis is (ground, site 1..N,
    sink) and <j|H|l> = v_jl directly; in the full truncation the hopping
    terms act in every excitation sector.  Ground and sink rows are zero.
    """
    layout = _network_layout(net)
    n = net.n_sites
    if net.excitation_truncation == "single":
        h = np.zeros((layout.total_dim, layout.total_dim))
        h[1:n + 1, 1:n + 1] = net.couplings + np.diag(net.site_energies)
        return h, layout
    ops = _SiteOps(layout, n, "full")
    h = sp.coo_matrix((layout.total_dim, layout.total_dim))
    for j in range(1, n + 1):
        h = h + net.site_energies[j - 1] * sp.diags(ops.number_diag(f"site{j}"))
    for j in range(1, n + 1):
        for l in range(j + 1, n + 1):
            v = net.couplings[j - 1, l - 1]
            if v != 0.0:
                hop = ops.raise_(j) @ ops.lower(l)
                h = h + v * (hop + hop.T)
    return np.asarray(h.todense()), layout


def exciton_basis(net: NetworkSpec, degeneracy_tol: float = 1e-9):
    """Eigenbasis of the single-excitation site block, ascending in energy.

    Returns (energies, U) with U[:, k] the k-th exciton's site amplitudes.
    Raises :class:`DegeneracyError` when the energy ordering is ambiguous.
    """
    block = net.couplings + np.diag(net.site_energies)
    w, u = np.linalg.eigh(block)
    gaps = np.diff(w)
    if np.any(gaps < degeneracy_tol):
        k = int(np.argmin(gaps))
        raise DegeneracyError(
            f"excitons {k + 1} and {k + 2} are degenerate within {degeneracy_tol:.1e} "
            f"(gap {gaps[k]:.3e} rad/ps); energy ordering is undefined")
    return w, u


# ---------------------------------------------------------------------------
# Lindblad channels


@dataclass(frozen=True)
class LindbladTerm:
    """One tagged dissipator: sum_k rate_k * (2 L_k rho L_k^dag - {L_k^dag L_k, rho})."""

    tag: str
    jumps: tuple[tuple[sp.spmatrix, float], ...]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=np.complex128)
        for op, rate in self.jumps:
            l = op.toarray().astype(np.complex128)
            ld = l.conj().T
            n = ld @ l
            out += rate * (2.0 * (l @ rho @ ld) - n @ rho - rho @ n)
        return out


def _require_nonnegative(rates: np.ndarray, what: str) -> np.ndarray:
    r = np.atleast_1d(np.asarray(rates, dtype=np.float64))
    if np.any(r < 0):
        raise ValidationError(f"{what} rates must be >= 0")
    return r


def dissipation_term(ops: _SiteOps, rates) -> LindbladTerm:
    rates = _require_nonnegative(rates, "dissipation")
    jumps = tuple((ops.lower(j + 1), float(rates[j]))
                  for j in range(ops.n_sites) if rates[j] > 0)
    return LindbladTerm("dissipation", jumps)


def dephasing_term(ops: _SiteOps, rates) -> LindbladTerm:
    rates = _require_nonnegative(rates, "dephasing")
    jumps = tuple((sp.diags(ops.number_diag(f"site{j + 1}")).tocoo(), float(rates[j]))
                  for j in range(ops.n_sites) if rates[j] > 0)
    return LindbladTerm("dephasing", jumps)


def correlated_dephasing_term(ops: _SiteOps, gamma: np.ndarray) -> LindbladTerm:
    """Spatially correlated pure dephasing -sum_mn gamma_mn [A_m, [A_n, rho]].

    The matrix is diagonalized into independent collective channels
    L_k = sum_m w_km A_m with rate lambda_k; a diagonal gamma reproduces the
    local dephasing channel with the same rates (no extra factor).
    """
    g = np.asarray(gamma, dtype=np.float64)
    n = ops.n_sites
    if g.shape != (n, n) or np.max(np.abs(g - g.T)) > 1e-12:
        raise ValidationError(f"correlated dephasing matrix must be symmetric {n}x{n}")
    w, vecs = np.linalg.eigh(g)
    if w[0] < -1e-12:
        raise ValidationError(
            f"correlated dephasing matrix is not positive semidefinite (eigenvalue {w[0]:.6e})")
    jumps = []
    site_diags = [ops.number_diag(f"site{j + 1}") for j in range(n)]
    for k in range(n):
        if w[k] <= 1e-15:
            continue
        collective = sum(vecs[m, k] * site_diags[m] for m in range(n))
        jumps.append((sp.diags(collective).tocoo(), float(w[k])))
    return LindbladTerm("correlated-dephasing", tuple(jumps))


def sink_term(ops: _SiteOps, rate: float, source: int) -> LindbladTerm:
    if rate < 0:
        raise ValidationError("sink rate must be >= 0")
    return LindbladTerm("sink", ((ops.sink_jump(source), float(rate)),))


def injection_term(ops: _SiteOps, spec: InjectionSpec) -> LindbladTerm:
    """Thermal pump: upward channel n_th*rate/2, downward (n_th+1)*rate/2."""
    jumps = []
    if spec.n_th > 0:
        jumps.append((ops.raise_(spec.site), spec.n_th * spec.rate / 2.0))
    jumps.append((ops.lower(spec.site), (spec.n_th + 1.0) * spec.rate / 2.0))
    return LindbladTerm("injection", tuple(jumps))


# ---------------------------------------------------------------------------
# structured baths


@dataclass(frozen=True)
class BathExtension:
    """State-space enlargement plus the bath Hamiltonian and damping channels."""

    bath_layout: BasisLayout                 # the extra factor
    h_bath_diag: np.ndarray                  # on the joint layout
    h_coupling: sp.coo_matrix                # on the joint layout
    damping: LindbladTerm                    # on the joint layout
    mode_number_diags: dict[str, np.ndarray]  # per-mode occupancy observables


def _local_mode_configs(n_modes: int, cap: int) -> np.ndarray:
    configs = [m for m in range(2 ** n_modes) if bin(m).count("1") <= cap]
    table = np.array([[(m >> j) & 1 for j in range(n_modes)] for m in configs], dtype=np.int64)
    return table


def build_local_bath(net: NetworkSpec, bath: BathSpec,
                     system_layout: BasisLayout,
                     dimension_cap: int = DEFAULT_DIMENSION_CAP) -> BathExtension:
    """One damped two-level mode per site, displacement-coupled to its population.

    The joint mode space is truncated to ``max_total_mode_excitations`` total
    quanta; per-mode occupancies are exposed so runs can verify that no mode
    approaches saturation (the truncation quality check).
    """
    if bath.variant != "local-modes":
        raise ValidationError(f"expected local-modes bath, got {bath.variant!r}")
    if bath.levels_per_mode != 2:
        raise ValidationError("local modes are built in the two-level approximation")
    n = net.n_sites
    table = _local_mode_configs(n, bath.max_total_mode_excitations)
    n_cfg = table.shape[0]
    dim_sys = system_layout.total_dim
    if dim_sys * n_cfg > dimension_cap:
        raise ResourceError(
            f"joint dimension {dim_sys * n_cfg} exceeds cap {dimension_cap}; "
            f"lower max_total_mode_excitations (now {bath.max_total_mode_excitations})")
    vib = product_layout(("vib", n_cfg))
    cfg_index = {tuple(row): i for i, row in enumerate(table)}

    freqs = bath.mode_frequencies
    freqs = net.site_energies if freqs is None else np.asarray(freqs, dtype=np.float64)
    h_bath_cfg = table @ freqs

    g = bath.couplings
    kappa = bath.dampings
    rows, cols, vals = [], [], []
    for j in range(n):
        site_level = j + 1                    # excitation register level of site j+1
        for m, cfg in enumerate(table):
            if cfg[j] == 1:
                continue
            up = list(cfg)
            up[j] = 1
            m2 = cfg_index.get(tuple(up))
            if m2 is None:
                continue                      # raising leaves the truncated space
            a = site_level * n_cfg + m2
            b = site_level * n_cfg + m
            rows += [a, b]
            cols += [b, a]
            vals += [g[j], g[j]]
    dim = dim_sys * n_cfg
    h_coupling = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))

    jumps = []
    mode_diags: dict[str, np.ndarray] = {}
    eye_sys = sp.identity(dim_sys, format="coo")
    for j in range(n):
        r, c, v = [], [], []
        for m, cfg in enumerate(table):
            if cfg[j] == 1:
                low = list(cfg)
                low[j] = 0
                r.append(cfg_index[tuple(low)])
                c.append(m)
                v.append(1.0)
        a_j = sp.coo_matrix((v, (r, c)), shape=(n_cfg, n_cfg))
        if kappa[j] > 0:
            jumps.append((sp.kron(eye_sys, a_j, format="coo"), float(kappa[j])))
        mode_diags[f"mode_{j + 1}"] = np.tile(table[:, j].astype(np.float64), dim_sys)

    h_bath_diag = np.tile(h_bath_cfg, dim_sys)
    return BathExtension(vib, h_bath_diag, h_coupling.tocoo(),
                         LindbladTerm("mode-damping", tuple(jumps)), mode_diags)


def build_nonlocal_bath(net: NetworkSpec, bath: BathSpec,
                        system_layout: BasisLayout) -> BathExtension:
    """One common damped mode; its damping depends on where the excitation sits.

    Restricted to the single-excitation truncation: the basis is
    {|i> |0..d>} with the first index the excitation location.
    """
    if bath.variant != "non-local-mode":
        raise ValidationError(f"expected non-local-mode bath, got {bath.variant!r}")
    if net.excitation_truncation != "single":
        raise ValidationError("the non-local bath is defined on the single-excitation sector")
    n = net.n_sites
    nl = bath.resolved_mode_levels()
    dim_sys = system_layout.total_dim
    dim = dim_sys * nl
    mode = product_layout(("mode", nl))

    ladder = np.sqrt(np.arange(1, nl, dtype=np.float64))
    g = bath.couplings
    kappa = bath.dampings
    rows, cols, vals = [], [], []
    jump_list = []
    for j in range(n):
        site_level = j + 1
        r, c, v = [], [], []
        for m in range(1, nl):
            a = site_level * nl + (m - 1)
            b = site_level * nl + m
            rows += [a, b]
            cols += [b, a]
            vals += [g[j] * ladder[m - 1], g[j] * ladder[m - 1]]
            r.append(a)
            c.append(b)
            v.append(ladder[m - 1])
        if kappa[j] > 0:
            jump_list.append((sp.coo_matrix((v, (r, c)), shape=(dim, dim)), float(kappa[j])))
    h_coupling = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))

    number = np.tile(np.arange(nl, dtype=np.float64), dim_sys)
    top = np.tile((np.arange(nl) == nl - 1).astype(np.float64), dim_sys)
    return BathExtension(mode, np.zeros(dim), h_coupling,
                         LindbladTerm("mode-damping", tuple(jump_list)),
                         {"mode_occupancy": number, "mode_top_level": top})


# ---------------------------------------------------------------------------
# laser drive


@dataclass(frozen=True)
class DriveTerm:
    matrix: sp.coo_matrix            # multiplies z(t); the h.c. is implicit
    params: DriveParams
    frame_shift_diag: np.ndarray     # diagonal added to H in the rotating frame


def build_laser_drive(net: NetworkSpec, pulse: LaserPulse, ops: _SiteOps) -> DriveTerm:
    """Semiclassical dipole coupling -sum_i (mu_i . e) E(t) exp(-i w1 t) sigma_i^+ + h.c.

    In the rotating frame the carrier is absorbed into excitation-number
    detunings (sink included, so the frame change commutes with every jump
    channel) and only the Gaussian envelope stays time-dependent.
    """
    if net.excitation_truncation != "full":
        raise ValidationError("laser driving requires the full excitation truncation")
    if net.dipole_moments is None:
        raise ValidationError("laser driving requires dipole moments in the network spec")
    w1 = pulse.carrier_frequency(net)
    dim = ops.dim
    b = sp.coo_matrix((dim, dim))
    for j in range(1, net.n_sites + 1):
        amp = float(net.dipole_moments[j - 1] @ pulse.polarization)   # Debye
        if amp == 0.0:
            continue
        b = b + (-amp * pulse.field_strength * CM1_TO_RAD_PER_PS) * ops.raise_(j)

    if pulse.frame == "rotating":
        labels, table = ops.layout.occupation_table()
        n_exc = table.sum(axis=1).astype(np.float64)
        shift = -w1 * n_exc
        params = DriveParams(center=pulse.center_fs * FS_TO_PS,
                             sigma=pulse.width_fs * FS_TO_PS, omega=0.0)
    else:
        shift = np.zeros(dim)
        params = DriveParams(center=pulse.center_fs * FS_TO_PS,
                             sigma=pulse.width_fs * FS_TO_PS, omega=w1)
    return DriveTerm(b.tocoo(), params, shift)


# ---------------------------------------------------------------------------
# generator assembly


@dataclass
class Generator:
    """Right-hand-side generator: H(t) plus tagged Lindblad channels."""

    layout: BasisLayout
    h_static: sp.csr_matrix
    lindblad_terms: tuple[LindbladTerm, ...]
    drive: DriveTerm | None = None
    source_site: int | None = None
    sink_rate: float = 0.0
    mode_number_diags: dict[str, np.ndarray] = field(default_factory=dict)
    network: NetworkSpec | None = None
    _packed: KernelModel | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def hamiltonian(self, t: float) -> np.ndarray:
        h = np.asarray(self.h_static.todense(), dtype=np.complex128)
        if self.drive is not None:
            z = self.drive.params.coefficient(t)
            b = np.asarray(self.drive.matrix.todense(), dtype=np.complex128)
            h = h + z * b + np.conj(z) * b.conj().T
        return h

    def apply(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Dense reference evaluation of the full right-hand side."""
        h = self.hamiltonian(t)
        out = -1j * (h @ rho - rho @ h)
        for term in self.lindblad_terms:
            out = out + term.apply(rho)
        return out

    def population_weights(self) -> dict[str, np.ndarray]:
        """Diagonal weight vectors for ground, each site, and the sink."""
        labels, table = self.layout.occupation_table()
        weights = {lab: table[:, k].astype(np.float64) for k, lab in enumerate(labels)}
        weights["ground"] = (table.sum(axis=1) == 0).astype(np.float64)
        return weights

    def source_weights(self) -> np.ndarray:
        if self.source_site is None:
            return np.zeros(self.dim)
        return self.population_weights()[f"site{self.source_site}"]

    def pack(self) -> KernelModel:
        if self._packed is not None:
            return self._packed
        diagonal_jumps: list[tuple[np.ndarray, float]] = []
        scatter_jumps: list[tuple[sp.spmatrix, float]] = []
        for term in self.lindblad_terms:
            for op, rate in term.jumps:
                c = op.tocoo()
                is_diag = np.all(c.row == c.col) and np.max(np.abs(c.data.imag), initial=0.0) == 0.0
                if is_diag:
                    diag = np.zeros(self.dim)
                    diag[c.row] = c.data.real
                    diagonal_jumps.append((diag, rate))
                else:
                    scatter_jumps.append((op, rate))
        drive_matrix = None
        drive_params = None
        h = self.h_static
        if self.drive is not None:
            drive_matrix = self.drive.matrix
            drive_params = self.drive.params
        self._packed = pack_model(self.dim, h, diagonal_jumps, scatter_jumps,
                                  p3_weights=self.source_weights(),
                                  drive_matrix=drive_matrix, drive=drive_params)
        return self._packed


def build_generator(net: NetworkSpec,
                    noise: NoiseSpec,
                    bath: BathSpec | None = None,
                    laser: LaserPulse | None = None,
                    dimension_cap: int = DEFAULT_DIMENSION_CAP) -> Generator:
    """Compose the network, noise, bath and drive into one generator."""
    h_net, sys_layout = build_network_hamiltonian(net)
    ops = _SiteOps(sys_layout, net.n_sites, net.excitation_truncation)

    terms: list[LindbladTerm] = []
    if np.any(noise.dissipation > 0):
        terms.append(dissipation_term(ops, noise.dissipation))
    if noise.correlated_dephasing is not None:
        terms.append(correlated_dephasing_term(ops, noise.correlated_dephasing))
    elif np.any(noise.dephasing > 0):
        terms.append(dephasing_term(ops, noise.dephasing))
    if noise.sink_rate > 0:
        terms.append(sink_term(ops, noise.sink_rate, noise.sink_source_site))
    if noise.injection is not None:
        terms.append(injection_term(ops, noise.injection))

    drive = None
    if laser is not None:
        drive = build_laser_drive(net, laser, ops)

    layout = sys_layout
    h = sp.csr_matrix(h_net)
    mode_diags: dict[str, np.ndarray] = {}
    if bath is not None and bath.variant != "none":
        if bath.variant == "local-modes":
            ext = build_local_bath(net, bath, sys_layout, dimension_cap=dimension_cap)
        else:
            ext = build_nonlocal_bath(net, bath, sys_layout)
        n_bath = ext.bath_layout.total_dim
        layout = join_layouts(sys_layout, ext.bath_layout)
        eye_bath = sp.identity(n_bath, format="coo")
        h = sp.kron(sp.csr_matrix(h_net), eye_bath, format="csr")
        h = h + sp.diags(ext.h_bath_diag) + ext.h_coupling
        lifted = []
        for term in terms:
            lifted.append(LindbladTerm(term.tag, tuple(
                (sp.kron(op, eye_bath, format="coo"), rate) for op, rate in term.jumps)))
        terms = lifted + [ext.damping]
        mode_diags = ext.mode_number_diags
        if drive is not None:
            raise ValidationError("laser driving with a structured bath is not supported")
    elif drive is not None:
        h = sp.csr_matrix(h + sp.diags(drive.frame_shift_diag))

    return Generator(layout=layout, h_static=sp.csr_matrix(h), lindblad_terms=tuple(terms),
                     drive=drive, source_site=noise.sink_source_site if noise.sink_rate > 0 else None,
                     sink_rate=noise.sink_rate, mode_number_diags=mode_diags, network=net)


# ---------------------------------------------------------------------------
# shipped network data


def load_network_file(path_or_buffer, truncation: str = "single") -> NetworkSpec:
    """Read a [network] table (TOML) into a NetworkSpec, converting units."""
    from .units import energy_to_rad_per_ps

    if hasattr(path_or_buffer, "read"):
        data = tomllib.load(path_or_buffer)
    else:
        with open(path_or_buffer, "rb") as fh:
            data = tomllib.load(fh)
    net = data["network"]
    units = net.get("units", "rad/ps")
    energies = energy_to_rad_per_ps(np.asarray(net["site_energies"], dtype=np.float64), units)
    couplings = energy_to_rad_per_ps(np.asarray(net["couplings"], dtype=np.float64), units)
    mu = None
    if "dipole_directions" in net:
        dirs = np.asarray(net["dipole_directions"], dtype=np.float64)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        mu = dirs * float(net.get("dipole_magnitude_debye", 1.0))
    return NetworkSpec(site_energies=energies, couplings=couplings,
                       dipole_moments=mu, excitation_truncation=truncation)


def default_fmo_network(truncation: str = "single") -> NetworkSpec:
    """The seven-site network shipped with the package (see data/fmo_default.toml)."""
    ref = resources.files("fmosim.data").joinpath("fmo_default.toml")
    with ref.open("rb") as fh:
        return load_network_file(fh, truncation=truncation)
