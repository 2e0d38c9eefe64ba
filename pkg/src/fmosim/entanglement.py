"""Entanglement functionals: logarithmic negativity (general partial
transpose and the one-excitation closed form), exciton-basis mode
entanglement, and the entangling power of an evolution via the ancilla
protocol.

Negativities are reported in ebits (log base 2).  Partial-transpose
eigenvalues in (-1e-12, 0) are treated as floating noise and clamped; a
partial transpose whose spectrum is nonnegative within 1e-10 reports exactly
zero entanglement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import BasisLayout, Bipartition, LayoutError, ancilla_register, join_layouts
from .dynamics import IntegratorConfig
from .kernels import make_stepper
from .linalg import (QuantumState, StateValidityError, assert_valid_state, partial_trace,
                     partial_transpose)
from .model import Generator, LindbladTerm

PT_NOISE_CLAMP = 1e-12
PT_PSD_THRESHOLD = 1e-10


@dataclass(frozen=True)
class NegativityReport:
    bipartition: Bipartition
    value: float
    method: str

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"negativity cannot be negative, got {self.value}")


def _log_trace_norm(pt_eigs: np.ndarray) -> float:
    if pt_eigs[0] >= -PT_PSD_THRESHOLD:
        return 0.0
    w = pt_eigs.copy()
    w[(w < 0) & (w > -PT_NOISE_CLAMP)] = 0.0
    return max(0.0, float(np.log2(np.sum(np.abs(w)))))


def factor_split(layout: BasisLayout, side_a) -> Bipartition:
    """Bipartition of layout factors with side_b the complement of side_a."""
    side_a = frozenset(side_a)
    rest = frozenset(layout.labels) - side_a
    return Bipartition(side_a, rest)


def log_negativity(rho: QuantumState, part: Bipartition,
                   validity_tol: float = 1e-6) -> NegativityReport:
    """log2 trace norm of the layout-factor partial transpose.

    Only meaningful for completely positive evolutions, so the state is
    checked (at the looser run tolerance) before any value is reported.
    """
    rep = assert_valid_state(rho, validity_tol, validity_tol, validity_tol)
    if not rep.ok:
        raise StateValidityError(f"refusing to evaluate entanglement of an invalid state: {rep}")
    pt = partial_transpose(rho, part)
    w = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    return NegativityReport(part, _log_trace_norm(w), "general-PT")


# ---------------------------------------------------------------------------
# one-excitation sector


@dataclass(frozen=True)
class SingleExcitationAmplitudes:
    """Zero-excitation weight plus the single-excitation block of a state."""

    a00: float
    block: np.ndarray     # (n, n), a_ij between excitations on sites i and j

    def __post_init__(self):
        b = np.asarray(self.block, dtype=np.complex128)
        object.__setattr__(self, "block", b)
        total = self.a00 + float(np.real(np.trace(b)))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"a00 plus site populations must be 1, got {total}")
        if np.max(np.abs(b - b.conj().T)) > 1e-8:
            raise ValueError("single-excitation block must be Hermitian")
        if self.a00 < -1e-10 or np.linalg.eigvalsh(b)[0] < -1e-8:
            raise ValueError("amplitude matrix must be positive semidefinite")

    @property
    def n_sites(self) -> int:
        return self.block.shape[0]

    @staticmethod
    def from_state(rho: QuantumState, register: str = "exc") -> "SingleExcitationAmplitudes":
        """Extract amplitudes from a state carrying an excitation register.

        Other factors (bath modes) are traced out first; sink population is
        vacuum from the network's point of view and folds into a00.
        """
        red = rho if rho.layout.labels == (register,) else partial_trace(rho, {register})
        enc = red.layout.encodings.get(register)
        if enc is None:
            raise LayoutError(f"factor {register!r} is not an excitation register")
        labels = enc.site_labels
        n = len([s for s in labels if s != "sink"])
        m = red.entries
        a00 = float(np.real(m[0, 0]))
        if "sink" in labels:
            a00 += float(np.real(m[n + 1, n + 1]))
        return SingleExcitationAmplitudes(a00, m[1:n + 1, 1:n + 1])


def log_negativity_1ex(amp: SingleExcitationAmplitudes, k: int) -> NegativityReport:
    """Closed-form negativity across (1..k)|(k+1..N) in the one-excitation sector."""
    n = amp.n_sites
    if not 1 <= k <= n - 1:
        raise ValueError(f"split index k must be in 1..{n - 1}, got {k}")
    x = float(np.sum(np.abs(amp.block[:k, k:]) ** 2))
    value = float(np.log2(1.0 - amp.a00 + np.sqrt(amp.a00 ** 2 + 4.0 * x)))
    part = Bipartition(frozenset(f"site{j}" for j in range(1, k + 1)),
                       frozenset(f"site{j}" for j in range(k + 1, n + 1)))
    return NegativityReport(part, max(0.0, value), "closed-form-1ex")


def embed_single_excitation(amp: SingleExcitationAmplitudes) -> QuantumState:
    """Embed one-excitation amplitudes into the explicit qubit product space.

    Independent oracle route for the closed form: the result can be fed to
    the general partial transpose directly.
    """
    n = amp.n_sites
    dim = 2 ** n
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[0, 0] = amp.a00
    # basis index of "excitation on site i" with site 1 the slowest factor
    idx = [2 ** (n - i) for i in range(1, n + 1)]
    for i in range(n):
        for j in range(n):
            rho[idx[i], idx[j]] = amp.block[i, j]
    layout = join_layouts(*[BasisLayout(((f"site{j}", 2),)) for j in range(1, n + 1)])
    return QuantumState(layout, rho)


# ---------------------------------------------------------------------------
# exciton (mode) entanglement


def exciton_amplitudes(amp: SingleExcitationAmplitudes, h_site_block: np.ndarray,
                       degeneracy_tol: float = 1e-9) -> SingleExcitationAmplitudes:
    """Rotate site amplitudes into the energy-ordered exciton basis."""
    h = np.asarray(h_site_block)
    if np.max(np.abs(h - h.conj().T)) > 1e-10:
        raise ValueError("site block must be Hermitian")
    w, u = np.linalg.eigh(h)
    if np.any(np.diff(w) < degeneracy_tol):
        k = int(np.argmin(np.diff(w)))
        raise RuntimeError(
            f"exciton energies {k + 1} and {k + 2} degenerate within {degeneracy_tol:.1e}; "
            f"energy ordering is undefined")
    rotated = u.conj().T @ amp.block @ u
    return SingleExcitationAmplitudes(amp.a00, rotated)


def mode_log_negativity(rho: QuantumState, h_site_block: np.ndarray, k: int,
                        register: str = "exc") -> NegativityReport:
    """Negativity across the exciton split (1..k)|(k+1..N), ascending energies."""
    amp = SingleExcitationAmplitudes.from_state(rho, register)
    ex = exciton_amplitudes(amp, h_site_block)
    rep = log_negativity_1ex(ex, k)
    part = Bipartition(frozenset(f"exciton{j}" for j in range(1, k + 1)),
                       frozenset(f"exciton{j}" for j in range(k + 1, ex.n_sites + 1)))
    return NegativityReport(part, rep.value, rep.method)


def exciton_populations(rho: QuantumState, h_site_block: np.ndarray,
                        register: str = "exc") -> np.ndarray:
    amp = SingleExcitationAmplitudes.from_state(rho, register)
    ex = exciton_amplitudes(amp, h_site_block)
    return np.real(np.diagonal(ex.block)).copy()


# ---------------------------------------------------------------------------
# partial transpose over logical sites of register-encoded layouts


class RegisterTransposer:
    """Partial transpose over a set of logical sites, via occupation swapping.

    Register encodings store one excitation pattern per level; transposing a
    subset of logical sites maps matrix elements between occupation patterns
    that may leave the encoded subspace, so the result lives on the (still
    small) space spanned by all reachable patterns.  Index tables are
    precomputed once per (layout, side) pair.
    """

    def __init__(self, layout: BasisLayout, side_a):
        labels, occ = layout.occupation_table()
        unknown = set(side_a) - set(labels)
        if unknown:
            raise LayoutError(f"unknown logical sites {sorted(unknown)}; have {labels}")
        if any(lab not in layout.encodings and d != 2 for lab, d in layout.factors):
            raise LayoutError("all layout factors must be registers or two-level "
                              "(trace out bath modes before transposing)")
        mask_a = np.array([lab in set(side_a) for lab in labels], dtype=bool)
        n = occ.shape[0]
        occ_a = occ * mask_a
        occ_b = occ * ~mask_a
        # swapped[i, j] = occupations of side_a from j combined with side_b from i
        swapped = occ_a[None, :, :] + occ_b[:, None, :]
        flat = swapped.reshape(n * n, -1)
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        self.out_dim = uniq.shape[0]
        self.index = inverse.reshape(n, n)
        self.side_a = frozenset(side_a)
        self.side_b = frozenset(labels) - self.side_a

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((self.out_dim, self.out_dim), dtype=np.complex128)
        out[self.index, self.index.T] = rho
        return out


def register_log_negativity(rho: QuantumState, side_a,
                            validity_tol: float = 1e-6) -> NegativityReport:
    """Negativity across a logical-site split of a register-encoded state."""
    rep = assert_valid_state(rho, validity_tol, validity_tol, validity_tol)
    if not rep.ok:
        raise StateValidityError(f"refusing to evaluate entanglement of an invalid state: {rep}")
    tr = RegisterTransposer(rho.layout, side_a)
    pt = tr.apply(rho.entries)
    w = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    return NegativityReport(Bipartition(tr.side_a, tr.side_b),
                            _log_trace_norm(w), "general-PT")


# ---------------------------------------------------------------------------
# entangling power


def extend_with_ancilla(gen: Generator, anc_layout: BasisLayout) -> Generator:
    """Lift a generator to act as itself tensor identity on an idle ancilla."""
    n_anc = anc_layout.total_dim
    eye = sp.identity(n_anc, format="coo")
    h = sp.kron(gen.h_static, eye, format="csr")
    terms = tuple(
        LindbladTerm(t.tag, tuple((sp.kron(op, eye, format="coo"), rate)
                                  for op, rate in t.jumps))
        for t in gen.lindblad_terms)
    drive = None
    if gen.drive is not None:
        from .model import DriveTerm
        drive = DriveTerm(sp.kron(gen.drive.matrix, eye, format="coo"), gen.drive.params,
                          np.kron(gen.drive.frame_shift_diag, np.ones(n_anc)))
    layout = join_layouts(gen.layout, anc_layout)
    return Generator(layout=layout, h_static=sp.csr_matrix(h), lindblad_terms=terms,
                     drive=drive, source_site=None, sink_rate=0.0, network=gen.network)


def maximally_entangled_with_ancilla(gen: Generator) -> tuple[QuantumState, Generator]:
    """The protocol's initial state and the ancilla-extended generator.

    Register-encoded systems pair each site level with a matching ancilla
    level inside the one-excitation sector, (1/sqrt(N)) sum_i |i>|i>; product
    systems use the full maximally entangled state over all their factors.
    Bath factors start in their ground level.
    """
    lay = gen.layout
    if "exc" in lay.labels:
        enc = lay.encodings["exc"]
        n = len([s for s in enc.site_labels if s != "sink"])
        anc = ancilla_register(n)
        ext = extend_with_ancilla(gen, anc)
        bath_dim = lay.total_dim // lay.dim_of("exc")
        psi = np.zeros(ext.dim, dtype=np.complex128)
        for i in range(1, n + 1):
            psi[(i * bath_dim + 0) * n + (i - 1)] = 1.0 / np.sqrt(n)
        return QuantumState(ext.layout, np.outer(psi, psi.conj())), ext
    mirror = BasisLayout(tuple((f"anc_{lab}", d) for lab, d in lay.factors))
    ext = extend_with_ancilla(gen, mirror)
    d = lay.total_dim
    psi = np.zeros(ext.dim, dtype=np.complex128)
    for s in range(d):
        psi[s * d + s] = 1.0 / np.sqrt(d)
    return QuantumState(ext.layout, np.outer(psi, psi.conj())), ext


def entangling_power(gen: Generator, t: float, split: Bipartition | None = None,
                     dt: float = 0.001) -> float:
    """Entanglement created across a cut when the evolution acts on half of a
    maximally entangled system-ancilla state for a time t."""
    state0, ext = maximally_entangled_with_ancilla(gen)
    stack = np.ascontiguousarray(state0.entries[None, :, :].copy())
    if t > 0:
        n_steps = max(1, int(round(t / dt)))
        stepper = make_stepper(ext.pack())
        stepper.rk4_span(stack, 0.0, t / n_steps, n_steps)
    joint = QuantumState(ext.layout, stack[0])
    if "exc" in ext.layout.labels:
        keep = {lab for lab in ext.layout.labels if lab in ("exc", "anc")}
        reduced = partial_trace(joint, keep)
        side_a = split.side_a if split is not None else frozenset({"site1", "anc1"})
        return register_log_negativity(reduced, side_a).value
    if split is None:
        raise ValueError("product-space systems need an explicit bipartition")
    return log_negativity(joint, split).value
