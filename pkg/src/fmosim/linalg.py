"""Dense complex-matrix primitives over enumerated tensor-product bases.

Tensor products, partial trace, partial transpose, trace norm and state
validity checks.  Everything here is a pure function; density matrices are
plain ``complex128`` arrays wrapped together with their :class:`BasisLayout`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisLayout, Bipartition, LayoutError

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-9


class StateValidityError(ValueError):
    """Raised when a density matrix violates its physicality contract."""


@dataclass(frozen=True)
class QuantumState:
    """Density matrix over an explicit basis layout."""

    layout: BasisLayout
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.complex128)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise LayoutError(f"entries shape {m.shape} does not match layout dimension {d}")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def trace(self) -> complex:
        return complex(np.trace(self.entries))


@dataclass(frozen=True)
class ValidityReport:
    hermiticity_deviation: float
    trace_deviation: float
    min_eigenvalue: float
    tol_hermiticity: float
    tol_trace: float
    tol_positivity: float

    @property
    def ok(self) -> bool:
        return (
            self.hermiticity_deviation <= self.tol_hermiticity
            and self.trace_deviation <= self.tol_trace
            and self.min_eigenvalue >= -self.tol_positivity
        )

    def __str__(self) -> str:
        status = "pass" if self.ok else "FAIL"
        return (
            f"state check [{status}]: |rho-rho^dag|_max={self.hermiticity_deviation:.3e} "
            f"(tol {self.tol_hermiticity:.1e}), |tr-1|={self.trace_deviation:.3e} "
            f"(tol {self.tol_trace:.1e}), min_eig={self.min_eigenvalue:.3e} "
            f"(tol -{self.tol_positivity:.1e})"
        )


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the left factor varying slowest."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"left operand is not square: shape {a.shape}")
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError(f"right operand is not square: shape {b.shape}")
    return np.kron(a, b)


def hermitian_eigensystem(m: np.ndarray, tol: float = 1e-8):
    """Eigenvalues/vectors via the dedicated Hermitian solver, with a guard."""
    m = np.asarray(m)
    dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian within {tol:.1e} (deviation {dev:.3e})")
    return np.linalg.eigh(m)


def trace_norm(m: np.ndarray, herm_tol: float = 1e-8) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    w, _ = hermitian_eigensystem(m, tol=herm_tol)
    return float(np.sum(np.abs(w)))


def _axes_of(layout: BasisLayout, labels) -> list[int]:
    return [layout.index_of(lab) for lab in labels]


def partial_transpose(rho: QuantumState, part: Bipartition) -> np.ndarray:
    """Transpose the indices of the ``side_a`` factors of the layout.

    ``side_a`` and ``side_b`` must together cover all layout factors; only
    genuine layout factors can be transposed this way (register-encoded site
    splits go through the entanglement module instead).
    """
    lay = rho.layout
    covered = part.side_a | part.side_b
    if covered != set(lay.labels):
        missing = set(lay.labels) - covered
        extra = covered - set(lay.labels)
        raise LayoutError(f"bipartition does not match layout factors "
                          f"(missing {sorted(missing)}, unknown {sorted(extra)})")
    dims = lay.dims
    n = len(dims)
    t = rho.entries.reshape(dims + dims)
    perm = list(range(2 * n))
    for ax in _axes_of(lay, part.side_a):
        perm[ax], perm[n + ax] = perm[n + ax], perm[ax]
    d = lay.total_dim
    return t.transpose(perm).reshape(d, d)


def partial_trace(rho: QuantumState, keep) -> QuantumState:
    """Reduced state on the kept factors (order preserved from the layout)."""
    lay = rho.layout
    keep = set(keep)
    if not keep:
        raise ValueError("keep set must not be empty")
    for lab in keep:
        lay.index_of(lab)  # raises LayoutError on unknown labels
    keep_axes = [k for k, (lab, _) in enumerate(lay.factors) if lab in keep]
    drop_axes = [k for k in range(len(lay.factors)) if k not in keep_axes]
    dims = lay.dims
    n = len(dims)
    t = rho.entries.reshape(dims + dims)
    for ax in sorted(drop_axes, reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + (t.ndim // 2))
    new_factors = tuple(lay.factors[k] for k in keep_axes)
    new_enc = {lab: enc for lab, enc in lay.encodings.items() if lab in keep}
    new_lay = BasisLayout(new_factors, new_enc)
    d = new_lay.total_dim
    return QuantumState(new_lay, t.reshape(d, d))


def assert_valid_state(rho: QuantumState,
                       tol_hermiticity: float = HERMITICITY_TOL,
                       tol_trace: float = TRACE_TOL,
                       tol_positivity: float = POSITIVITY_TOL) -> ValidityReport:
    """Diagnostic check of Hermiticity, unit trace, and positivity.

    Never raises; entanglement values are only meaningful for states that
    pass, so callers decide how to act on a failing report.
    """
    m = rho.entries
    herm = float(np.max(np.abs(m - m.conj().T)))
    tr = float(abs(np.trace(m) - 1.0))
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return ValidityReport(herm, tr, float(w[0]), tol_hermiticity, tol_trace, tol_positivity)
