"""Packed, array-only representation of a master-equation generator.

The right-hand side evaluated by the kernels is

    d(rho)/dt = -i [H0 + z(t) B + conj(z(t)) B^dag, rho]
                + mask * rho                 (element-wise)
                + sum_k J_k rho J_k^dag      (sparse scatter)

where every Lindblad channel ``gamma * (2 L rho L^dag - {L^dag L, rho})`` has
been split into a scaled jump ``J = sqrt(2 gamma) L`` and its anticommutator
contribution ``-(n_a + n_b)/2`` folded into ``mask`` (all jumps produced by
the model builders have diagonal ``J^dag J``).  Jumps that are themselves real
and diagonal (pure dephasing) contribute only to ``mask``.  ``z(t)`` is a
Gaussian drive envelope with an optional carrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class DriveParams:
    center: float = 0.0      # ps
    sigma: float = 1.0       # ps
    omega: float = 0.0       # carrier, rad/ps (0 once absorbed by a rotating frame)

    def coefficient(self, t: float) -> complex:
        env = np.exp(-0.5 * ((t - self.center) / self.sigma) ** 2)
        if self.omega == 0.0:
            return complex(env)
        return env * np.exp(-1j * self.omega * t)


@dataclass
class KernelModel:
    """Everything the stepping kernels need, as flat arrays."""

    dim: int
    h_indptr: np.ndarray
    h_indices: np.ndarray
    h_data: np.ndarray
    mask: np.ndarray                      # (dim, dim) float64
    j_offsets: np.ndarray                 # (n_jumps + 1,) int64
    j_rows: np.ndarray
    j_cols: np.ndarray
    j_data: np.ndarray                    # scaled by sqrt(2 gamma)
    p3_weights: np.ndarray                # diagonal observable for the sink quadrature
    has_drive: bool = False
    b_indptr: np.ndarray = field(default_factory=lambda: np.zeros(1, np.int64))
    b_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    b_data: np.ndarray = field(default_factory=lambda: np.zeros(0, np.complex128))
    drive: DriveParams = field(default_factory=DriveParams)


def _to_csr_arrays(matrix: sp.spmatrix | np.ndarray, dim: int):
    m = sp.csr_matrix(matrix, shape=(dim, dim))
    m.sum_duplicates()
    m.eliminate_zeros()
    return (m.indptr.astype(np.int64), m.indices.astype(np.int64),
            m.data.astype(np.complex128))


def pack_model(dim: int,
               h_static,
               diagonal_jumps: list[tuple[np.ndarray, float]],
               scatter_jumps: list[tuple[sp.spmatrix, float]],
               p3_weights: np.ndarray | None = None,
               drive_matrix=None,
               drive: DriveParams | None = None) -> KernelModel:
    """Assemble a :class:`KernelModel`.

    ``diagonal_jumps`` are (real diagonal vector, rate) channels; they fold
    entirely into the element-wise mask as ``-rate * (l_a - l_b)^2``.
    ``scatter_jumps`` are (sparse L, rate) channels with diagonal ``L^dag L``;
    their sandwich part is kept as a scaled jump and the anticommutator goes
    into the mask.
    """
    h_indptr, h_indices, h_data = _to_csr_arrays(h_static, dim)

    mask = np.zeros((dim, dim), dtype=np.float64)
    for diag, rate in diagonal_jumps:
        l = np.asarray(diag, dtype=np.float64)
        mask -= rate * (l[:, None] - l[None, :]) ** 2

    offsets = [0]
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for op, rate in scatter_jumps:
        c = sp.coo_matrix(op, shape=(dim, dim))
        c.sum_duplicates()
        c.eliminate_zeros()
        ldl = (c.conj().T @ c).tocoo()
        off_diag = np.max(np.abs(ldl.data[ldl.row != ldl.col])) if np.any(ldl.row != ldl.col) else 0.0
        if off_diag > 1e-13:
            raise ValueError("scatter jump has non-diagonal L^dag L; cannot fold into mask")
        n = np.zeros(dim, dtype=np.float64)
        diag_sel = ldl.row == ldl.col
        n[ldl.row[diag_sel]] = ldl.data[diag_sel].real
        mask -= rate * (n[:, None] + n[None, :])
        scale = np.sqrt(2.0 * rate)
        rows.append(c.row.astype(np.int64))
        cols.append(c.col.astype(np.int64))
        vals.append(c.data.astype(np.complex128) * scale)
        offsets.append(offsets[-1] + c.nnz)

    model = KernelModel(
        dim=dim,
        h_indptr=h_indptr, h_indices=h_indices, h_data=h_data,
        mask=mask,
        j_offsets=np.asarray(offsets, dtype=np.int64),
        j_rows=np.concatenate(rows) if rows else np.zeros(0, np.int64),
        j_cols=np.concatenate(cols) if cols else np.zeros(0, np.int64),
        j_data=np.concatenate(vals) if vals else np.zeros(0, np.complex128),
        p3_weights=(np.zeros(dim) if p3_weights is None
                    else np.asarray(p3_weights, dtype=np.float64)),
    )
    if drive_matrix is not None:
        model.has_drive = True
        model.b_indptr, model.b_indices, model.b_data = _to_csr_arrays(drive_matrix, dim)
        model.drive = drive or DriveParams()
    return model
