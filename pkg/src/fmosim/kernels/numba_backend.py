"""Jitted stepping kernels (the default backend).

The Hamiltonian commutator is applied from COO triplets with row-streaming
loops, the combined dephasing/anticommutator mask element-wise, and jump
sandwiches as nnz^2 scatters; one fused pass per RK stage.  All kernels run
nogil so parameter-sweep points can step concurrently.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .common import KernelModel

NAME = "numba"


@njit(cache=True, nogil=True, fastmath=False)
def _add_commutator(rows, cols, vals, z, rho, out):
    """out += -i * [z * M, rho] for M given as COO triplets."""
    d = rho.shape[0]
    nnz = rows.shape[0]
    for p in range(nnz):
        a = rows[p]
        c = cols[p]
        v = -1j * z * vals[p]
        for b in range(d):
            out[a, b] += v * rho[c, b]
    for a in range(d):
        for p in range(nnz):
            v = 1j * z * vals[p]
            out[a, cols[p]] += v * rho[a, rows[p]]


@njit(cache=True, nogil=True, fastmath=False)
def _rhs_core(hr, hc, hv,
              has_drive, br, bc, bv, z,
              mask, j_off, j_rows, j_cols, j_vals,
              stack, out):
    nb = stack.shape[0]
    d = stack.shape[1]
    for blk in range(nb):
        rho = stack[blk]
        o = out[blk]
        for a in range(d):
            for b in range(d):
                o[a, b] = mask[a, b] * rho[a, b]
        _add_commutator(hr, hc, hv, 1.0 + 0.0j, rho, o)
        if has_drive:
            _add_commutator(br, bc, bv, z, rho, o)
            # Hermitian conjugate of the drive term
            _add_commutator(bc, br, np.conj(bv), np.conj(z), rho, o)
        njump = j_off.shape[0] - 1
        for k in range(njump):
            lo = j_off[k]
            hi = j_off[k + 1]
            for p in range(lo, hi):
                rp = j_rows[p]
                cp = j_cols[p]
                vp = j_vals[p]
                for q in range(lo, hi):
                    o[rp, j_rows[q]] += vp * np.conj(j_vals[q]) * rho[cp, j_cols[q]]


@njit(cache=True, nogil=True, fastmath=False)
def _diag_obs(weights, stack):
    d = stack.shape[1]
    s = 0.0
    for a in range(d):
        s += weights[a] * stack[0, a, a].real
    return s


@njit(cache=True, nogil=True, fastmath=False)
def _drive_coef(t, center, sigma, omega):
    env = np.exp(-0.5 * ((t - center) / sigma) ** 2)
    if omega == 0.0:
        return env + 0.0j
    return env * np.exp(-1j * omega * t)


@njit(cache=True, nogil=True, fastmath=False)
def _shifted(out, base, alpha, k):
    nb, d, _ = base.shape
    for i in range(nb):
        for a in range(d):
            for b in range(d):
                out[i, a, b] = base[i, a, b] + alpha * k[i, a, b]


@njit(cache=True, nogil=True, fastmath=False)
def _combine(stack, dt, k1, k2, k3, k4):
    nb, d, _ = stack.shape
    c = dt / 6.0
    for i in range(nb):
        for a in range(d):
            for b in range(d):
                stack[i, a, b] += c * (k1[i, a, b] + 2.0 * k2[i, a, b]
                                       + 2.0 * k3[i, a, b] + k4[i, a, b])


@njit(cache=True, nogil=True, fastmath=False)
def _rk4_span(hr, hc, hv,
              has_drive, br, bc, bv, d_center, d_sigma, d_omega,
              mask, j_off, j_rows, j_cols, j_vals,
              p3w, track_p3, p3_trace,
              stack, t0, dt, n_steps):
    k1 = np.empty_like(stack)
    k2 = np.empty_like(stack)
    k3 = np.empty_like(stack)
    k4 = np.empty_like(stack)
    tmp = np.empty_like(stack)
    quad = 0.0
    track_quad = False
    for a in range(p3w.shape[0]):
        if p3w[a] != 0.0:
            track_quad = True
            break
    for n in range(n_steps):
        t = t0 + n * dt
        if track_p3:
            p3_trace[n] = _diag_obs(p3w, stack)
        f0 = _diag_obs(p3w, stack) if track_quad else 0.0
        z = _drive_coef(t, d_center, d_sigma, d_omega) if has_drive else 0.0j
        _rhs_core(hr, hc, hv, has_drive, br, bc, bv, z,
                  mask, j_off, j_rows, j_cols, j_vals, stack, k1)
        _shifted(tmp, stack, 0.5 * dt, k1)
        f1 = _diag_obs(p3w, tmp) if track_quad else 0.0
        z = _drive_coef(t + 0.5 * dt, d_center, d_sigma, d_omega) if has_drive else 0.0j
        _rhs_core(hr, hc, hv, has_drive, br, bc, bv, z,
                  mask, j_off, j_rows, j_cols, j_vals, tmp, k2)
        _shifted(tmp, stack, 0.5 * dt, k2)
        f2 = _diag_obs(p3w, tmp) if track_quad else 0.0
        _rhs_core(hr, hc, hv, has_drive, br, bc, bv, z,
                  mask, j_off, j_rows, j_cols, j_vals, tmp, k3)
        _shifted(tmp, stack, dt, k3)
        f3 = _diag_obs(p3w, tmp) if track_quad else 0.0
        z = _drive_coef(t + dt, d_center, d_sigma, d_omega) if has_drive else 0.0j
        _rhs_core(hr, hc, hv, has_drive, br, bc, bv, z,
                  mask, j_off, j_rows, j_cols, j_vals, tmp, k4)
        if track_quad:
            quad += dt / 6.0 * (f0 + 2.0 * f1 + 2.0 * f2 + f3)
        _combine(stack, dt, k1, k2, k3, k4)
    if track_p3:
        p3_trace[n_steps] = _diag_obs(p3w, stack)
    return quad


def _coo_from_csr(indptr, indices, data, dim):
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(dim, dtype=np.int64), counts)
    return rows, indices.astype(np.int64), data.astype(np.complex128)


class Stepper:
    def __init__(self, model: KernelModel):
        self.model = model
        d = model.dim
        self._hr, self._hc, self._hv = _coo_from_csr(model.h_indptr, model.h_indices,
                                                     model.h_data, d)
        if model.has_drive:
            self._br, self._bc, self._bv = _coo_from_csr(model.b_indptr, model.b_indices,
                                                         model.b_data, d)
        else:
            self._br = np.zeros(0, np.int64)
            self._bc = np.zeros(0, np.int64)
            self._bv = np.zeros(0, np.complex128)

    def rhs(self, t: float, stack: np.ndarray, out: np.ndarray) -> None:
        m = self.model
        z = m.drive.coefficient(t) if m.has_drive else 0.0j
        _rhs_core(self._hr, self._hc, self._hv,
                  m.has_drive, self._br, self._bc, self._bv, complex(z),
                  m.mask, m.j_offsets, m.j_rows, m.j_cols, m.j_data,
                  stack, out)

    def rk4_span(self, stack: np.ndarray, t0: float, dt: float, n_steps: int,
                 p3_trace: np.ndarray | None = None) -> float:
        m = self.model
        track = p3_trace is not None
        buf = p3_trace if track else np.zeros(1, np.float64)
        return _rk4_span(self._hr, self._hc, self._hv,
                         m.has_drive, self._br, self._bc, self._bv,
                         m.drive.center, m.drive.sigma, m.drive.omega,
                         m.mask, m.j_offsets, m.j_rows, m.j_cols, m.j_data,
                         m.p3_weights, track, buf,
                         stack, t0, dt, n_steps)


def make_stepper(model: KernelModel) -> Stepper:
    return Stepper(model)
