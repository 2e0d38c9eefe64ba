"""Vectorized numpy/scipy fallback for the stepping kernels.

Same contract as the numba backend, selected with FMOSIM_KERNELS=numpy.
Kept simple and allocation-light rather than fast; it is the reference the
jitted path is tested against.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .common import KernelModel

NAME = "numpy"


class Stepper:
    def __init__(self, model: KernelModel):
        self.model = model
        d = model.dim
        self._h = sp.csr_matrix((model.h_data, model.h_indices, model.h_indptr), shape=(d, d))
        self._hd = self._h.conj().T.tocsr()
        if model.has_drive:
            self._b = sp.csr_matrix((model.b_data, model.b_indices, model.b_indptr), shape=(d, d))
            self._bd = self._b.conj().T.tocsr()
        self._jumps = []
        off = model.j_offsets
        for k in range(len(off) - 1):
            lo, hi = off[k], off[k + 1]
            self._jumps.append((model.j_rows[lo:hi], model.j_cols[lo:hi], model.j_data[lo:hi]))

    def _h_at(self, t: float):
        if not self.model.has_drive:
            return self._h, self._hd
        z = self.model.drive.coefficient(t)
        h = self._h + z * self._b + np.conj(z) * self._bd
        return h, h.conj().T.tocsr()

    def rhs(self, t: float, stack: np.ndarray, out: np.ndarray) -> None:
        """out = generator applied to each block of stack, in place."""
        model = self.model
        h, hd = self._h_at(t)
        for b in range(stack.shape[0]):
            rho = stack[b]
            acc = h @ rho
            acc -= (hd @ rho.conj().T).conj().T   # rho @ H for Hermitian-structured H
            acc *= -1j
            acc += model.mask * rho
            for rows, cols, vals in self._jumps:
                # rows within one jump are unique, so ix_ accumulation is safe
                acc[np.ix_(rows, rows)] += (vals[:, None] * vals.conj()[None, :]) * rho[np.ix_(cols, cols)]
            out[b] = acc

    def rk4_span(self, stack: np.ndarray, t0: float, dt: float, n_steps: int,
                 p3_trace: np.ndarray | None = None) -> float:
        """Advance ``n_steps`` fixed RK4 steps in place.

        Returns the RK4-consistent quadrature of the p3_weights observable of
        block 0 over the span; optionally records that observable per step.
        """
        model = self.model
        w = model.p3_weights
        nb, d, _ = stack.shape
        k1 = np.empty_like(stack)
        k2 = np.empty_like(stack)
        k3 = np.empty_like(stack)
        k4 = np.empty_like(stack)
        tmp = np.empty_like(stack)
        quad = 0.0

        def obs(s):
            return float(np.real(np.sum(w * np.diagonal(s[0]))))

        for n in range(n_steps):
            t = t0 + n * dt
            if p3_trace is not None:
                p3_trace[n] = obs(stack)
            self.rhs(t, stack, k1)
            tmp[:] = stack + 0.5 * dt * k1
            f1 = obs(tmp) if w.any() else 0.0
            self.rhs(t + 0.5 * dt, tmp, k2)
            tmp[:] = stack + 0.5 * dt * k2
            f2 = obs(tmp) if w.any() else 0.0
            self.rhs(t + 0.5 * dt, tmp, k3)
            tmp[:] = stack + dt * k3
            f3 = obs(tmp) if w.any() else 0.0
            self.rhs(t + dt, tmp, k4)
            if w.any():
                quad += dt / 6.0 * (obs(stack) + 2.0 * f1 + 2.0 * f2 + f3)
            stack += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if p3_trace is not None and n_steps >= 0:
            p3_trace[n_steps] = obs(stack)
        return quad


def make_stepper(model: KernelModel) -> Stepper:
    return Stepper(model)
