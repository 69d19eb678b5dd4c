"""Pure-numpy stepping kernels (fallback backend).

Semantics contract shared with the compiled backend:

* one theta-weighted implicit step of the transformed pair (u, v) with the
  polynomial term explicit, the exact OU convolution advanced first with the
  same path increments, the boundary coupling and the mass shell restored
  exactly after every step;
* tangent columns advanced with the same implicit matrix and the explicit
  term -bar(f'(phi) Phi), coupling Phi|_Gamma = Psi;
* `flow_steps`/`coupled_steps` return the number of completed steps, or the
  negated step count at which the blow-up guard tripped.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve


def _polyval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    res = np.zeros_like(x)
    for c in coeffs:
        res = res * x + c
    return res


class ReferenceStepper:
    def __init__(self, plan):
        self.plan = plan
        self._lu = lu_factor(plan.T)

    def conv_sweep(self, z1, z2, rows1, rows2) -> None:
        """Advance the OU states through all increment rows, in place."""
        p = self.plan
        for r in range(rows1.shape[0]):
            z1[:] = p.d1 * z1 + p.q1 * rows1[r]
            z2[:] = p.d2 * z2 + p.q2 * rows2[r]

    def flow_steps(self, u, v, z1, z2, z1f, c, rows1, rows2, n: int) -> int:
        return self._advance(u, v, z1, z2, z1f, c, rows1, rows2, n, None, None)

    def coupled_steps(self, u, v, z1, z2, z1f, c, rows1, rows2, P, Q, n: int) -> int:
        return self._advance(u, v, z1, z2, z1f, c, rows1, rows2, n, P, Q)

    def _advance(self, u, v, z1, z2, z1f, c, rows1, rows2, n, P, Q):
        p = self.plan
        N = p.N
        dtth = p.dt * p.theta
        for step in range(n):
            phi = u + z1f
            if P is not None:
                fp = _polyval(p.fpc, phi)
                g = fp[:, None] * P
                gmean = (p.wq @ g) * p.invpi
                lapP = (P[:-2] - 2.0 * P[1:-1] + P[2:]) * p.invh2
                dnu0P = (3.0 * P[0] - 4.0 * P[1] + P[2]) * p.inv2h
                dnupP = (3.0 * P[-1] - 4.0 * P[-2] + P[-3]) * p.inv2h
                mcP = (dnu0P + dnupP) * p.invpi
                rhs_t = np.empty((N + 3, P.shape[1]))
                rhs_t[:N] = p.dt * (lapP - mcP[None, :] - (g[1:-1] - gmean[None, :]))
                rhs_t[N] = p.dt * p.eps0 * (-p.lam * Q[0] - dnu0P)
                rhs_t[N + 1] = p.dt * p.eps0 * (-p.lam * Q[1] - dnupP)
                rhs_t[N + 2] = -(p.wq @ P) * p.invpi

            f = _polyval(p.fc, phi)
            fmean = (p.wq @ f) * p.invpi
            lap = (u[:-2] - 2.0 * u[1:-1] + u[2:]) * p.invh2
            dnu0 = (3.0 * u[0] - 4.0 * u[1] + u[2]) * p.inv2h
            dnup = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) * p.inv2h
            mc = (dnu0 + dnup) * p.invpi

            z1[:] = p.d1 * z1 + p.q1 * rows1[step]
            z2[:] = p.d2 * z2 + p.q2 * rows2[step]
            z1f_new = z1 @ p.E1
            c0n = z2[0] - z1f_new[0]
            cpn = z2[1] - z1f_new[-1]
            dc0 = c0n - c[0]
            dcp = cpn - c[1]

            rhs = np.empty(N + 3)
            rhs[:N] = p.dt * (lap - mc - (f[1:-1] - fmean))
            rhs[:N] -= p.Gcol0 * dc0 + p.Gcolpi * dcp
            rhs[0] += dtth * dc0 * p.invh2
            rhs[N - 1] += dtth * dcp * p.invh2
            rhs[:N] -= dtth * (3.0 * (dc0 + dcp) * p.inv2h) * p.invpi
            rhs[N] = p.dt * p.eps0 * (-p.lam * v[0] - dnu0) - dtth * p.eps0 * 3.0 * dc0 * p.inv2h
            rhs[N + 1] = p.dt * p.eps0 * (-p.lam * v[1] - dnup) - dtth * p.eps0 * 3.0 * dcp * p.inv2h
            rhs[N + 2] = p.beta - (p.wq @ u) * p.invpi - (p.wq[0] * dc0 + p.wq[-1] * dcp) * p.invpi

            y = lu_solve(self._lu, rhs)
            u[1:-1] += y[:N]
            v[0] += y[N]
            v[1] += y[N + 1]
            u[0] = v[0] + c0n
            u[-1] = v[1] + cpn
            c[0] = c0n
            c[1] = cpn
            z1f[:] = z1f_new

            if P is not None:
                yt = lu_solve(self._lu, rhs_t)
                P[1:-1] += yt[:N]
                Q[0] += yt[N]
                Q[1] += yt[N + 1]
                P[0] = Q[0]
                P[-1] = Q[1]

            if not abs(u[1:-1]).max() < p.blowup or not abs(v).max() < p.blowup:
                return -(step + 1)
        return n
