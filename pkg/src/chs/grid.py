"""Neumann spectral toolbox on the interval G = (0, pi).

Grid layout: N interior nodes plus the two endpoint slots,

    x_j = j*h,  j = 0..N+1,  h = pi/(N+1).

A grid field is a plain float array of length N+2; slots 0 and N+1 carry the
boundary trace.  All integrals over G use the composite trapezoid rule.  On
this grid the sampled cosines cos(k*x_j) are *exact* eigenvectors of the
second-difference Neumann Laplacian (discrete eigenvalue 4 sin^2(k h / 2)/h^2)
and exactly trapezoid-orthogonal for j + k <= 2(N+1) - 1, so the discrete
theory mirrors the continuous one: eigenvalue k^2, complete cosine basis,
mean-zero inverse of A = -Laplace.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = [
    "DomainSpec",
    "SpectralBasis",
    "NeumannOperator",
    "eigenvalue",
    "r_eps",
]


@dataclass(frozen=True)
class DomainSpec:
    """Spatial discretization of G = (0, pi)^n.

    Only n = 1 is simulated; n in {2, 3} is accepted for the dimension
    formulas that carry an explicit n (see :mod:`chs.lyapunov`).
    """

    N: int
    n: int = 1
    length: float = float(np.pi)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        if self.N < 8:
            raise ValueError(f"need at least 8 interior grid points, got {self.N}")
        if not np.isclose(self.length, np.pi):
            raise ValueError("only the interval (0, pi) is implemented")

    @property
    def dx(self) -> float:
        return self.length / (self.N + 1)

    @property
    def size(self) -> int:
        """Number of grid slots: interior nodes plus two boundary slots."""
        return self.N + 2

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.N + 2)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights; endpoint slots carry half weight."""
        w = np.full(self.N + 2, self.dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def eigenvalue(k: int) -> float:
    """k-th Neumann eigenvalue of A = -Laplace on (0, pi): lambda_k = k^2."""
    if k < 0:
        raise ValueError("mode index must be nonnegative")
    return float(k * k)


def r_eps(k: int, eps: float) -> float:
    """Eigenvalue r_k = lambda_k^2 / (1 + eps*lambda_k) of the viscous operator.

    A_eps = (eps + A^{-1})^{-1} A lives on the mean-zero subspace, so k = 0
    is rejected.
    """
    if k < 1:
        raise ValueError("A_eps is defined on the mean-zero subspace; need k >= 1")
    lam = eigenvalue(k)
    return lam * lam / (1.0 + eps * lam)


def _check_field(u: np.ndarray, domain: DomainSpec) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (domain.size,):
        raise ValueError(f"field must have length {domain.size}, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite entries")
    return u


class SpectralBasis:
    """Sampled Neumann eigenpairs (lambda_k, e_k), k = 0..K.

    e_0 is the constant mode; for k >= 1 the samples of cos(k x) are rescaled
    so the *discrete* trapezoid L2 norm is exactly one, and the residual
    quadrature mean is projected out, making every noise mode exactly
    mean-free on the grid.
    """

    def __init__(self, domain: DomainSpec, K: int):
        if K < 1:
            raise ValueError("need at least one nonconstant mode")
        if K > domain.N:
            raise ValueError(
                f"truncation K={K} aliases on an N={domain.N} grid (need K <= N)"
            )
        self.domain = domain
        self.K = K
        x = domain.x
        w = domain.quad_weights
        size = domain.size

        e = np.empty((K + 1, size))
        de = np.empty((K + 1, size))
        e[0] = 1.0 / np.sqrt(np.pi)
        de[0] = 0.0
        for k in range(1, K + 1):
            ek = np.cos(k * x)
            ek -= (w @ ek) / np.pi        # kill residual quadrature mean
            ek /= np.sqrt(w @ (ek * ek))  # unit discrete L2 norm
            e[k] = ek
            # analytic gradient of the sampled mode, same scale factor
            scale = ek[0]                 # = normalization of cos(k x) at x=0
            de[k] = -k * scale * np.sin(k * x)
        self.modes = e
        self.dmodes = de
        self.lam = np.array([eigenvalue(k) for k in range(K + 1)])
        # exact eigenvalues of the discrete Neumann Laplacian for these samples
        h = domain.dx
        ks = np.arange(K + 1)
        self.lam_discrete = 4.0 * np.sin(ks * h / 2.0) ** 2 / h**2

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Trapezoid cosine coefficients c_k = (u, e_k), k = 0..K."""
        u = _check_field(u, self.domain)
        return self.modes @ (self.domain.quad_weights * u)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs) @ self.modes

    def sobolev_seminorm(self, u: np.ndarray, s: float) -> float:
        """|u|_s = (sum_{k>=1} lambda_k^s c_k^2)^{1/2} in the truncated basis."""
        if not -2.0 <= s <= 2.0:
            raise ValueError("seminorm order s must lie in [-2, 2]")
        c = self.coefficients(u)[1:]
        return float(np.sqrt(np.sum(self.lam[1:] ** s * c * c)))


class NeumannOperator:
    """Second-difference A = -Laplace with reflection Neumann closure.

    The matrix is symmetric in the trapezoid inner product, positive
    semidefinite, and its kernel is exactly the constants.  The mean-zero
    inverse is realized through one LU factorization of the bordered system

        [ A   1 ] [y ]   [w]
        [ m^T 0 ] [nu] = [0],

    whose solution satisfies A y = w - m(w) and m(y) = 0; constants are
    annihilated, so the map is total on grid fields.
    """

    def __init__(self, domain: DomainSpec):
        self.domain = domain
        n = domain.size
        h = domain.dx
        A = np.zeros((n, n))
        A[0, 0], A[0, 1] = 2.0, -2.0
        A[-1, -1], A[-1, -2] = 2.0, -2.0
        for j in range(1, n - 1):
            A[j, j - 1 : j + 2] = (-1.0, 2.0, -1.0)
        A /= h * h
        self.matrix = A

        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = A
        bordered[:n, n] = 1.0
        bordered[n, :n] = domain.quad_weights / np.pi
        try:
            self._lu = lu_factor(bordered)
        except Exception as exc:  # pragma: no cover - guarded by DomainSpec
            raise RuntimeError(f"singular Neumann assembly for {domain}") from exc
        self._ainv = None

    def mean(self, u: np.ndarray) -> float:
        """Trapezoid approximation of m(u) = (1/|G|) int_G u."""
        u = _check_field(u, self.domain)
        return float(self.domain.quad_weights @ u) / np.pi

    def inner(self, u: np.ndarray, w: np.ndarray) -> float:
        """Trapezoid L2(G) inner product."""
        return float(self.domain.quad_weights @ (np.asarray(u) * np.asarray(w)))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def apply_A(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ _check_field(w, self.domain)

    def apply_Ainv(self, w: np.ndarray) -> np.ndarray:
        """Unique mean-zero y with A y = w - m(w)."""
        w = _check_field(w, self.domain)
        rhs = np.append(w, 0.0)
        return lu_solve(self._lu, rhs)[:-1]

    def ainv_matrix(self) -> np.ndarray:
        """Dense matrix of apply_Ainv (deflection built in); cached."""
        if self._ainv is None:
            n = self.domain.size
            rhs = np.zeros((n + 1, n))
            rhs[:n] = np.eye(n)
            self._ainv = lu_solve(self._lu, rhs)[:n]
        return self._ainv

    def dirichlet_form(self, u: np.ndarray) -> float:
        """(A u, u) = int |grad u|^2 under midpoint-gradient quadrature."""
        u = _check_field(u, self.domain)
        d = np.diff(u)
        return float(d @ d) / self.domain.dx
