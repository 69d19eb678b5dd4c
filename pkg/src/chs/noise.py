"""Two-sided Q-Wiener paths, the shift theta_t, and stochastic convolutions.

The interior noise W1 is expanded in the Neumann cosine basis with trace-class
weights alpha_k = k^(-gamma), gamma > 1; the boundary noise W2 drives the two
endpoint values independently.  Per mode the convolution is an exact
Ornstein-Uhlenbeck recursion

    z <- exp(-r h) z + scale * sqrt((1 - exp(-2 r h)) / (2 r h)) * dbeta,

i.e. the step's Brownian increment rescaled to the exact transition variance,
so flow and convolution are driven by one path and the construction commutes
with theta_t bitwise: advancing along shift(path, t) reproduces the original
states at shifted times.

Every stream is derived from the master seed by a documented counter-based
split: Philox keyed by SeedSequence([seed, stream_domain, stream_index]).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .grid import SpectralBasis, r_eps

__all__ = [
    "CovarianceSpec",
    "NoisePath",
    "ConvCoeffs",
    "ConvolutionState",
    "sample_path",
    "shift",
    "conv_step",
    "stationary_init",
    "flow_convolution_at",
    "increment_field",
    "holder_exponent",
    "dump_path",
    "load_path",
]

# stream-domain tags for the counter-based seed split
_DOM_INTERIOR = 1
_DOM_BOUNDARY = 2
_DOM_CONVINIT = 3


def _stream(seed: int, domain: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=[int(seed), int(domain), int(index)])
    return np.random.Generator(np.random.Philox(seed=ss))


@dataclass(frozen=True)
class CovarianceSpec:
    """Diagonal covariance of (W1, W2): alpha_k = k^(-gamma), alpha2 per endpoint."""

    K: int = 64
    gamma: float = 2.0
    alpha2: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one interior mode")
        if self.gamma <= 1.0:
            raise ValueError(
                "gamma <= 1 is not trace class (cylindrical noise is excluded)"
            )
        if any(a < 0 for a in self.alpha2):
            raise ValueError("boundary weights must be nonnegative")

    @property
    def alpha1(self) -> np.ndarray:
        """Interior weights alpha_k for k = 1..K."""
        return np.arange(1, self.K + 1, dtype=float) ** (-self.gamma)

    @property
    def trace1(self) -> float:
        return float(np.sum(self.alpha1))


class NoisePath:
    """Discrete two-sided Wiener path on the grid t_m = m*dt.

    Increments are anchored to the sampled buffer; `origin` marks the absolute
    step index the current view calls time zero, so shifting is pure
    re-indexing of shared arrays.
    """

    def __init__(self, dt, m_lo, dW1, dW2, seed, cov, origin=0):
        self.dt = float(dt)
        self.m_lo = int(m_lo)
        self.dW1 = dW1
        self.dW2 = dW2
        self.seed = int(seed)
        self.cov = cov
        self.origin = int(origin)

    @property
    def n_steps(self) -> int:
        return self.dW1.shape[0]

    @property
    def m_min(self) -> int:
        """First grid index of the view (time m_min*dt)."""
        return self.m_lo - self.origin

    @property
    def m_max(self) -> int:
        return self.m_lo + self.n_steps - self.origin

    def index_of(self, t: float) -> int:
        m = t / self.dt
        mi = int(round(m))
        if abs(m - mi) > 1e-9:
            raise ValueError(f"time {t} is not on the path grid (dt={self.dt})")
        return mi

    def _row(self, m: int) -> int:
        row = m + self.origin - self.m_lo
        if not 0 <= row < self.n_steps:
            raise ValueError(
                f"step {m} outside stored horizon [{self.m_min}, {self.m_max})"
            )
        return row

    def inc1(self, m: int) -> np.ndarray:
        """Interior increments dbeta_k over [m*dt, (m+1)*dt] in view time."""
        return self.dW1[self._row(m)]

    def inc2(self, m: int) -> np.ndarray:
        return self.dW2[self._row(m)]

    def rows(self, m_from: int, m_to: int) -> tuple[np.ndarray, np.ndarray]:
        """Increment blocks for the view steps m_from..m_to-1 (no copy)."""
        a = self._row(m_from)
        if m_to < m_from:
            raise ValueError("empty or reversed step range")
        b = a + (m_to - m_from)
        if b > self.n_steps:
            raise ValueError("step range exceeds stored horizon")
        return self.dW1[a:b], self.dW2[a:b]

    def values2(self, component: int, m_until: int) -> np.ndarray:
        """Boundary path values at view times 0..m_until (value at 0 is zero)."""
        inc = self.dW2[self._row(0) : self._row(0) + m_until, component]
        return np.concatenate(([0.0], np.cumsum(inc)))


def sample_path(cov: CovarianceSpec, horizon, dt: float, seed: int) -> NoisePath:
    """Sample increments for all modes over [t_min, t_max] with step dt.

    Modes use mutually independent Philox streams derived from the master
    seed, so the path is reproducible and insensitive to K-extension order.
    """
    t_min, t_max = float(horizon[0]), float(horizon[1])
    if not (np.isfinite(t_min) and np.isfinite(t_max)):
        raise ValueError("horizon must be finite")
    if not (t_min <= 0.0 <= t_max):
        raise ValueError("horizon must contain time zero")
    if dt <= 0:
        raise ValueError("dt must be positive")
    m_lo = int(np.floor(t_min / dt + 1e-9))
    m_hi = int(np.ceil(t_max / dt - 1e-9))
    n = max(m_hi - m_lo, 1)
    root = np.sqrt(dt)
    dW1 = np.empty((n, cov.K))
    for k in range(1, cov.K + 1):
        dW1[:, k - 1] = _stream(seed, _DOM_INTERIOR, k).standard_normal(n) * root
    dW2 = np.empty((n, 2))
    for i in range(2):
        dW2[:, i] = _stream(seed, _DOM_BOUNDARY, i).standard_normal(n) * root
    return NoisePath(dt, m_lo, dW1, dW2, seed, cov)


def shift(path: NoisePath, t: float) -> NoisePath:
    """theta_t: re-index so view time 0 sits at old time t (increments shared)."""
    j = path.index_of(t)
    new_origin = path.origin + j
    if not path.m_lo <= new_origin <= path.m_lo + path.n_steps:
        raise ValueError(f"shift by {t} leaves the stored horizon")
    return NoisePath(
        path.dt, path.m_lo, path.dW1, path.dW2, path.seed, path.cov, new_origin
    )


class ConvCoeffs:
    """Per-mode OU rates and noise scales for (z1, z2).

    z1 mode k: rate r_k = lambda_k^2/(1+eps*lambda_k), scale
    sigma1*sqrt(alpha_k)/(1+eps*lambda_k).  z2 endpoint i (with the boundary
    Laplacian identically zero in n=1): rate eps0*lam, scale
    eps0*sigma2*sqrt(alpha2_i); see the eps0-scaled boundary equation.
    """

    def __init__(self, cov: CovarianceSpec, eps, eps0, lam, sigma1, sigma2):
        k = np.arange(1, cov.K + 1, dtype=float)
        lam_k = k * k
        self.cov = cov
        self.eps, self.eps0, self.lam = float(eps), float(eps0), float(lam)
        self.sigma1, self.sigma2 = float(sigma1), float(sigma2)
        self.rates1 = np.array([r_eps(int(i), eps) for i in range(1, cov.K + 1)])
        self.scales1 = sigma1 * np.sqrt(cov.alpha1) / (1.0 + eps * lam_k)
        self.rates2 = np.full(2, eps0 * lam)
        self.scales2 = eps0 * sigma2 * np.sqrt(np.asarray(cov.alpha2, dtype=float))

    def stationary_var1(self) -> np.ndarray:
        return self.scales1**2 / (2.0 * self.rates1)

    def stationary_var2(self) -> np.ndarray:
        return self.scales2**2 / (2.0 * self.rates2)

    def decay_and_kick(self, h: float) -> tuple[np.ndarray, ...]:
        """Exact one-step transition: decay factors and increment multipliers.

        The Gaussian kick is scale*sqrt((1-exp(-2 r h))/(2 r)) * xi with
        xi = dbeta/sqrt(h), hence the per-increment multiplier below.
        """
        if h < 0:
            raise ValueError("step must be nonnegative")
        if h == 0.0:
            z = np.zeros_like
            return np.ones_like(self.rates1), z(self.rates1), np.ones(2), np.zeros(2)
        d1 = np.exp(-self.rates1 * h)
        q1 = self.scales1 * np.sqrt(-np.expm1(-2.0 * self.rates1 * h) / (2.0 * self.rates1 * h))
        d2 = np.exp(-self.rates2 * h)
        q2 = self.scales2 * np.sqrt(-np.expm1(-2.0 * self.rates2 * h) / (2.0 * self.rates2 * h))
        return d1, q1, d2, q2


@dataclass
class ConvolutionState:
    """Per-mode OU values realizing (z1, z2) at one time instant."""

    z1: np.ndarray
    z2: np.ndarray
    coeffs: ConvCoeffs

    def copy(self) -> "ConvolutionState":
        return ConvolutionState(self.z1.copy(), self.z2.copy(), self.coeffs)

    def field1(self, basis: SpectralBasis) -> np.ndarray:
        """Grid realization of z1 (mean-free by construction of the basis)."""
        return self.z1 @ basis.modes[1:]

    def grad_field1(self, basis: SpectralBasis) -> np.ndarray:
        return self.z1 @ basis.dmodes[1:]


def conv_step(z: ConvolutionState, m: int, path: NoisePath) -> ConvolutionState:
    """One exact OU transition over [m, m+1] driven by the path's increments."""
    c = z.coeffs
    d1, q1, d2, q2 = c.decay_and_kick(path.dt)
    z1 = d1 * z.z1 + q1 * path.inc1(m)
    z2 = d2 * z.z2 + q2 * path.inc2(m)
    return ConvolutionState(z1, z2, c)


def stationary_init(coeffs: ConvCoeffs, seed: int) -> ConvolutionState:
    """Draw every mode from its exact stationary Gaussian."""
    if np.any(coeffs.rates1 <= 0) or np.any(coeffs.rates2 <= 0):
        raise ValueError("stationary initialization needs strictly positive rates")
    std1 = np.sqrt(coeffs.stationary_var1())
    std2 = np.sqrt(coeffs.stationary_var2())
    K = coeffs.cov.K
    z1 = np.empty(K)
    for k in range(1, K + 1):
        z1[k - 1] = std1[k - 1] * _stream(seed, _DOM_CONVINIT, k).standard_normal()
    z2 = np.array(
        [std2[i] * _stream(seed, _DOM_CONVINIT, K + 1 + i).standard_normal() for i in range(2)]
    )
    return ConvolutionState(z1, z2, coeffs)


def flow_convolution_at(
    path: NoisePath, coeffs: ConvCoeffs, m: int, sweeper=None
) -> ConvolutionState:
    """Pathwise-stationary convolution state at view step m.

    Drawn from the stationary law at the buffer's left edge (seeded by the
    path's master seed, standing in for the t -> -infinity history) and
    advanced through the stored increments; a deterministic function of the
    path, identical across shifted views, which is what makes the discrete
    cocycle identities exact.  `sweeper` may supply a backend with a
    `conv_sweep` method implementing the same per-step recursion.
    """
    z = stationary_init(coeffs, path.seed)
    first = path.m_min
    if m < first:
        raise ValueError("requested time precedes the stored horizon")
    rows1, rows2 = path.rows(first, m)
    z1, z2 = z.z1.copy(), z.z2.copy()
    if sweeper is not None:
        sweeper.conv_sweep(z1, z2, rows1, rows2)
    else:
        d1, q1, d2, q2 = coeffs.decay_and_kick(path.dt)
        for r in range(rows1.shape[0]):
            z1[:] = d1 * z1 + q1 * rows1[r]
            z2[:] = d2 * z2 + q2 * rows2[r]
    return ConvolutionState(z1, z2, coeffs)


def increment_field(basis: SpectralBasis, cov: CovarianceSpec, path: NoisePath, m: int) -> np.ndarray:
    """Grid realization of the W1 increment over [m, m+1].

    Each sampled mode is projected to exact quadrature mean zero, so the
    realization preserves the discrete spatial average (the conserved
    quantity of the flow).
    """
    w = np.sqrt(cov.alpha1) * path.inc1(m)
    return w @ basis.modes[1 : cov.K + 1]


def holder_exponent(series: np.ndarray, lags=None) -> float:
    """Empirical Hoelder exponent from the second-order structure function.

    S2(tau) = mean |X(t+tau) - X(t)|^2 is fit by a log-log least-squares line
    over lags spanning at least one decade; the estimate is half the slope,
    capped at 1 (a smooth series saturates the cap).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional time series")
    if x.size < 1000:
        raise ValueError("need at least 1000 samples")
    if lags is None:
        lags = np.unique(np.round(np.geomspace(2, 20, 9)).astype(int))
    lags = np.asarray(lags, dtype=int)
    if lags.min() < 1 or lags.max() >= x.size:
        raise ValueError("lags out of range")
    if lags.max() < 10 * lags.min():
        raise ValueError("lags must span at least one decade")
    if np.ptp(x) == 0.0:
        raise ValueError("constant series has no scaling exponent")
    s2 = np.array([np.mean((x[lag:] - x[:-lag]) ** 2) for lag in lags])
    if np.any(s2 <= 0.0):
        raise ValueError("degenerate structure function")
    slope = np.polyfit(np.log(lags.astype(float)), np.log(s2), 1)[0]
    return float(min(max(slope / 2.0, 0.0), 1.0))


_MAGIC = b"CHSPATH1"


def dump_path(path: NoisePath, fname) -> None:
    """Binary dump: dt/horizon/K/seed header, then row-major LE increments."""
    header = struct.pack(
        "<8sdqqqIQ",
        _MAGIC,
        path.dt,
        path.m_lo,
        path.n_steps,
        path.origin,
        path.cov.K,
        path.seed,
    ) + struct.pack("<dd", path.cov.gamma, 0.0) + struct.pack(
        "<dd", *path.cov.alpha2
    )
    with open(fname, "wb") as fh:
        fh.write(header)
        fh.write(path.dW1.astype("<f8").tobytes(order="C"))
        fh.write(path.dW2.astype("<f8").tobytes(order="C"))


def load_path(fname) -> NoisePath:
    with open(fname, "rb") as fh:
        head = fh.read(struct.calcsize("<8sdqqqIQ"))
        magic, dt, m_lo, n, origin, K, seed = struct.unpack("<8sdqqqIQ", head)
        if magic != _MAGIC:
            raise ValueError("not a chs path dump")
        gamma, _ = struct.unpack("<dd", fh.read(16))
        alpha2 = struct.unpack("<dd", fh.read(16))
        dW1 = np.frombuffer(fh.read(8 * n * K), dtype="<f8").reshape(n, K).copy()
        dW2 = np.frombuffer(fh.read(8 * n * 2), dtype="<f8").reshape(n, 2).copy()
    cov = CovarianceSpec(K=K, gamma=gamma, alpha2=alpha2)
    return NoisePath(dt, m_lo, dW1, dW2, seed, cov, origin)
