"""Pathwise solver of the transformed stochastic Cahn-Hilliard system.

With z1/z2 the stationary convolutions, the transformed pair (u, v) obeys

    (eps + Ainv) du/dt = Lap u - <dnu u>_Gamma - bar f(u + z1)     in G,
    dv/dt             = eps0 * (-lam v - dnu u)                    on Gamma,
    u|_Gamma          = v + z2 - z1|_Gamma,

with the boundary intensity eps0 scaling the dynamic boundary condition.
One step of the solver treats every linear term (Laplacian, boundary
coupling, normal-derivative terms, the rank-one mean coupling) with a
theta-weighted implicit block sharing a single LU factorization per dt,
keeps the polynomial term explicit, and restores two structural invariants
exactly: the boundary coupling above and the conserved spatial mean of u,
enforced through a Lagrange-multiplier row of the implicit system (the
trapezoid mass functional sees the moving boundary trace at O(dx), so shell
preservation is a property of the scheme, not of the raw stencils).

The flow map S(t, s; omega) obtained by stepping is an exact discrete
cocycle: the convolution state at any start time is a deterministic function
of the path (see noise.flow_convolution_at), so composing flows over
adjacent windows reproduces the single-window result bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import _kernels
from .grid import DomainSpec, NeumannOperator, SpectralBasis
from .noise import (
    ConvCoeffs,
    ConvolutionState,
    CovarianceSpec,
    NoisePath,
    flow_convolution_at,
)

__all__ = [
    "Nonlinearity",
    "double_well",
    "ModelParams",
    "SystemState",
    "BlowUpError",
    "DiscreteOperators",
    "assemble",
    "normal_derivative",
    "step",
    "solve_flow",
    "recover_physical",
    "transform_physical",
    "energy",
    "EnergyRecord",
    "leps_norm",
    "state_distance",
    "default_initial_pair",
]


@dataclass(frozen=True)
class Nonlinearity:
    """Odd-degree polynomial f(u) = sum a_k u^k with positive leading term."""

    coeffs: tuple  # (a_1, ..., a_{2p-1})

    def __post_init__(self):
        c = tuple(float(a) for a in self.coeffs)
        object.__setattr__(self, "coeffs", c)
        if len(c) < 3 or len(c) % 2 == 0:
            raise ValueError("need odd degree 2p-1 with p >= 2")
        if c[-1] <= 0:
            raise ValueError("leading coefficient must be positive")

    @property
    def p(self) -> int:
        return (len(self.coeffs) + 1) // 2

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    def f(self, x):
        return np.polyval(self._fc, x)

    def fprime(self, x):
        return np.polyval(self._fpc, x)

    def antiderivative(self, x):
        """F with F' = f and F(0) = 0."""
        c = [a / (k + 2.0) for k, a in enumerate(self.coeffs)]
        return np.polyval(list(reversed(c)) + [0.0, 0.0], x)

    @property
    def _fc(self) -> np.ndarray:
        return np.array(list(reversed(self.coeffs)) + [0.0])

    @property
    def _fpc(self) -> np.ndarray:
        d = [a * (k + 1) for k, a in enumerate(self.coeffs)]
        return np.array(list(reversed(d)))


def double_well() -> Nonlinearity:
    """f(u) = u^3 - u, the classic double-well potential derivative."""
    return Nonlinearity((-1.0, 0.0, 1.0))


@dataclass(frozen=True)
class ModelParams:
    eps: float = 0.01
    eps0: float = 1.0
    lam: float = 1.0
    sigma1: float = 0.1
    sigma2: float = 0.1
    f: Nonlinearity = field(default_factory=double_well)
    beta: float = 0.0

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("viscosity eps must be nonnegative")
        if self.eps0 <= 0:
            raise ValueError("boundary intensity eps0 must be positive")
        if self.lam <= 0:
            raise ValueError("boundary damping lam must be positive")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("noise intensities must be nonnegative")


@dataclass
class SystemState:
    """Transformed pair: u on the grid (slots coupled), v the boundary pair."""

    u: np.ndarray
    v: np.ndarray
    index: int  # step index on the path grid; time = index * dt

    def copy(self) -> "SystemState":
        return SystemState(self.u.copy(), self.v.copy(), self.index)


class BlowUpError(RuntimeError):
    def __init__(self, step_index: int, dt: float):
        super().__init__(
            f"state exceeded 1e8 at step {step_index} (t={step_index * dt:.6g}); "
            "the explicit polynomial term is unstable here - reduce dt"
        )
        self.step_index = step_index


def normal_derivative(u_full: np.ndarray, domain: DomainSpec) -> tuple[float, float]:
    """Outward normal derivatives at x=0 and x=pi, second-order one-sided."""
    u = np.asarray(u_full, dtype=float)
    if u.shape != (domain.size,):
        raise ValueError(f"field must have length {domain.size}")
    s = 0.5 / domain.dx
    g0 = (3.0 * u[0] - 4.0 * u[1] + u[2]) * s
    gpi = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) * s
    return float(g0), float(gpi)


class DiscreteOperators:
    """Assembled implicit-step system plus the shared spatial operators."""

    def __init__(self, params, domain, cov, dt, theta, backend=None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.params = params
        self.domain = domain
        self.cov = cov
        self.dt = float(dt)
        self.theta = float(theta)
        self.basis = SpectralBasis(domain, cov.K)
        self.neumann = NeumannOperator(domain)
        self.conv_coeffs = ConvCoeffs(
            cov, params.eps, params.eps0, params.lam, params.sigma1, params.sigma2
        )

        N = domain.N
        h = domain.dx
        wq = domain.quad_weights
        G = self.neumann.ainv_matrix()
        size = domain.size

        dtth = self.dt * self.theta
        invh2 = 1.0 / (h * h)
        inv2h = 0.5 / h
        invpi = 1.0 / np.pi

        # implicit operator on full-field increments, interior rows only
        B = np.zeros((N, size))
        B[np.arange(N), np.arange(1, N + 1)] += params.eps
        B += G[1 : N + 1, :]
        lap = np.zeros((N, size))
        lap[np.arange(N), np.arange(0, N)] += invh2
        lap[np.arange(N), np.arange(1, N + 1)] += -2.0 * invh2
        lap[np.arange(N), np.arange(2, N + 2)] += invh2
        mc = np.zeros(size)  # <dnu .>_Gamma as a row functional
        mc[[0, 1, 2]] += np.array([3.0, -4.0, 1.0]) * inv2h * invpi
        mc[[-1, -2, -3]] += np.array([3.0, -4.0, 1.0]) * inv2h * invpi
        B -= dtth * (lap - np.ones((N, 1)) * mc[None, :])

        T = np.zeros((N + 3, N + 3))
        T[:N, :N] = B[:, 1 : N + 1]
        T[:N, N] = B[:, 0]
        T[:N, N + 1] = B[:, -1]
        T[:N, N + 2] = self.dt
        ee = params.eps0
        T[N, N] = 1.0 + dtth * ee * (params.lam + 3.0 * inv2h)
        T[N, 0] = dtth * ee * (-4.0) * inv2h
        T[N, 1] = dtth * ee * 1.0 * inv2h
        T[N + 1, N + 1] = 1.0 + dtth * ee * (params.lam + 3.0 * inv2h)
        T[N + 1, N - 1] = dtth * ee * (-4.0) * inv2h
        T[N + 1, N - 2] = dtth * ee * 1.0 * inv2h
        T[N + 2, :N] = wq[1 : N + 1] * invpi
        T[N + 2, N] = wq[0] * invpi
        T[N + 2, N + 1] = wq[-1] * invpi

        self.condition_number = float(np.linalg.cond(T))
        if not np.isfinite(self.condition_number):
            raise RuntimeError(
                "singular implicit assembly; check DomainSpec/ModelParams"
            )

        d1, q1, d2, q2 = self.conv_coeffs.decay_and_kick(self.dt)
        self.plan = _kernels.StepPlan(
            N=N,
            dt=self.dt,
            theta=self.theta,
            eps=params.eps,
            eps0=params.eps0,
            lam=params.lam,
            beta=params.beta,
            invh2=invh2,
            inv2h=inv2h,
            invpi=invpi,
            wq=wq.copy(),
            fc=params.f._fc,
            fpc=params.f._fpc,
            T=T,
            Gcol0=G[1 : N + 1, 0].copy(),
            Gcolpi=G[1 : N + 1, -1].copy(),
            E1=np.ascontiguousarray(self.basis.modes[1:]),
            d1=d1,
            q1=q1,
            d2=d2,
            q2=q2,
        )
        self.stepper = _kernels.make_stepper(self.plan, backend)

        # bordered (eps + Ainv) for the trace functional: solves the mass
        # operator on mean-zero fields
        M = params.eps * np.eye(size) + G
        bord = np.zeros((size + 1, size + 1))
        bord[:size, :size] = M
        bord[:size, size] = 1.0
        bord[size, :size] = wq * invpi
        self._mass_lu = lu_factor(bord)

    def mass_solve(self, w: np.ndarray) -> np.ndarray:
        """(eps + Ainv)^{-1} w on the mean-zero subspace (input deflected)."""
        rhs = np.append(w, 0.0)
        return lu_solve(self._mass_lu, rhs)[:-1]

    def mean(self, u: np.ndarray) -> float:
        return self.neumann.mean(u)


def assemble(
    params: ModelParams,
    domain: DomainSpec,
    cov: CovarianceSpec,
    dt: float,
    theta: float = 0.5,
    backend: str | None = None,
) -> DiscreteOperators:
    """Build the implicit block system and per-dt factorization."""
    return DiscreteOperators(params, domain, cov, dt, theta, backend)


def _coupling_offsets(conv: ConvolutionState, ops: DiscreteOperators) -> np.ndarray:
    z1f = conv.z1 @ ops.plan.E1
    return np.array([conv.z2[0] - z1f[0], conv.z2[1] - z1f[-1]])


def transform_physical(phi, psi, conv, ops, index: int) -> SystemState:
    """(u, v) = (phi - z1, psi - z2); boundary slots rebuilt from the coupling."""
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if abs(phi[0] - psi[0]) > 1e-9 or abs(phi[-1] - psi[1]) > 1e-9:
        raise ValueError("physical pair violates the trace condition phi|_Gamma = psi")
    z1f = conv.z1 @ ops.plan.E1
    u = phi - z1f
    v = psi - conv.z2
    c = _coupling_offsets(conv, ops)
    u[0] = v[0] + c[0]
    u[-1] = v[1] + c[1]
    return SystemState(u, v, index)


def recover_physical(state: SystemState, conv: ConvolutionState, ops) -> tuple[np.ndarray, np.ndarray]:
    """phi = u + z1, psi = v + z2."""
    z1f = conv.z1 @ ops.plan.E1
    return state.u + z1f, state.v + conv.z2


def step(state: SystemState, ops: DiscreteOperators, conv: ConvolutionState, path: NoisePath):
    """One step; returns the advanced (state, convolution) pair."""
    c = _coupling_offsets(conv, ops)
    resid = max(abs(state.u[0] - (state.v[0] + c[0])), abs(state.u[-1] - (state.v[1] + c[1])))
    if resid > 1e-9:
        raise ValueError(f"boundary coupling violated on input (residual {resid:.3g})")
    new = state.copy()
    zc = conv.copy()
    z1f = zc.z1 @ ops.plan.E1
    rows1, rows2 = path.rows(state.index, state.index + 1)
    done = ops.stepper.flow_steps(new.u, new.v, zc.z1, zc.z2, z1f, c, rows1, rows2, 1)
    if done < 0:
        raise BlowUpError(state.index + 1, ops.dt)
    new.index += 1
    return new, zc


def solve_flow(
    ops: DiscreteOperators,
    path: NoisePath,
    s: float,
    t: float,
    init,
    conv0: ConvolutionState | None = None,
    observer=None,
    observe_every: int = 0,
):
    """Run the flow S(t, s; omega) from `init` given at time s.

    `init` is a SystemState or a physical pair (phi, psi).  The convolution
    at time s is reconstructed from the path unless `conv0` (a state produced
    by the same construction, e.g. from a checkpoint sweep) is supplied.
    Returns the final (state, convolution).
    """
    ms, mt = path.index_of(s), path.index_of(t)
    if mt < ms:
        raise ValueError("flow requires s <= t")
    conv = conv0.copy() if conv0 is not None else flow_convolution_at(
        path, ops.conv_coeffs, ms, sweeper=ops.stepper
    )
    if isinstance(init, SystemState):
        state = init.copy()
        state.index = ms
    else:
        phi, psi = init
        state = transform_physical(phi, psi, conv, ops, ms)

    u, v = state.u, state.v
    z1, z2 = conv.z1, conv.z2
    z1f = z1 @ ops.plan.E1
    c = np.array([z2[0] - z1f[0], z2[1] - z1f[-1]])
    u[0] = v[0] + c[0]
    u[-1] = v[1] + c[1]

    m = ms
    if observer is not None:
        observer(SystemState(u, v, m), ConvolutionState(z1, z2, conv.coeffs))
    chunk = observe_every if (observer is not None and observe_every > 0) else (mt - ms)
    while m < mt:
        n = min(chunk, mt - m) if chunk > 0 else (mt - m)
        rows1, rows2 = path.rows(m, m + n)
        done = ops.stepper.flow_steps(u, v, z1, z2, z1f, c, rows1, rows2, n)
        if done < 0:
            raise BlowUpError(m - done, ops.dt)
        m += n
        if observer is not None:
            observer(SystemState(u, v, m), ConvolutionState(z1, z2, conv.coeffs))
    return SystemState(u, v, mt), ConvolutionState(z1, z2, conv.coeffs)


@dataclass
class EnergyRecord:
    L_eps_norm2: float
    V_norm2: float
    free_energy: float
    mass: float


def leps_norm(ops: DiscreteOperators, dphi: np.ndarray, dpsi: np.ndarray) -> float:
    """Weak-energy norm: eps|phi|^2 + |bar phi|_{-1}^2 + m(phi)^2 + |psi|_Gamma^2."""
    nm = ops.neumann
    mean = nm.mean(dphi)
    bar = dphi - mean
    val = (
        ops.params.eps * nm.inner(dphi, dphi)
        + nm.inner(nm.apply_Ainv(bar), bar)
        + mean * mean
        + float(np.dot(dpsi, dpsi))
    )
    return float(np.sqrt(max(val, 0.0)))


def state_distance(ops, sa: SystemState, sb: SystemState) -> float:
    """L_eps distance; transformed and physical differences coincide pathwise."""
    return leps_norm(ops, sa.u - sb.u, sa.v - sb.v)


def energy(state: SystemState, conv: ConvolutionState, ops: DiscreteOperators) -> EnergyRecord:
    """Weak-energy and phase-space norms plus the free energy of phi."""
    phi, psi = recover_physical(state, conv, ops)
    nm = ops.neumann
    mean = nm.mean(phi)
    bar = phi - mean
    leps2 = (
        ops.params.eps * nm.inner(phi, phi)
        + nm.inner(nm.apply_Ainv(bar), bar)
        + mean * mean
        + float(np.dot(psi, psi))
    )
    v2 = nm.dirichlet_form(phi) + mean * mean + float(np.dot(psi, psi))
    fe = 0.5 * nm.dirichlet_form(phi) + float(
        ops.domain.quad_weights @ ops.params.f.antiderivative(phi)
    )
    return EnergyRecord(float(leps2), float(v2), float(fe), float(mean))


def default_initial_pair(
    ops: DiscreteOperators, seed: int, amplitude: float = 0.5, n_modes: int = 8
):
    """Seeded smooth random field with mean beta, trace-consistent pair."""
    rng = np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(entropy=[int(seed), 4, 0])))
    k_hi = min(n_modes, ops.cov.K)
    coeff = amplitude * rng.standard_normal(k_hi) / (1.0 + np.arange(1, k_hi + 1)) ** 2
    phi = ops.params.beta + coeff @ ops.basis.modes[1 : k_hi + 1]
    psi = np.array([phi[0], phi[-1]])
    return phi, psi
