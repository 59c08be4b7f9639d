"""Ground-truth evolution operators used to synthesize data and reference solutions.

Linear problems use closed-form propagators on the (invariant) trigonometric
subspaces. Burgers' equation is solved on a fine uniform periodic grid: a
dealiased pseudo-spectral scheme with integrating-factor RK4 when viscous, a
MUSCL/Godunov finite-volume scheme with SSP-RK2 when inviscid. Homogeneous
Dirichlet data on (-pi, pi) are handled through odd symmetry, which the
periodic solvers preserve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import DIRICHLET, PERIODIC, Basis, BasisError, FieldSample, uniform_nodes
from .trajectory import Trajectory

PDE_KINDS = ("advection1d", "diffusion1d", "burgers1d", "advdiff2d")
LIMITERS = ("minmod", "none")
DEALIAS_RULES = ("2/3", "none")

BLOWUP_NORM = 1e6


class CflError(ValueError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, step: int, norm: float, what: str = "trajectory"):
        super().__init__(f"{what} diverged at step {step} (|v|_2 = {norm:.3e})")
        self.step = step
        self.norm = norm


def _as_tuple(x) -> tuple[float, ...]:
    if np.isscalar(x):
        return (float(x),)
    return tuple(float(a) for a in x)


@dataclass(frozen=True)
class PdeSpec:
    """u_t + sum_a alpha_a u_{x_a} [+ (u^2/2)_x] = sum_a sigma_a u_{x_a x_a}."""

    kind: str
    alpha: tuple[float, ...] = (0.0,)
    sigma: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.kind not in PDE_KINDS:
            raise ValueError(f"unknown pde kind {self.kind!r}; expected one of {PDE_KINDS}")
        alpha, sigma = _as_tuple(self.alpha), _as_tuple(self.sigma)
        dims = 2 if self.kind == "advdiff2d" else 1
        if len(alpha) == 1 and dims == 2:
            alpha = alpha * 2
        if len(sigma) == 1 and dims == 2:
            sigma = sigma * 2
        if len(alpha) != dims or len(sigma) != dims:
            raise ValueError(f"{self.kind} needs {dims} advection speed(s) and viscosity(ies)")
        if any(s < 0 for s in sigma):
            raise ValueError(f"viscosity must be >= 0, got {sigma}")
        if self.kind == "burgers1d" and alpha != (0.0,):
            raise ValueError("burgers1d takes no linear advection speed")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)

    @property
    def boundary(self) -> str:
        return DIRICHLET if self.kind in ("diffusion1d", "burgers1d") else PERIODIC

    @property
    def linear(self) -> bool:
        return self.kind != "burgers1d"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": list(self.alpha), "sigma": list(self.sigma)}

    @classmethod
    def from_dict(cls, d: dict) -> "PdeSpec":
        return cls(d["kind"], d.get("alpha", 0.0), d.get("sigma", 0.0))


@dataclass(frozen=True)
class SolverConfig:
    grid: int = 512
    dt: float | None = None  # None: largest step allowed by ``cfl``
    cfl: float = 0.4
    dealias: str = "2/3"
    limiter: str = "minmod"

    def __post_init__(self):
        if self.grid < 8 or self.grid % 2:
            raise ValueError(f"solver grid must be an even number >= 8, got {self.grid}")
        # 0.5 is the TVD bound of MUSCL + SSP-RK2
        if not 0 < self.cfl <= 0.5:
            raise CflError(f"CFL number must lie in (0, 0.5], got {self.cfl}")
        if self.dt is not None and self.dt <= 0:
            raise CflError(f"time step must be positive, got {self.dt}")
        if self.dealias not in DEALIAS_RULES:
            raise ValueError(f"unknown dealiasing rule {self.dealias!r}")
        if self.limiter not in LIMITERS:
            raise ValueError(f"unknown limiter {self.limiter!r}")

    def to_dict(self) -> dict:
        return {"grid": self.grid, "dt": self.dt, "cfl": self.cfl,
                "dealias": self.dealias, "limiter": self.limiter}

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(**{k: d[k] for k in ("grid", "dt", "cfl", "dealias", "limiter") if k in d})


# ---------------------------------------------------------------------------
# closed-form linear propagators


def _axis_image(factor, shift: float, decay: float):
    kind, k = factor
    if kind == "one":
        return [(factor, 1.0)]
    c, s = math.cos(k * shift), math.sin(k * shift)
    if kind == "cos":
        terms = [(("cos", k), c), (("sin", k), s)]
    else:
        terms = [(("sin", k), c), (("cos", k), -s)]
    return [(f, decay * w) for f, w in terms if w != 0.0]


def propagator_matrix(basis: Basis, pde: PdeSpec, delta: float) -> np.ndarray:
    """Exact E_delta restricted to V_n, as an (n, n) matrix acting on coefficients.

    Translation by alpha * delta rotates each (cos kx, sin kx) pair by k * alpha * delta;
    diffusion scales it by exp(-sigma k^2 delta). Raises if V_n is not invariant.
    """
    if not pde.linear:
        raise ValueError("propagator_matrix needs a linear pde")
    if basis.factors is None:
        raise BasisError("closed-form propagators need a basis of trigonometric factors")
    if len(pde.alpha) != basis.dims:
        raise BasisError(f"{pde.kind} does not match a {basis.dims}D basis")
    index = {fs: m for m, fs in enumerate(basis.factors)}
    m_raw = len(basis.factors)
    a_raw = np.zeros((m_raw, m_raw))
    for m, fs in enumerate(basis.factors):
        images = [[((), 1.0)]]
        for axis, f in enumerate(fs):
            k = f[1]
            decay = math.exp(-pde.sigma[axis] * k * k * delta)
            shift = pde.alpha[axis] * delta
            images.append(_axis_image(f, shift, decay))
        combos = [((), 1.0)]
        for axis_terms in images[1:]:
            combos = [(prev + (f,), w0 * w1) for prev, w0 in combos for f, w1 in axis_terms]
        for target, w in combos:
            if target not in index:
                raise BasisError(
                    f"V_n is not invariant under {pde.kind}: {target} is outside the basis"
                )
            a_raw[index[target], m] += w
    t = basis.transform
    return np.linalg.solve(t.T, a_raw @ t.T)


def _apply(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float) @ matrix.T


def advect_exact(basis: Basis, v: np.ndarray, delta: float, c: float = 1.0) -> np.ndarray:
    if basis.kind != "real-trig" or basis.domain.boundary != (PERIODIC,):
        raise BasisError("advect_exact needs a real-trig basis on a periodic interval")
    v = basis.check_vector(v)
    return _apply(propagator_matrix(basis, PdeSpec("advection1d", c, 0.0), delta), v)


def diffuse_exact(basis: Basis, v: np.ndarray, delta: float, sigma: float) -> np.ndarray:
    if basis.kind != "sine":
        raise BasisError("diffuse_exact needs a sine basis")
    v = basis.check_vector(v)
    return _apply(propagator_matrix(basis, PdeSpec("diffusion1d", 0.0, sigma), delta), v)


def advdiff2d_exact(basis: Basis, v: np.ndarray, delta: float,
                    alpha=(1.0, 0.7), sigma=(0.1, 0.16)) -> np.ndarray:
    if basis.kind != "tensor-trig-2d":
        raise BasisError("advdiff2d_exact needs the tensor-trig-2d basis")
    v = basis.check_vector(v)
    return _apply(propagator_matrix(basis, PdeSpec("advdiff2d", alpha, sigma), delta), v)


# ---------------------------------------------------------------------------
# Burgers' equation on a fine grid


def solver_grid(points: int, lo: float = -math.pi, hi: float = math.pi) -> np.ndarray:
    """Cell-centred uniform nodes; identical to the uniform quadrature nodes of a basis."""
    return uniform_nodes(lo, hi, points)[0]


def _check_odd(u: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(u)))) if u.size else 1.0
    asym = np.max(np.abs(u + u[..., ::-1])) if u.size else 0.0
    if asym > 1e-10 * scale:
        raise ValueError(
            "Dirichlet data on (-pi, pi) must be odd-symmetric about x = 0 so that the "
            f"periodic solver keeps u(+-pi) = 0 (asymmetry {asym:.2e})"
        )


def _step_counts(u: np.ndarray, delta: float, h: float, config: SolverConfig) -> np.ndarray:
    umax = np.max(np.abs(u), axis=-1)
    with np.errstate(divide="ignore"):
        dt_cfl = np.where(umax > 0, config.cfl * h / np.where(umax > 0, umax, 1.0), np.inf)
    if config.dt is not None:
        if np.any(config.dt > dt_cfl):
            worst = int(np.argmin(dt_cfl))
            raise CflError(
                f"dt = {config.dt} exceeds the CFL bound {dt_cfl[worst]:.3e} (row {worst})"
            )
        dt = np.full(u.shape[0], float(config.dt))
    else:
        dt = dt_cfl
    return np.where(np.isfinite(dt), np.ceil(delta / dt - 1e-12), 1).astype(int).clip(min=1)


def _spectral_run(u: np.ndarray, delta: float, sigma: float, length: float,
                  nsteps: int, dealias: str) -> np.ndarray:
    m = u.shape[-1]
    idx = np.arange(m // 2 + 1)
    k = 2 * math.pi / length * idx
    mask = (idx <= m // 3) if dealias == "2/3" else (idx < m // 2)
    ik_half = -0.5j * k * mask
    dt = delta / nsteps
    e_half = np.exp(-sigma * k * k * dt / 2)
    e_full = e_half * e_half

    def nonlinear(uh):
        w = np.fft.irfft(uh * mask, n=m, axis=-1)
        return ik_half * np.fft.rfft(w * w, axis=-1)

    uh = np.fft.rfft(u, axis=-1)
    for _ in range(nsteps):
        a = nonlinear(uh)
        b = nonlinear(e_half * (uh + 0.5 * dt * a))
        c = nonlinear(e_half * uh + 0.5 * dt * b)
        d = nonlinear(e_full * uh + dt * e_half * c)
        uh = e_full * uh + dt / 6 * (e_full * a + 2 * e_half * (b + c) + d)
    return np.fft.irfft(uh, n=m, axis=-1)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def godunov_flux(ul: np.ndarray, ur: np.ndarray) -> np.ndarray:
    """Exact Riemann flux for f(u) = u^2 / 2."""
    return 0.5 * np.maximum(np.maximum(ul, 0.0) ** 2, np.minimum(ur, 0.0) ** 2)


def fv_rhs(u: np.ndarray, h: float, limiter: str = "minmod") -> np.ndarray:
    """-(F_{i+1/2} - F_{i-1/2}) / h on a periodic grid."""
    if limiter == "minmod":
        slope = _minmod(u - np.roll(u, 1, axis=-1), np.roll(u, -1, axis=-1) - u)
        ul = u + 0.5 * slope
        ur = np.roll(u - 0.5 * slope, -1, axis=-1)
    else:
        ul, ur = u, np.roll(u, -1, axis=-1)
    flux = godunov_flux(ul, ur)
    return -(flux - np.roll(flux, 1, axis=-1)) / h


def _godunov_run(u: np.ndarray, delta: float, h: float, nsteps: int, limiter: str) -> np.ndarray:
    dt = delta / nsteps
    for _ in range(nsteps):
        u1 = u + dt * fv_rhs(u, h, limiter)
        u = 0.5 * u + 0.5 * (u1 + dt * fv_rhs(u1, h, limiter))
    return u


def burgers_evolve(u0, delta: float, sigma: float, config: SolverConfig | None = None,
                   bounds: tuple[float, float] = (-math.pi, math.pi)):
    """Advance u_t + (u^2/2)_x = sigma u_xx by ``delta`` on the fine grid.

    ``u0`` is a :class:`FieldSample` or values of shape (M,) / (B, M) on
    :func:`solver_grid`. Rows are advanced independently, each with its own
    CFL-limited step, so a row's result does not depend on its batch.
    """
    config = config or SolverConfig()
    if sigma < 0:
        raise ValueError(f"viscosity must be >= 0, got {sigma}")
    if delta < 0:
        raise ValueError(f"time lag must be >= 0, got {delta}")
    as_field = isinstance(u0, FieldSample)
    values = np.asarray(u0.values if as_field else u0, dtype=float)
    single = values.ndim == 1
    u = np.atleast_2d(values).copy()
    m = u.shape[-1]
    if m != config.grid:
        raise ValueError(f"field has {m} nodes but the solver grid has {config.grid}")
    _check_odd(u)
    length = bounds[1] - bounds[0]
    h = length / m
    if delta > 0:
        counts = _step_counts(u, delta, h, config)
        for nsteps in np.unique(counts):
            rows = np.flatnonzero(counts == nsteps)
            if sigma > 0:
                u[rows] = _spectral_run(u[rows], delta, sigma, length, int(nsteps), config.dealias)
            else:
                u[rows] = _godunov_run(u[rows], delta, h, int(nsteps), config.limiter)
    out = u[0] if single else u
    if as_field:
        return FieldSample(u0.grid, out)
    return out


# ---------------------------------------------------------------------------
# modal-space operators


def _check_burgers_basis(basis: Basis, config: SolverConfig) -> None:
    if basis.dims != 1:
        raise BasisError("burgers1d needs a 1D basis")
    lo, hi = basis.domain.bounds[0]
    nodes = basis.quadrature[0][0]
    if len(nodes) != config.grid or not np.allclose(nodes, solver_grid(config.grid, lo, hi),
                                                     rtol=0, atol=1e-12):
        raise BasisError(
            "burgers1d needs the basis quadrature to be the uniform solver grid "
            f"({config.grid} cell-centred nodes)"
        )


def evolve_modal(basis: Basis, v: np.ndarray, delta: float, pde: PdeSpec,
                 config: SolverConfig | None = None) -> np.ndarray:
    """Pi^{-1} P_n E_delta Pi applied to one vector (n,) or a stack (J, n)."""
    v = basis.check_vector(v)
    if pde.linear:
        return _apply(propagator_matrix(basis, pde, delta), v)
    config = config or SolverConfig(grid=len(basis.grid))
    _check_burgers_basis(basis, config)
    fields = basis.lift_values(v)
    out = burgers_evolve(fields, delta, pde.sigma[0], config, basis.domain.bounds[0])
    return basis.project(out)


def galerkin_rhs(basis: Basis, pde: PdeSpec):
    """dv/dt = Pi^{-1} P_n L(Pi v), with the quadratic term evaluated on the quadrature grid."""
    proj = basis.projector
    lin_field = np.zeros_like(basis.vandermonde)
    for axis in range(basis.dims):
        d1 = tuple(1 if a == axis else 0 for a in range(basis.dims))
        d2 = tuple(2 if a == axis else 0 for a in range(basis.dims))
        if pde.alpha[axis]:
            lin_field -= pde.alpha[axis] * basis.evaluate(deriv=d1)
        if pde.sigma[axis]:
            lin_field += pde.sigma[axis] * basis.evaluate(deriv=d2)
    linear = proj.T @ lin_field
    if pde.linear:
        return lambda v: v @ linear.T
    phi = basis.vandermonde
    phi_x = basis.evaluate(deriv=(1,))

    def rhs(v):
        u = v @ phi.T
        ux = v @ phi_x.T
        return v @ linear.T - (u * ux) @ proj

    return rhs


def galerkin_rollout(basis: Basis, v0: np.ndarray, delta: float, steps: int, pde: PdeSpec,
                     substeps: int = 50) -> Trajectory:
    """Spectral Galerkin solution integrated with RK4 at dt = delta / substeps."""
    if substeps < 50:
        raise ValueError("the Galerkin integrator uses at least 50 RK4 steps per lag")
    v = basis.check_vector(v0).copy()
    rhs = galerkin_rhs(basis, pde)
    dt = delta / substeps
    out = [v.copy()]
    for step in range(1, steps + 1):
        for _ in range(substeps):
            k1 = rhs(v)
            k2 = rhs(v + 0.5 * dt * k1)
            k3 = rhs(v + 0.5 * dt * k2)
            k4 = rhs(v + dt * k3)
            v = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = float(np.linalg.norm(v))
        if not np.isfinite(norm) or norm > BLOWUP_NORM:
            raise BlowUpError(step, norm, "Galerkin solution")
        out.append(v.copy())
    return Trajectory(delta, np.array(out), "galerkin")


# ---------------------------------------------------------------------------
# true solutions sampled on the basis quadrature grid


def _uniform_periodic_axes(basis: Basis) -> bool:
    for (nodes, weights), (lo, hi) in zip(basis.quadrature, basis.domain.bounds):
        if not np.allclose(nodes, uniform_nodes(lo, hi, len(nodes))[0], rtol=0, atol=1e-12):
            return False
    return True


def _periodic_exact(values0: np.ndarray, basis: Basis, pde: PdeSpec, times: np.ndarray) -> np.ndarray:
    shape = tuple(len(nodes) for nodes, _ in basis.quadrature)
    u_hat = np.fft.fftn(values0.reshape(shape))
    symbol = np.zeros(shape, dtype=complex)
    for axis, ((lo, hi), count) in enumerate(zip(basis.domain.bounds, shape)):
        k = 2 * math.pi / (hi - lo) * np.fft.fftfreq(count, 1.0 / count)
        if count % 2 == 0:
            k[count // 2] = 0.0  # drop the Nyquist phase; it carries no resolved content
        sh = [1] * len(shape)
        sh[axis] = count
        symbol = symbol + (-1j * pde.alpha[axis] * k - pde.sigma[axis] * k * k).reshape(sh)
    out = np.empty((len(times), values0.size))
    for i, t in enumerate(times):
        out[i] = np.real(np.fft.ifftn(u_hat * np.exp(symbol * t))).ravel()
    return out


def _dirichlet_series_exact(u0_fn, basis: Basis, sigma: float, times: np.ndarray,
                            modes: int = 256, nodes: int = 1024) -> np.ndarray:
    lo, hi = basis.domain.bounds[0]
    length = hi - lo
    t_nodes, t_weights = np.polynomial.legendre.leggauss(nodes)
    xq = lo + 0.5 * length * (t_nodes + 1)
    wq = 0.5 * length * t_weights
    j = np.arange(1, modes + 1)
    lam = (j * math.pi / length) ** 2
    sines_q = np.sin(np.outer(xq - lo, j * math.pi / length))
    coeffs = (2 / length) * (wq * u0_fn(xq[:, None])) @ sines_q
    x = basis.grid[:, 0]
    sines = np.sin(np.outer(x - lo, j * math.pi / length))
    out = np.empty((len(times), len(x)))
    for i, t in enumerate(times):
        out[i] = u0_fn(basis.grid) if t == 0 else sines @ (coeffs * np.exp(-sigma * lam * t))
    return out


def exact_fields(basis: Basis, pde: PdeSpec, u0_fn, delta: float, steps: int,
                 config: SolverConfig | None = None) -> np.ndarray:
    """True solution u(., t_k), k = 0 .. steps, sampled on the basis quadrature grid.

    ``u0_fn`` maps points of shape (P, dims) to values (P,).
    """
    times = delta * np.arange(steps + 1)
    values0 = np.asarray(u0_fn(basis.grid), dtype=float)
    if pde.kind in ("advection1d", "advdiff2d"):
        if not _uniform_periodic_axes(basis):
            raise BasisError("periodic reference solutions need uniform quadrature nodes")
        return _periodic_exact(values0, basis, pde, times)
    if pde.kind == "diffusion1d":
        return _dirichlet_series_exact(u0_fn, basis, pde.sigma[0], times)
    config = config or SolverConfig(grid=len(basis.grid))
    _check_burgers_basis(basis, config)
    out = [values0]
    u = values0
    for _ in range(steps):
        u = burgers_evolve(u, delta, pde.sigma[0], config, basis.domain.bounds[0])
        out.append(u)
    return np.array(out)
