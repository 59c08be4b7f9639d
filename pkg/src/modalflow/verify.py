"""Quick invariant suite behind ``modalflow verify``.

Each check returns a :class:`Check`; none of them trains a network, so the
whole suite runs in well under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import exact_modal_bound_check
from .basis import dirichlet_interval, make_basis, periodic_interval, periodic_square
from .initial_conditions import half_exp_sin, quartic
from .resnet import ResNet
from .solvers import PdeSpec, SolverConfig, burgers_evolve, propagator_matrix, solver_grid


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def shipped_bases():
    return {
        "real-trig n=7": make_basis(periodic_interval(), "real-trig", 3),
        "sine n=5 (0,pi)": make_basis(dirichlet_interval(), "sine", 5),
        "sine n=9 (-pi,pi)": make_basis(dirichlet_interval(-math.pi, math.pi), "sine", 9,
                                        nodes=512, quadrature="uniform"),
        "tensor-trig-2d n=25": make_basis(periodic_square(), "tensor-trig-2d"),
    }


def basis_checks(seed: int = 0) -> list[Check]:
    gen = np.random.default_rng(seed)
    out = []
    for name, b in shipped_bases().items():
        gram = np.abs(b.gram() - np.eye(b.n)).max()
        v = gen.standard_normal((8, b.n))
        iso = np.abs(b.norm(b.lift_values(v)) - np.linalg.norm(v, axis=1)).max()
        rt = np.abs(b.project(b.lift_values(v)) - v).max()
        out += [Check(f"{name} Gram deviation", gram <= 1e-10, gram, 1e-10),
                Check(f"{name} isometry", iso <= 1e-10, iso, 1e-10),
                Check(f"{name} project(lift(v)) = v", rt <= 1e-10, rt, 1e-10)]
    return out


def gradient_check(cases: int = 10, seed: int = 0, h: float = 1e-6) -> Check:
    """Largest relative deviation between backprop and central differences."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for c in range(cases):
        n = int(gen.integers(2, 6))
        model = ResNet(n, int(gen.integers(1, 4)), int(gen.integers(1, 4)), int(gen.integers(3, 8)),
                       "tanh", seed=c)
        x = gen.standard_normal((int(gen.integers(1, 6)), n))
        y = gen.standard_normal(x.shape)
        _, grad = model.backward(x, y)
        fd = np.empty_like(grad)
        for i in range(model.num_params):
            old = model.params[i]
            model.params[i] = old + h
            up = model.loss(x, y)
            model.params[i] = old - h
            down = model.loss(x, y)
            model.params[i] = old
            fd[i] = (up - down) / (2 * h)
        worst = max(worst, float(np.linalg.norm(grad - fd) / np.linalg.norm(fd)))
    return Check("backprop vs central differences (relative)", worst <= 1e-6, worst, 1e-6)


def propagator_checks() -> list[Check]:
    out = []
    trig = make_basis(periodic_interval(), "real-trig", 3)
    sine = make_basis(dirichlet_interval(), "sine", 5)
    square = make_basis(periodic_square(), "tensor-trig-2d")
    cases = [(trig, PdeSpec("advection1d", 1.0, 0.0)), (sine, PdeSpec("diffusion1d", 0.0, 0.5)),
             (square, PdeSpec("advdiff2d", (1.0, 0.7), (0.1, 0.16)))]
    for b, pde in cases:
        a1, a2 = propagator_matrix(b, pde, 0.1), propagator_matrix(b, pde, 0.2)
        dev = np.abs(a1 @ a1 - a2).max()
        out.append(Check(f"{pde.kind} semigroup E(0.1)^2 = E(0.2)", dev <= 1e-12, dev, 1e-12))
    a = propagator_matrix(trig, PdeSpec("advection1d", 1.0, 0.0), 0.37)
    dev = abs(np.linalg.svd(a, compute_uv=False) - 1).max()
    out.append(Check("advection singular values = 1", dev <= 1e-12, dev, 1e-12))
    s = np.linalg.norm(propagator_matrix(sine, PdeSpec("diffusion1d", 0.0, 0.5), 0.1), 2)
    out.append(Check("diffusion operator norm < 1", s < 1, s, 1.0))
    return out


def trig_interpolate(values: np.ndarray, nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples at ``x``."""
    m = len(values)
    c = np.fft.fft(values) / m
    k = np.fft.fftfreq(m, 1.0 / m)
    c[m // 2] = 0.0
    period = m * (nodes[1] - nodes[0])
    return np.real(np.exp(2j * np.pi * np.outer(x - nodes[0], k) / period) @ c)


def burgers_checks() -> list[Check]:
    out = []
    # refinement: three coarse levels against a fine run, compared at the coarse nodes
    sigma, delta = 0.1, 0.5
    xf = solver_grid(1024)
    uf = burgers_evolve(-np.sin(xf), delta, sigma, SolverConfig(grid=1024))
    errs = []
    levels = (16, 24, 32)
    for m in levels:
        x = solver_grid(m)
        u = burgers_evolve(-np.sin(x), delta, sigma, SolverConfig(grid=m))
        errs.append(np.sqrt(np.mean((u - trig_interpolate(uf, xf, x)) ** 2)))
    order = min(math.log(errs[i] / errs[i + 1]) / math.log(levels[i + 1] / levels[i])
                for i in range(len(levels) - 1))
    out.append(Check("viscous Burgers refinement order (worst pair)", order >= 2, order, 2.0))

    m = 256
    x = solver_grid(m)
    h = 2 * math.pi / m
    u = -np.sin(x) + 0.3 * np.sin(3 * x)
    drift = 0.0
    lo, hi = u.min(), u.max()
    overshoot = 0.0
    for _ in range(40):
        before = u.sum() * h
        u = burgers_evolve(u, 0.05, 0.0, SolverConfig(grid=m))
        drift = max(drift, abs(u.sum() * h - before))
        overshoot = max(overshoot, u.max() - hi, lo - u.min())
    out.append(Check("inviscid conservation of integral u per step", drift <= 1e-10, drift, 1e-10))
    out.append(Check("inviscid maximum principle overshoot", overshoot <= 1e-12, max(overshoot, 0.0), 1e-12))
    return out


def exact_modal_checks() -> list[Check]:
    out = []
    trig = make_basis(periodic_interval(), "real-trig", 3)
    sine = make_basis(dirichlet_interval(), "sine", 5)
    for b, pde, u0, steps in ((trig, PdeSpec("advection1d", 1.0, 0.0), half_exp_sin, 200),
                              (sine, PdeSpec("diffusion1d", 0.0, 0.5), quartic, 30)):
        r = exact_modal_bound_check(b, pde, 0.1, u0, steps)
        margin = float(np.max(r["lhs"] - r["rhs"]))
        out.append(Check(f"{pde.kind} exact-modal error <= projection bound (max LHS - RHS)",
                         r["holds"], margin, 1e-10))
    return out


def run_all() -> list[Check]:
    return basis_checks() + [gradient_check()] + propagator_checks() + burgers_checks() + exact_modal_checks()
