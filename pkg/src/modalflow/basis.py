"""Orthonormal modal bases, the coefficient/field bijection and quadrature projection.

A basis is stored as a set of *raw* functions (products of 1D trigonometric
factors) together with a transform ``T`` so that ``phi_i = sum_m T[i, m] raw_m``.
Standard bases carry a diagonal ``T`` holding the normalization constants;
:func:`orthonormalize` produces a general lower-triangular ``T``.

Fields are always exchanged on the basis quadrature grid. For a 2D basis the
grid is the tensor product of the per-axis nodes, flattened with the x index
varying slowest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

PERIODIC = "periodic"
DIRICHLET = "homogeneous-dirichlet"

BASIS_KINDS = ("real-trig", "sine", "tensor-trig-2d", "custom-orthonormalized")

GRAM_TOL = 1e-10
PIVOT_TOL = 1e-12


class BasisError(ValueError):
    """Invalid basis construction or incompatible basis/field pairing."""


class RankDeficiencyError(BasisError):
    def __init__(self, index: int, pivot: float):
        super().__init__(
            f"raw function {index} is linearly dependent on the previous ones "
            f"(pivot norm {pivot:.3e})"
        )
        self.index = index
        self.pivot = pivot


@dataclass(frozen=True)
class PhysicalDomain:
    bounds: tuple[tuple[float, float], ...]
    boundary: tuple[str, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        boundary = tuple(self.boundary)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "boundary", boundary)
        if len(bounds) not in (1, 2):
            raise BasisError(f"domain must be 1D or 2D, got {len(bounds)} axes")
        if len(boundary) != len(bounds):
            raise BasisError("one boundary kind per axis is required")
        for lo, hi in bounds:
            if not lo < hi:
                raise BasisError(f"axis bounds must satisfy lo < hi, got ({lo}, {hi})")
        for kind in boundary:
            if kind not in (PERIODIC, DIRICHLET):
                raise BasisError(f"unknown boundary kind {kind!r}")

    @property
    def dims(self) -> int:
        return len(self.bounds)

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "boundary": list(self.boundary)}

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalDomain":
        return cls(tuple(tuple(b) for b in d["bounds"]), tuple(d["boundary"]))


def periodic_interval(lo: float = 0.0, hi: float = 2 * math.pi) -> PhysicalDomain:
    return PhysicalDomain(((lo, hi),), (PERIODIC,))


def dirichlet_interval(lo: float = 0.0, hi: float = math.pi) -> PhysicalDomain:
    return PhysicalDomain(((lo, hi),), (DIRICHLET,))


def periodic_square(lo: float = -math.pi, hi: float = math.pi) -> PhysicalDomain:
    return PhysicalDomain(((lo, hi), (lo, hi)), (PERIODIC, PERIODIC))


@dataclass(frozen=True)
class FieldSample:
    """Scalar field values at a set of nodes; ``grid`` has shape (points, dims)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if values.shape[-1] != grid.shape[0]:
            raise BasisError(
                f"field has {values.shape[-1]} values for {grid.shape[0]} grid nodes"
            )
        if not np.all(np.isfinite(values)):
            raise BasisError("field values must be finite")

    def to_csv(self, path) -> None:
        names = ["x", "y"][: self.grid.shape[1]] + ["u"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(names)
            for p, u in zip(self.grid, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(u))])

    @classmethod
    def from_csv(cls, path) -> "FieldSample":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        header = [h.strip() for h in rows[0]]
        if header not in (["x", "u"], ["x", "y", "u"]):
            raise BasisError(f"{path}: expected header 'x,u' or 'x,y,u', got {','.join(header)}")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        return cls(data[:, :-1], data[:, -1])


# 1D trigonometric factors: ("one", 0), ("cos", k) or ("sin", k), all of argument k*x.
Factor = tuple[str, int]


def _factor_values(factor: Factor, x: np.ndarray, deriv: int = 0) -> np.ndarray:
    kind, k = factor
    if kind == "one":
        return np.ones_like(x) if deriv == 0 else np.zeros_like(x)
    shift = deriv * math.pi / 2
    scale = float(k) ** deriv
    if kind == "cos":
        return scale * np.cos(k * x + shift)
    if kind == "sin":
        return scale * np.sin(k * x + shift)
    raise BasisError(f"unknown factor kind {kind!r}")


def _factor_label(factor: Factor, var: str) -> str:
    kind, k = factor
    if kind == "one":
        return "1"
    return f"{kind}({var})" if k == 1 else f"{kind}({k}{var})"


def _product_label(factors: tuple[Factor, ...]) -> str:
    parts = [_factor_label(f, v) for f, v in zip(factors, "xy") if f[0] != "one"]
    return "".join(parts) if parts else "1"


def uniform_nodes(lo: float, hi: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred uniform nodes with equal weights (periodic trapezoid rule)."""
    h = (hi - lo) / count
    return lo + (np.arange(count) + 0.5) * h, np.full(count, h)


def gauss_nodes(lo: float, hi: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(count)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def tensor_grid(quadrature) -> np.ndarray:
    axes = [nodes for nodes, _ in quadrature]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def tensor_weights(quadrature) -> np.ndarray:
    w = quadrature[0][1]
    for _, wa in quadrature[1:]:
        w = np.outer(w, wa).ravel()
    return w


@dataclass(frozen=True, eq=False)
class Basis:
    """An orthonormal family on a physical domain together with its quadrature rule.

    Immutable after construction; derived matrices are cached lazily.
    """

    domain: PhysicalDomain
    kind: str
    transform: np.ndarray
    quadrature: tuple[tuple[np.ndarray, np.ndarray], ...]
    labels: tuple[str, ...]
    factors: tuple[tuple[Factor, ...], ...] | None = None
    raw_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.transform.shape[0]

    @property
    def dims(self) -> int:
        return self.domain.dims

    @property
    def max_wavenumber(self) -> int:
        if self.factors is None:
            return 0
        return max(k for fs in self.factors for _, k in fs)

    @cached_property
    def grid(self) -> np.ndarray:
        """Quadrature nodes as an array of shape (Q, dims)."""
        return tensor_grid(self.quadrature)

    @cached_property
    def weights(self) -> np.ndarray:
        return tensor_weights(self.quadrature)

    def raw(self, points: np.ndarray | None = None, deriv: tuple[int, ...] | None = None) -> np.ndarray:
        if points is None:
            if deriv is None or not any(deriv):
                if self.raw_values is not None:
                    return self.raw_values
            points = self.grid
        if self.factors is None:
            raise BasisError(
                "this basis was built from tabulated values and can only be evaluated "
                "on its quadrature grid"
            )
        points = np.asarray(points, dtype=float).reshape(-1, self.dims)
        deriv = deriv or (0,) * self.dims
        out = np.empty((points.shape[0], len(self.factors)))
        for m, fs in enumerate(self.factors):
            col = np.ones(points.shape[0])
            for axis, f in enumerate(fs):
                col = col * _factor_values(f, points[:, axis], deriv[axis])
            out[:, m] = col
        return out

    def evaluate(self, points: np.ndarray | None = None, deriv: tuple[int, ...] | None = None) -> np.ndarray:
        """Basis functions (or their derivatives) at ``points``, shape (P, n)."""
        return self.raw(points, deriv) @ self.transform.T

    @cached_property
    def vandermonde(self) -> np.ndarray:
        return self.evaluate()

    @cached_property
    def projector(self) -> np.ndarray:
        # v = values @ projector realizes the quadrature inner products <u, phi_j>
        return self.weights[:, None] * self.vandermonde

    def gram(self) -> np.ndarray:
        return self.vandermonde.T @ self.projector

    @cached_property
    def raw_norms(self) -> np.ndarray:
        r = self.raw()
        return np.sqrt(self.weights @ (r * r))

    def raw_to_modal(self, raw_coeffs: np.ndarray) -> np.ndarray:
        """Coefficients w.r.t. the raw functions -> orthonormal coefficients."""
        r = np.asarray(raw_coeffs, dtype=float)
        return np.linalg.solve(self.transform.T, r.T).T

    def modal_to_raw(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.transform

    def check_vector(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.n:
            raise BasisError(f"modal vector has length {v.shape[-1]}, basis has n = {self.n}")
        if not np.all(np.isfinite(v)):
            raise BasisError("modal vector entries must be finite")
        return v

    def _field_values(self, field) -> np.ndarray:
        if isinstance(field, FieldSample):
            if field.grid.shape != self.grid.shape or not np.allclose(
                field.grid, self.grid, rtol=0, atol=1e-12
            ):
                raise BasisError("field is not sampled on the basis quadrature grid")
            return field.values
        values = np.asarray(field, dtype=float)
        if values.shape[-1] != self.grid.shape[0]:
            raise BasisError(
                f"field has {values.shape[-1]} values, quadrature grid has {self.grid.shape[0]} nodes"
            )
        return values

    def lift(self, v: np.ndarray, grid: np.ndarray | None = None) -> FieldSample:
        """u_n = sum_j v_j phi_j sampled on ``grid`` (default: quadrature grid)."""
        v = self.check_vector(v)
        if grid is None:
            return FieldSample(self.grid, v @ self.vandermonde.T)
        grid = np.asarray(grid, dtype=float).reshape(-1, self.dims)
        return FieldSample(grid, v @ self.evaluate(grid).T)

    def lift_values(self, v: np.ndarray) -> np.ndarray:
        """Lift one vector or a stack of vectors to values on the quadrature grid."""
        return self.check_vector(v) @ self.vandermonde.T

    def project(self, field) -> np.ndarray:
        """Orthogonal projection coefficients v_j = <u, phi_j> by quadrature.

        Accepts a :class:`FieldSample` on the quadrature grid, or raw values of
        shape (Q,) / (B, Q).
        """
        return self._field_values(field) @ self.projector

    def norm(self, values: np.ndarray) -> np.ndarray:
        """Quadrature L2 norm of field values on the grid (row-wise for stacks)."""
        values = self._field_values(values)
        return np.sqrt((values * values) @ self.weights)

    def projection_error(self, field) -> np.ndarray:
        values = self._field_values(field)
        residual = values - self.project(values) @ self.vandermonde.T
        return self.norm(residual)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "domain": self.domain.to_dict(),
            "n": self.n,
            "labels": list(self.labels),
            "quadrature": [
                {"nodes": nodes.tolist(), "weights": weights.tolist()}
                for nodes, weights in self.quadrature
            ],
            "factors": None if self.factors is None else [[list(f) for f in fs] for fs in self.factors],
            "transform": self.transform.tolist(),
            "raw_values": None if self.raw_values is None else self.raw_values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Basis":
        factors = d.get("factors")
        raw_values = d.get("raw_values")
        basis = cls(
            domain=PhysicalDomain.from_dict(d["domain"]),
            kind=d["kind"],
            transform=np.array(d["transform"], dtype=float),
            quadrature=tuple(
                (np.array(q["nodes"], dtype=float), np.array(q["weights"], dtype=float))
                for q in d["quadrature"]
            ),
            labels=tuple(d["labels"]),
            factors=None if factors is None else tuple(tuple((k, int(w)) for k, w in fs) for fs in factors),
            raw_values=None if raw_values is None else np.array(raw_values, dtype=float),
        )
        if basis.n != d["n"]:
            raise BasisError(f"basis document declares n = {d['n']} but carries {basis.n} functions")
        return basis

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Basis":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_boundary(domain: PhysicalDomain, factors, kind: str) -> None:
    for axis, ((lo, hi), bc) in enumerate(zip(domain.bounds, domain.boundary)):
        length = hi - lo
        if bc == PERIODIC:
            # integer wavenumbers are periodic only over multiples of 2*pi
            if not math.isclose(length / (2 * math.pi), round(length / (2 * math.pi)), abs_tol=1e-12):
                raise BasisError(f"{kind}: periodic axis {axis} must have length 2*pi")
        else:
            ends = np.array([lo, hi])
            for fs in factors:
                vals = _factor_values(fs[axis], ends)
                if np.max(np.abs(vals)) > 1e-12:
                    raise BasisError(
                        f"{kind}: factor {fs[axis]} violates the Dirichlet condition on axis {axis}"
                    )


def _default_nodes(kmax: int, periodic: bool) -> int:
    return max(4 * kmax + 1, 128 if periodic else 64)


def _axis_quadrature(domain: PhysicalDomain, kmax: int, nodes, rule) -> tuple:
    quad = []
    for axis, ((lo, hi), bc) in enumerate(zip(domain.bounds, domain.boundary)):
        count = nodes[axis] if isinstance(nodes, (list, tuple)) else nodes
        if count is None:
            count = _default_nodes(kmax, bc == PERIODIC) if domain.dims == 1 else max(4 * kmax + 1, 32)
        if count < 4 * kmax + 1:
            raise BasisError(f"quadrature needs at least {4 * kmax + 1} nodes per axis, got {count}")
        r = rule or ("uniform" if bc == PERIODIC else "gauss")
        if r == "uniform":
            quad.append(uniform_nodes(lo, hi, count))
        elif r == "gauss":
            quad.append(gauss_nodes(lo, hi, count))
        else:
            raise BasisError(f"unknown quadrature rule {r!r}")
    return tuple(quad)


TENSOR_TRIG_2D: tuple[tuple[Factor, Factor], ...] = (
    (("one", 0), ("one", 0)),
    (("cos", 1), ("one", 0)), (("sin", 1), ("one", 0)),
    (("cos", 2), ("one", 0)), (("sin", 2), ("one", 0)),
    (("cos", 3), ("one", 0)), (("sin", 3), ("one", 0)),
    (("one", 0), ("cos", 1)), (("one", 0), ("sin", 1)),
    (("one", 0), ("cos", 2)), (("one", 0), ("sin", 2)),
    (("one", 0), ("cos", 3)), (("one", 0), ("sin", 3)),
    (("cos", 1), ("cos", 1)), (("cos", 1), ("sin", 1)),
    (("sin", 1), ("cos", 1)), (("sin", 1), ("sin", 1)),
    (("cos", 1), ("cos", 2)), (("cos", 1), ("sin", 2)),
    (("sin", 1), ("cos", 2)), (("sin", 1), ("sin", 2)),
    (("cos", 2), ("cos", 1)), (("cos", 2), ("sin", 1)),
    (("sin", 2), ("cos", 1)), (("sin", 2), ("sin", 1)),
)


def make_basis(
    domain: PhysicalDomain,
    kind: str,
    size: int = 3,
    nodes: int | tuple[int, ...] | None = None,
    quadrature: str | None = None,
) -> Basis:
    """Build one of the shipped bases.

    ``size`` is the maximum wavenumber for ``real-trig`` (n = 2*size + 1) and the
    number of functions for ``sine``. It is ignored for ``tensor-trig-2d``, which is
    always the fixed 25-function family. ``nodes`` and ``quadrature`` override
    the per-axis node count and rule ("uniform" or "gauss").
    """
    if kind == "real-trig":
        if domain.dims != 1 or domain.boundary[0] != PERIODIC:
            raise BasisError("real-trig basis requires a 1D periodic domain")
        if size < 0:
            raise BasisError("real-trig maximum wavenumber must be >= 0")
        factors = [(("one", 0),)]
        for k in range(1, size + 1):
            factors += [(("cos", k),), (("sin", k),)]
    elif kind == "sine":
        if domain.dims != 1 or domain.boundary[0] != DIRICHLET:
            raise BasisError("sine basis requires a 1D homogeneous-Dirichlet domain")
        if size < 1:
            raise BasisError(f"sine basis needs n >= 1, got {size}")
        factors = [(("sin", j),) for j in range(1, size + 1)]
    elif kind == "tensor-trig-2d":
        if domain.dims != 2 or domain.boundary != (PERIODIC, PERIODIC):
            raise BasisError("tensor-trig-2d basis requires a 2D doubly periodic domain")
        factors = list(TENSOR_TRIG_2D)
    else:
        raise BasisError(f"unknown or non-constructible basis kind {kind!r}")

    factors = tuple(factors)
    _check_boundary(domain, factors, kind)
    kmax = max(k for fs in factors for _, k in fs)
    quad = _axis_quadrature(domain, kmax, nodes, quadrature)
    labels = tuple(_product_label(fs) for fs in factors)

    if kind == "tensor-trig-2d":
        return orthonormalize(domain, quad, factors=factors, labels=labels, kind=kind)

    # closed-form normalization; raw functions are mutually orthogonal here
    norms = []
    for fs in factors:
        sq = 1.0
        for (lo, hi), f in zip(domain.bounds, fs):
            sq *= (hi - lo) if f[0] == "one" else (hi - lo) / 2
        norms.append(1.0 / math.sqrt(sq))
    basis = Basis(domain, kind, np.diag(norms), quad, labels, factors)
    _assert_orthonormal(basis)
    return basis


def _assert_orthonormal(basis: Basis) -> None:
    dev = np.max(np.abs(basis.gram() - np.eye(basis.n)))
    if dev > GRAM_TOL:
        raise BasisError(f"Gram matrix deviates from identity by {dev:.2e} (> {GRAM_TOL:g})")


def orthonormalize(
    domain: PhysicalDomain,
    quadrature: tuple[tuple[np.ndarray, np.ndarray], ...],
    factors: tuple[tuple[Factor, ...], ...] | None = None,
    raw_values: np.ndarray | None = None,
    labels: tuple[str, ...] | None = None,
    kind: str = "custom-orthonormalized",
) -> Basis:
    """Modified Gram-Schmidt (with one re-orthogonalization pass) under the
    quadrature inner product.

    Give either trigonometric ``factors`` (the result can be evaluated anywhere)
    or tabulated ``raw_values`` of shape (Q, m) on the quadrature grid.
    """
    if raw_values is None:
        if factors is None:
            raise BasisError("orthonormalize needs raw factors or tabulated raw values")
        unscaled = Basis(domain, kind, np.eye(len(factors)), quadrature, ("",) * len(factors), factors)
        raw = unscaled.raw()
    else:
        raw = np.asarray(raw_values, dtype=float)
        if raw.ndim != 2 or raw.shape[0] != tensor_grid(quadrature).shape[0]:
            raise BasisError("raw values must be tabulated on the quadrature grid, shape (Q, m)")
    w = tensor_weights(quadrature)
    m = raw.shape[1]
    q = raw.copy()
    t = np.eye(m)
    for i in range(m):
        original = math.sqrt(w @ (raw[:, i] ** 2))
        for _ in range(2):
            for j in range(i):
                r = w @ (q[:, j] * q[:, i])
                q[:, i] -= r * q[:, j]
                t[i] -= r * t[j]
        pivot = math.sqrt(w @ (q[:, i] ** 2))
        if pivot < PIVOT_TOL * max(original, 1.0):
            raise RankDeficiencyError(i, pivot)
        q[:, i] /= pivot
        t[i] /= pivot
    if labels is None:
        labels = tuple(
            _product_label(fs) for fs in factors
        ) if factors is not None else tuple(f"phi{i + 1}" for i in range(m))
    basis = Basis(
        domain, kind, t, quadrature, tuple(labels), factors,
        None if raw_values is None else raw,
    )
    _assert_orthonormal(basis)
    return basis


def project(field, basis: Basis) -> np.ndarray:
    return basis.project(field)


def lift(v: np.ndarray, basis: Basis, grid: np.ndarray | None = None) -> FieldSample:
    return basis.lift(v, grid)


def projection_error(field, basis: Basis):
    return basis.projection_error(field)
