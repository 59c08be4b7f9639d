from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

TRAJECTORY_KINDS = ("predicted", "optimal-projection", "galerkin", "exact-modal")


@dataclass
class Trajectory:
    """Modal coefficients at t_k = k * delta, k = 0 .. steps."""

    delta: float
    coeffs: np.ndarray  # (steps + 1, n)
    kind: str

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2:
            raise ValueError("trajectory coefficients must have shape (steps + 1, n)")
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(self.coeffs.shape[0])

    @property
    def steps(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def fields(self, basis) -> np.ndarray:
        """Lifted fields on the basis quadrature grid, shape (steps + 1, Q)."""
        return basis.lift_values(self.coeffs)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t"] + [f"v_{j + 1}" for j in range(self.n)])
            for t, v in zip(self.times, self.coeffs):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in v])

    @classmethod
    def from_csv(cls, path, kind: str) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        delta = float(t[1] - t[0]) if len(t) > 1 else 0.0
        if len(t) > 1 and not np.allclose(np.diff(t), delta, rtol=1e-9, atol=1e-12):
            raise ValueError(f"{path}: time axis is not uniform")
        if abs(t[0]) > 1e-12:
            raise ValueError(f"{path}: trajectory must start at t = 0")
        return cls(delta, data[:, 1:], kind)
