"""Training pairs (v_j(0), v_j(delta)) in modal space."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rng
from .basis import Basis, BasisError, FieldSample
from .solvers import PdeSpec, SolverConfig, evolve_modal

MODAL_SAMPLED = "modal-sampled"
SNAPSHOT_PAIRED = "snapshot-paired"
_PROVENANCE_IDS = {MODAL_SAMPLED: 0, SNAPSHOT_PAIRED: 1}

MAGIC = b"MEVD"
VERSION = 1
# magic, version, n, J, delta, eta, provenance
_HEADER = struct.Struct("<4sIIQddI")


class DatasetFormatError(ValueError):
    pass


class NoPairsError(ValueError):
    pass


@dataclass(frozen=True)
class ModalBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be two vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box bounds must satisfy lo <= hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return len(self.lo)

    def contains(self, v: np.ndarray) -> np.ndarray:
        return np.all((v >= self.lo) & (v <= self.hi), axis=-1)

    @classmethod
    def from_raw_amplitudes(cls, basis: Basis, lo, hi) -> "ModalBox":
        """Box given in amplitudes of the unnormalized functions (cos kx, sin jx, ...).

        Orthonormal coefficients are raw amplitudes times the raw function norms;
        only bases with a diagonal transform map boxes to boxes.
        """
        t = basis.transform
        if np.any(np.abs(t - np.diag(np.diag(t))) > 1e-12 * np.abs(t).max()):
            raise BasisError("raw-amplitude boxes need a basis with a diagonal transform")
        scale = basis.raw_norms * np.sign(np.diag(t))
        lo, hi = np.asarray(lo, float) * scale, np.asarray(hi, float) * scale
        return cls(np.minimum(lo, hi), np.maximum(lo, hi))


@dataclass(frozen=True)
class PairDataset:
    delta: float
    inputs: np.ndarray
    targets: np.ndarray
    provenance: str = MODAL_SAMPLED
    noise: float = 0.0

    def __post_init__(self):
        x = np.ascontiguousarray(self.inputs, dtype=np.float64)
        y = np.ascontiguousarray(self.targets, dtype=np.float64)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        if x.ndim != 2 or x.shape != y.shape:
            raise ValueError(f"inputs {x.shape} and targets {y.shape} must be equal (J, n) arrays")
        if x.shape[0] < 1:
            raise ValueError("a dataset needs at least one pair")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        if not self.delta > 0:
            raise ValueError(f"time lag must be positive, got {self.delta}")
        if self.provenance not in _PROVENANCE_IDS:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.noise < 0:
            raise ValueError("noise level must be >= 0")

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, rows) -> "PairDataset":
        return replace(self, inputs=self.inputs[rows], targets=self.targets[rows])

    def save(self, path) -> None:
        header = _HEADER.pack(MAGIC, VERSION, self.n, len(self), self.delta, self.noise,
                              _PROVENANCE_IDS[self.provenance])
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.inputs.astype("<f8").tobytes())
            f.write(self.targets.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PairDataset":
        blob = Path(path).read_bytes()
        if len(blob) < _HEADER.size:
            raise DatasetFormatError(f"{path}: truncated header")
        magic, version, n, count, delta, noise, prov = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise DatasetFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise DatasetFormatError(f"{path}: unsupported dataset version {version}")
        expected = _HEADER.size + 2 * n * count * 8
        if len(blob) != expected:
            raise DatasetFormatError(f"{path}: size {len(blob)} bytes, expected {expected}")
        data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
        names = {v: k for k, v in _PROVENANCE_IDS.items()}
        return cls(delta, data[: n * count].reshape(count, n), data[n * count:].reshape(count, n),
                   names[prov], noise)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"v0_{i + 1}" for i in range(self.n)] + [f"vd_{i + 1}" for i in range(self.n)])
            for a, b in zip(self.inputs, self.targets):
                w.writerow([repr(float(c)) for c in a] + [repr(float(c)) for c in b])


def sample_modal_box(box: ModalBox, count: int, seed: int, start: int = 0) -> np.ndarray:
    """Rows ``start .. start + count - 1`` of the i.i.d. uniform sample sequence.

    Row j depends only on (seed, j), so chunks can be drawn in any order.
    """
    if count < 1:
        raise ValueError(f"need at least one sample, got {count}")
    u = rng.uniform_rows(seed, rng.STREAM_SAMPLES, range(start, start + count), box.n)
    # lo + u * (hi - lo) can round past hi when u is close to 1
    return np.clip(box.lo + u * (box.hi - box.lo), box.lo, box.hi)


def generate_pairs(basis: Basis, samples: np.ndarray, delta: float, pde: PdeSpec,
                   config: SolverConfig | None = None, chunk: int = 4096) -> PairDataset:
    """Evolve every sampled state through the reference operator for one lag."""
    samples = basis.check_vector(np.atleast_2d(samples))
    if delta <= 0:
        raise ValueError(f"time lag must be positive, got {delta}")
    targets = np.empty_like(samples)
    for start in range(0, len(samples), chunk):
        stop = min(start + chunk, len(samples))
        try:
            targets[start:stop] = evolve_modal(basis, samples[start:stop], delta, pde, config)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            raise RuntimeError(f"reference solver failed on samples {start}..{stop - 1}: {exc}") from exc
        bad = ~np.all(np.isfinite(targets[start:stop]), axis=1)
        if bad.any():
            raise RuntimeError(f"reference solver produced non-finite target for sample "
                               f"{start + int(np.flatnonzero(bad)[0])}")
    return PairDataset(delta, samples, targets, MODAL_SAMPLED)


@dataclass
class SnapshotTrajectory:
    ic_id: str
    times: np.ndarray
    fields: list  # FieldSample or value arrays on the basis quadrature grid

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.fields):
            raise ValueError(f"trajectory {self.ic_id}: one field per time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError(f"trajectory {self.ic_id}: times must be strictly increasing")


def pair_snapshots(basis: Basis, snapshots: list[SnapshotTrajectory], delta: float,
                   tol: float | None = None) -> PairDataset:
    """Project every within-trajectory snapshot pair separated by ``delta`` (+- tol)."""
    tol = 1e-9 * delta if tol is None else tol
    first, second = [], []
    nearest = []
    for traj in snapshots:
        gaps = traj.times[None, :] - traj.times[:, None]
        hits = np.argwhere(np.abs(gaps - delta) <= tol)
        for a, b in hits:
            first.append(traj.fields[a])
            second.append(traj.fields[b])
        positive = gaps[gaps > 0]
        if positive.size:
            nearest.append(float(positive[np.argmin(np.abs(positive - delta))]))
    if not first:
        raise NoPairsError(
            f"no snapshot pairs separated by delta = {delta} (tolerance {tol:g}); "
            f"nearest gaps per trajectory: {nearest}"
        )

    def values(fields):
        return np.array([basis._field_values(f) for f in fields])

    return PairDataset(delta, basis.project(values(first)), basis.project(values(second)),
                       SNAPSHOT_PAIRED)


def add_noise(ds: PairDataset, eta: float, seed: int) -> PairDataset:
    """Multiply every entry by an independent (1 + eps), eps ~ U[-eta, eta]."""
    if eta < 0:
        raise ValueError(f"noise level must be >= 0, got {eta}")
    if eta == 0:
        return replace(ds, noise=0.0)
    count, n = ds.inputs.shape
    u = rng.uniform_rows(seed, rng.STREAM_NOISE, range(2 * count), n)
    factors = 1.0 + eta * (2.0 * u - 1.0)
    return replace(ds, inputs=ds.inputs * factors[:count], targets=ds.targets * factors[count:],
                   noise=float(eta))


def snapshot(basis: Basis, values: np.ndarray) -> FieldSample:
    return FieldSample(basis.grid, values)
