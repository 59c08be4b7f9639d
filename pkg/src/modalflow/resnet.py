"""Block residual network N = (I + N_{K-1}) o ... o (I + N_0) with hand-written backprop.

Each block is a fully connected net with layer widths [n, w, ..., w, n]; the
activation follows every hidden affine layer and the block output is linear.
All weights and biases live in one flat float64 vector; per-layer arrays are
views into it, which keeps optimizer updates and serialization trivial.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

ACTIVATIONS = {"tanh": 0, "relu": 1}

MAGIC = b"MEVM"
VERSION = 1
# magic, version, n, K, depth, width, activation id, init seed, init scale
_HEADER = struct.Struct("<4sIIIIIIqd")


class ModelFormatError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, block: int, layer: int):
        super().__init__(f"non-finite activation in block {block}, layer {layer}")
        self.block = block
        self.layer = layer


def parameter_count(n: int, blocks: int, depth: int, width: int) -> int:
    sizes = [n] + [width] * depth + [n]
    per_block = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    return blocks * per_block


class ResNet:
    def __init__(self, n: int, blocks: int = 1, depth: int = 3, width: int = 30,
                 activation: str = "tanh", seed: int = 0, init_scale: float = 1.0,
                 params: np.ndarray | None = None):
        if min(n, blocks, depth, width) < 1:
            raise ValueError("n, blocks, depth and width must all be >= 1")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; expected one of {list(ACTIVATIONS)}")
        self.n, self.blocks, self.depth, self.width = n, blocks, depth, width
        self.activation = activation
        self.seed = seed
        self.init_scale = float(init_scale)
        self.sizes = [n] + [width] * depth + [n]
        count = parameter_count(n, blocks, depth, width)
        if params is None:
            self.params = np.zeros(count)
            self._bind()
            gen = np.random.default_rng(seed)
            for layers in self.layers:
                for w, _ in layers:
                    w[...] = gen.standard_normal(w.shape) * (self.init_scale / np.sqrt(w.shape[0]))
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (count,):
                raise ValueError(f"expected {count} parameters, got {params.shape}")
            self.params = params.copy()
            self._bind()

    def _bind(self) -> None:
        self.layers = self._views(self.params)

    def _views(self, flat: np.ndarray) -> list[list[tuple[np.ndarray, np.ndarray]]]:
        out, pos = [], 0
        for _ in range(self.blocks):
            layers = []
            for a, b in zip(self.sizes[:-1], self.sizes[1:]):
                w = flat[pos: pos + a * b].reshape(a, b)
                pos += a * b
                bias = flat[pos: pos + b]
                pos += b
                layers.append((w, bias))
            out.append(layers)
        return out

    @property
    def num_params(self) -> int:
        return self.params.size

    def copy(self) -> "ResNet":
        return ResNet(self.n, self.blocks, self.depth, self.width, self.activation,
                      self.seed, self.init_scale, self.params)

    def _act(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def block_map(self, b: int, x: np.ndarray) -> np.ndarray:
        """Residual branch N_b(x) of block ``b`` (without the identity)."""
        h = x
        layers = self.layers[b]
        for w, bias in layers[:-1]:
            h = self._act(h @ w + bias)
        w, bias = layers[-1]
        return h @ w + bias

    def forward(self, v: np.ndarray) -> np.ndarray:
        """Apply the network to one vector (n,) or row-wise to a batch (B, n)."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.n:
            raise ValueError(f"input width {v.shape[-1]} does not match model width {self.n}")
        x = v
        for b, layers in enumerate(self.layers):
            h = x
            for i, (w, bias) in enumerate(layers):
                h = h @ w + bias
                if i < len(layers) - 1:
                    h = self._act(h)
                if not np.all(np.isfinite(h)):
                    raise NonFiniteError(b, i)
            x = x + h
        return x

    __call__ = forward

    def _forward_cached(self, x: np.ndarray):
        caches = []
        for layers in self.layers:
            acts = [x]
            h = x
            for w, bias in layers[:-1]:
                h = self._act(h @ w + bias)
                acts.append(h)
            w, bias = layers[-1]
            x = x + (h @ w + bias)
            caches.append(acts)
        return x, caches

    def loss(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        """(1/B) sum_j |N(x_j) - y_j|_2^2."""
        inputs, targets = _check_batch(self, inputs, targets)
        r = self.forward(inputs) - targets
        return _mean_sq(r)

    def backward(self, inputs: np.ndarray, targets: np.ndarray,
                 grad: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """Loss and its exact gradient w.r.t. the flat parameter vector."""
        inputs, targets = _check_batch(self, inputs, targets)
        out, caches = self._forward_cached(inputs)
        r = out - targets
        loss = _mean_sq(r)
        if grad is None:
            grad = np.empty_like(self.params)
        gviews = self._views(grad)
        g = (2.0 / inputs.shape[0]) * r  # dL/d(block output)
        tanh = self.activation == "tanh"
        for b in range(self.blocks - 1, -1, -1):
            acts = caches[b]
            layers = self.layers[b]
            gl = gviews[b]
            d = g
            for i in range(len(layers) - 1, -1, -1):
                w, _ = layers[i]
                a_in = acts[i]
                gw, gb = gl[i]
                np.matmul(a_in.T, d, out=gw)
                np.sum(d, axis=0, out=gb)
                d = d @ w.T
                if i > 0:
                    d = d * ((1.0 - a_in * a_in) if tanh else (a_in > 0))
            g = g + d  # identity path plus residual branch
        return loss, grad

    # -- serialization ------------------------------------------------------

    def header_bytes(self) -> bytes:
        return _HEADER.pack(MAGIC, VERSION, self.n, self.blocks, self.depth, self.width,
                            ACTIVATIONS[self.activation], self.seed, self.init_scale)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.header_bytes())
            f.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ResNet":
        blob = Path(path).read_bytes()
        if len(blob) < _HEADER.size:
            raise ModelFormatError(f"{path}: truncated header")
        magic, version, n, blocks, depth, width, act, seed, g = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ModelFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ModelFormatError(f"{path}: unsupported model version {version}")
        names = {v: k for k, v in ACTIVATIONS.items()}
        if act not in names:
            raise ModelFormatError(f"{path}: unknown activation id {act}")
        count = parameter_count(n, blocks, depth, width)
        if len(blob) != _HEADER.size + 8 * count:
            raise ModelFormatError(
                f"{path}: size {len(blob)} bytes, expected {_HEADER.size + 8 * count}"
            )
        params = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
        return cls(n, blocks, depth, width, names[act], seed, g, params)


HEADER_SIZE = _HEADER.size


def _check_batch(model: ResNet, inputs, targets):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if inputs.shape != targets.shape or inputs.shape[1] != model.n:
        raise ValueError(f"batch shapes {inputs.shape} / {targets.shape} do not match width {model.n}")
    if inputs.shape[0] == 0:
        raise ValueError("empty batch")
    return inputs, targets


def _mean_sq(r: np.ndarray) -> float:
    return float(np.sum(r * r) / r.shape[0])


def init_model(n: int, blocks: int, depth: int, width: int, activation: str = "tanh",
               seed: int = 0, init_scale: float = 1.0) -> ResNet:
    return ResNet(n, blocks, depth, width, activation, seed, init_scale)


def operator_norm_estimate(op, probe: np.ndarray) -> float:
    """max over probe points v != 0 of |op(v)|_2 / |v|_2."""
    probe = np.atleast_2d(probe)
    norms = np.linalg.norm(probe, axis=1)
    keep = norms > 0
    if not keep.any():
        raise ValueError("probe set has no non-zero points")
    return float(np.max(np.linalg.norm(op(probe[keep]), axis=1) / norms[keep]))
