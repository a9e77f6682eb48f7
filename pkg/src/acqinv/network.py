"""Minimal dense/convolutional network with exact analytic gradients.

Layers operate on float64 batches shaped (n, ...). Every layer returns a
forward cache that its backward pass consumes, and validates input shapes
strictly instead of reshaping.

Forward passes use ``np.einsum`` contractions without path optimization:
each output row is then computed by the same fixed-order summation
regardless of batch composition, so a patch produces bitwise identical
activations whether it is forwarded alone or inside any batch. Backward
passes have no such requirement and use ordinary BLAS products.
"""

from __future__ import annotations

import json
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .seeding import as_generator

WEIGHT_MAGIC = b"AIVW"
WEIGHT_VERSION = 1


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {name}")


def _glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


class Conv2D:
    """Valid, stride-1 2-d convolution, channels-last.

    Input (n, h, w, c_in) -> output (n, h-k+1, w-k+1, c_out).
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator | None = None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        k = kernel_size
        fan_in = k * k * in_channels
        fan_out = k * k * out_channels
        if rng is None:
            rng = as_generator(0)
        self.params = {
            "w": _glorot_uniform(rng, (k, k, in_channels, out_channels), fan_in, fan_out),
            "b": np.zeros(out_channels, dtype=np.float64),
        }

    def spec(self) -> dict:
        return {
            "type": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
        }

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        k = self.kernel_size
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(
                f"conv2d expects (n, h, w, {self.in_channels}) input, got {x.shape}"
            )
        if x.shape[1] < k or x.shape[2] < k:
            raise ValueError(f"input {x.shape} smaller than {k}x{k} kernel")
        n = x.shape[0]
        oh, ow = x.shape[1] - k + 1, x.shape[2] - k + 1
        # im2col: (n, oh, ow, k, k, c_in) -> (n*oh*ow, k*k*c_in)
        windows = sliding_window_view(x, (k, k, self.in_channels), axis=(1, 2, 3))
        cols = np.ascontiguousarray(windows).reshape(n * oh * ow, k * k * self.in_channels)
        wmat = self.params["w"].reshape(k * k * self.in_channels, self.out_channels)
        out = np.einsum("nk,ko->no", cols, wmat, optimize=False) + self.params["b"]
        y = out.reshape(n, oh, ow, self.out_channels)
        cache = (cols, x.shape)
        return y, cache

    def backward(self, cache, gout: np.ndarray, need_input_grad: bool = True):
        cols, x_shape = cache
        n, h, w, _ = x_shape
        k = self.kernel_size
        oh, ow = h - k + 1, w - k + 1
        if gout.shape != (n, oh, ow, self.out_channels):
            raise ValueError(
                f"conv2d backward expects gradient {(n, oh, ow, self.out_channels)}, got {gout.shape}"
            )
        gflat = gout.reshape(n * oh * ow, self.out_channels)
        gw = (cols.T @ gflat).reshape(self.params["w"].shape)
        gb = gflat.sum(axis=0)
        gin = None
        if need_input_grad:
            wmat = self.params["w"].reshape(k * k * self.in_channels, self.out_channels)
            gcols = (gflat @ wmat.T).reshape(n, oh, ow, k, k, self.in_channels)
            gin = np.zeros(x_shape, dtype=np.float64)
            for di in range(k):
                for dj in range(k):
                    gin[:, di:di + oh, dj:dj + ow, :] += gcols[:, :, :, di, dj, :]
        return {"w": gw, "b": gb}, gin


class Dense:
    """Affine layer: (n, in_dim) -> (n, out_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            rng = as_generator(0)
        self.params = {
            "w": _glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
            "b": np.zeros(out_dim, dtype=np.float64),
        }

    def spec(self) -> dict:
        return {"type": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim}

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"dense expects (n, {self.in_dim}) input, got {x.shape}")
        y = np.einsum("ni,io->no", x, self.params["w"], optimize=False) + self.params["b"]
        return y, x

    def backward(self, cache, gout: np.ndarray, need_input_grad: bool = True):
        x = cache
        if gout.shape != (x.shape[0], self.out_dim):
            raise ValueError(
                f"dense backward expects gradient {(x.shape[0], self.out_dim)}, got {gout.shape}"
            )
        gw = x.T @ gout
        gb = gout.sum(axis=0)
        gin = gout @ self.params["w"].T if need_input_grad else None
        return {"w": gw, "b": gb}, gin


class ReLU:
    params: dict[str, np.ndarray] = {}

    def spec(self) -> dict:
        return {"type": "relu"}

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        return np.maximum(x, 0.0), x

    def backward(self, cache, gout: np.ndarray, need_input_grad: bool = True):
        x = cache
        if gout.shape != x.shape:
            raise ValueError(f"relu backward shape mismatch: {gout.shape} vs {x.shape}")
        # Subgradient at exactly 0 is taken as 0.
        return {}, gout * (x > 0.0)


class Dropout:
    """Inverted dropout: active only in train mode, identity in eval mode."""

    params: dict[str, np.ndarray] = {}

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
        self.p = p

    def spec(self) -> dict:
        return {"type": "dropout", "p": self.p}

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        if not train or self.p == 0.0:
            return x, None
        if rng is None:
            raise ValueError("train-mode dropout requires an rng")
        scale = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * scale, scale

    def backward(self, cache, gout: np.ndarray, need_input_grad: bool = True):
        scale = cache
        if scale is None:
            return {}, gout
        if gout.shape != scale.shape:
            raise ValueError(f"dropout backward shape mismatch: {gout.shape} vs {scale.shape}")
        return {}, gout * scale


class Flatten:
    params: dict[str, np.ndarray] = {}

    def spec(self) -> dict:
        return {"type": "flatten"}

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        if x.ndim < 2:
            raise ValueError(f"flatten expects a batched input, got shape {x.shape}")
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, gout: np.ndarray, need_input_grad: bool = True):
        x_shape = cache
        if gout.shape[0] != x_shape[0] or gout.size != int(np.prod(x_shape)):
            raise ValueError(f"flatten backward shape mismatch: {gout.shape} vs {x_shape}")
        return {}, gout.reshape(x_shape)


LAYER_TYPES = {"conv2d": Conv2D, "dense": Dense, "relu": ReLU, "dropout": Dropout, "flatten": Flatten}


class Network:
    """An ordered stack of layers with joint forward/backward passes."""

    def __init__(self, layers: list):
        self.layers = list(layers)

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        """Run the stack; returns (output, caches) with one cache per layer."""
        x = np.asarray(x, dtype=np.float64)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train=train, rng=rng)
            caches.append(cache)
        return x, caches

    def predict(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward(x, train=False)
        return y

    def backward(self, caches: list, gout: np.ndarray, need_input_grad: bool = False):
        """Backpropagate an output gradient through the stack.

        Returns (grads, input_gradient) where grads is a per-layer list of
        parameter-gradient dicts. The gradient with respect to the input is
        only computed when requested; the first layer otherwise skips it.
        """
        if len(caches) != len(self.layers):
            raise ValueError(
                f"cache list length {len(caches)} does not match {len(self.layers)} layers"
            )
        grads: list[dict] = [None] * len(self.layers)
        g = gout
        for i in range(len(self.layers) - 1, -1, -1):
            need = need_input_grad or i > 0
            grads[i], g = self.layers[i].backward(caches[i], g, need_input_grad=need)
        return grads, g

    def zero_like_grads(self) -> list[dict]:
        return [{k: np.zeros_like(v) for k, v in layer.params.items()} for layer in self.layers]

    def num_params(self) -> int:
        return sum(v.size for layer in self.layers for v in layer.params.values())

    def copy(self) -> "Network":
        clone = Network.from_specs([layer.spec() for layer in self.layers])
        for mine, theirs in zip(clone.layers, self.layers):
            for k, v in theirs.params.items():
                mine.params[k] = v.copy()
        return clone

    @staticmethod
    def from_specs(specs: list[dict]) -> "Network":
        layers = []
        for sp in specs:
            kind = sp["type"]
            if kind == "conv2d":
                layers.append(Conv2D(sp["in_channels"], sp["out_channels"], sp["kernel_size"]))
            elif kind == "dense":
                layers.append(Dense(sp["in_dim"], sp["out_dim"]))
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "dropout":
                layers.append(Dropout(sp["p"]))
            elif kind == "flatten":
                layers.append(Flatten())
            else:
                raise ValueError(f"unknown layer type {kind!r}")
        return Network(layers)

    def save(self, path) -> None:
        """Write weights: magic, version, JSON layer table, raw float64 blocks."""
        specs = []
        blobs = []
        for layer in self.layers:
            sp = layer.spec()
            sp["params"] = {}
            for name in sorted(layer.params):
                arr = layer.params[name]
                sp["params"][name] = list(arr.shape)
                blobs.append(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
            specs.append(sp)
        header = json.dumps(specs).encode("utf-8")
        with open(path, "wb") as f:
            f.write(WEIGHT_MAGIC)
            f.write(struct.pack("<II", WEIGHT_VERSION, len(header)))
            f.write(header)
            for blob in blobs:
                f.write(blob)

    @staticmethod
    def load(path) -> "Network":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != WEIGHT_MAGIC:
                raise ValueError(f"not a weight file: bad magic {magic!r}")
            version, header_len = struct.unpack("<II", f.read(8))
            if version != WEIGHT_VERSION:
                raise ValueError(f"unsupported weight file version {version}")
            specs = json.loads(f.read(header_len).decode("utf-8"))
            net = Network.from_specs(specs)
            for layer, sp in zip(net.layers, specs):
                for name in sorted(sp["params"]):
                    shape = tuple(sp["params"][name])
                    count = int(np.prod(shape)) if shape else 1
                    buf = f.read(count * 8)
                    if len(buf) != count * 8:
                        raise ValueError("weight file truncated")
                    layer.params[name] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
            trailing = f.read(1)
            if trailing:
                raise ValueError("weight file has trailing bytes")
        return net


def build_patch_network(out_dim: int = 2, dropout: float = 0.2, seed: int = 0) -> Network:
    """The patch embedding trunk.

    15x15x1 input -> conv 8@3x3 (valid, stride 1) -> ReLU -> dropout ->
    flatten (13*13*8 = 1352) -> dense 16 -> ReLU -> dropout -> dense 8 ->
    ReLU -> dense out_dim (linear).
    """
    rng = as_generator(seed)
    return Network([
        Conv2D(1, 8, 3, rng=rng),
        ReLU(),
        Dropout(dropout),
        Flatten(),
        Dense(13 * 13 * 8, 16, rng=rng),
        ReLU(),
        Dropout(dropout),
        Dense(16, 8, rng=rng),
        ReLU(),
        Dense(8, out_dim, rng=rng),
    ])


class RMSprop:
    """Running mean-square gradient optimizer.

    v <- rho * v + (1 - rho) * g^2;  theta <- theta - lr * g / (sqrt(v) + epsilon).
    """

    def __init__(self, lr: float = 1e-3, rho: float = 0.9, epsilon: float = 1e-8):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {rho}")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.lr = lr
        self.rho = rho
        self.epsilon = epsilon
        self.state: dict[tuple[int, str], np.ndarray] = {}

    def step(self, network: Network, grads: list[dict]) -> None:
        """Apply one update in place to every parameter of the network."""
        if len(grads) != len(network.layers):
            raise ValueError("gradient list does not match network layers")
        for i, (layer, layer_grads) in enumerate(zip(network.layers, grads)):
            for name, theta in layer.params.items():
                g = layer_grads[name]
                if g.shape != theta.shape:
                    raise ValueError(
                        f"gradient shape {g.shape} does not match parameter {theta.shape}"
                    )
                _check_finite(f"gradient of layer {i} param {name!r}", g)
                key = (i, name)
                v = self.state.get(key)
                if v is None:
                    v = np.zeros_like(theta)
                v *= self.rho
                v += (1.0 - self.rho) * g * g
                self.state[key] = v
                theta -= self.lr * g / (np.sqrt(v) + self.epsilon)
