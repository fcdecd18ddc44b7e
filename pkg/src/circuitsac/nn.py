"""Dense feed-forward networks with explicit reverse-mode gradients and Adam."""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected net: rectified-linear hidden layers, linear output.

    Weights and biases are initialized uniformly in +-1/sqrt(fan_in). ``dtype``
    selects the parameter precision (float32 for training speed, float64 when
    gradients are checked against finite differences).
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator, dtype=np.float64):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(
                rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype)
            )
            self.biases.append(rng.uniform(-bound, bound, size=fan_out).astype(self.dtype))

    @property
    def in_size(self) -> int:
        return self.sizes[0]

    @property
    def out_size(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        """Live parameter arrays, interleaved as W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        dup = object.__new__(Mlp)
        dup.sizes = list(self.sizes)
        dup.dtype = self.dtype
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping the activations needed by :meth:`backward_cached`."""
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        if h.shape[1] != self.in_size:
            raise ValueError(f"input size {h.shape[1]} != expected {self.in_size}")
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                np.maximum(h, 0.0, out=h)
            acts.append(h)
        y = acts[-1]
        return (y[0] if squeeze else y), (acts, squeeze)

    def backward(self, x: np.ndarray, upstream: np.ndarray):
        """Gradients of sum_b <upstream_b, forward(x)_b> for every parameter and the input."""
        _, cache = self.forward_cached(x)
        return self.backward_cached(cache, upstream)

    def backward_cached(self, cache, upstream: np.ndarray):
        acts, squeeze = cache
        u = np.asarray(upstream, dtype=self.dtype)
        delta = u.reshape(1, -1) if squeeze else u
        if delta.shape != acts[-1].shape:
            raise ValueError(f"upstream shape {delta.shape} != output shape {acts[-1].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (acts[i] > 0)
        dx = delta[0] if squeeze else delta
        return grads, dx

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, vec: np.ndarray) -> None:
        offset = 0
        for p in self.parameters():
            p[...] = vec[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != len(vec):
            raise ValueError(f"flat vector length {len(vec)} != parameter count {offset}")


class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Bias-corrected moment update applied to ``params`` in place."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient lists do not match optimizer state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise ValueError("non-finite gradient passed to Adam")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_mlp(path, net: Mlp) -> None:
    """Versioned checkpoint: layer sizes plus row-major parameter arrays."""
    arrays = {"version": np.array(1), "sizes": np.array(net.sizes)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_mlp(path) -> Mlp:
    with np.load(path) as data:
        if int(data["version"]) != 1:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        sizes = [int(s) for s in data["sizes"]]
        net = object.__new__(Mlp)
        net.sizes = sizes
        net.weights = [data[f"w{i}"] for i in range(len(sizes) - 1)]
        net.biases = [data[f"b{i}"] for i in range(len(sizes) - 1)]
        net.dtype = net.weights[0].dtype
    return net
