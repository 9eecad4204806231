"""Dense ReLU networks with hand-written backprop and an Adam optimiser."""
from __future__ import annotations

import numpy as np


class DenseNet:
    """Fully connected network: ReLU hidden layers, linear or tanh output.

    With ``output="tanh"`` and an ``output_range`` of ``(low, high)`` the tanh
    output is mapped affinely onto that interval.
    """

    def __init__(self, sizes, output="linear", output_range=None, rng=None,
                 final_scale=1.0, final_bias=None, dtype=np.float64):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        if output not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = sizes
        self.output = output
        self.output_range = None if output_range is None else (float(output_range[0]),
                                                               float(output_range[1]))
        rng = rng if rng is not None else np.random.default_rng()
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, fan_out))
        self.weights[-1] *= final_scale
        self.biases[-1] *= final_scale
        if final_bias is not None:
            self.biases[-1][:] = final_bias
        self.dtype = np.dtype(dtype)
        self.weights = [W.astype(self.dtype) for W in self.weights]
        self.biases = [b.astype(self.dtype) for b in self.biases]
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def set_params(self, params):
        params = list(params)
        if len(params) != 2 * len(self.weights):
            raise ValueError("parameter list does not match architecture")
        for k, p in enumerate(params):
            target = self.weights[k // 2] if k % 2 == 0 else self.biases[k // 2]
            p = np.asarray(p, dtype=self.dtype)
            if p.shape != target.shape:
                raise ValueError(f"shape mismatch {p.shape} vs {target.shape}")
            target[...] = p

    def copy(self) -> "DenseNet":
        other = object.__new__(DenseNet)
        other.sizes = list(self.sizes)
        other.output = self.output
        other.output_range = self.output_range
        other.dtype = self.dtype
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def _squash(self, u):
        if self.output == "linear":
            return u
        t = np.tanh(u)
        if self.output_range is None:
            return t
        lo, hi = self.output_range
        return lo + (t + 1.0) * 0.5 * (hi - lo)

    def forward(self, x, cache=True) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {h.shape[1]}")
        acts = [h]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        y = self._squash(h)
        if cache:
            self._cache = (acts, y)
        return y[0] if single else y

    __call__ = forward

    @property
    def preactivation(self) -> np.ndarray:
        """Output-layer pre-activation of the cached forward pass."""
        if self._cache is None:
            raise RuntimeError("no cached forward pass")
        return self._cache[0][-1]

    def backward(self, upstream, preact_grad=None):
        """Gradients of ``sum(upstream * forward(x))`` for the cached input.

        ``preact_grad`` is an extra gradient added directly at the output
        pre-activation. Returns ``(param_grads, input_grad)`` where
        ``param_grads`` follows the ordering of :attr:`params`.
        """
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding forward() with cache=True")
        acts, y = self._cache
        g = np.asarray(upstream, dtype=self.dtype).reshape(y.shape)
        if self.output == "tanh":
            half = 1.0 if self.output_range is None else 0.5 * (self.output_range[1] - self.output_range[0])
            t = np.tanh(acts[-1])
            g = g * half * (1.0 - t * t)
        if preact_grad is not None:
            g = g + preact_grad
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (acts[k + 1] > 0.0)
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return grads, g

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "output": self.output,
            "output_range": self.output_range,
            "dtype": self.dtype.name,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d) -> "DenseNet":
        net = cls(d["sizes"], d["output"], d.get("output_range"), rng=np.random.default_rng(0),
                  dtype=d.get("dtype", "float64"))
        net.set_params([np.array(p, dtype=float)
                        for pair in zip(d["weights"], d["biases"]) for p in pair])
        return net


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> DenseNet:
    """Blend ``target`` toward ``source`` in place: t <- tau*s + (1-tau)*t."""
    if target.sizes != source.sizes or target.output != source.output:
        raise ValueError("soft_update needs identical architectures")
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s
    return target


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        """Descend along ``grads`` (in place on the parameter arrays)."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= corr * m / (np.sqrt(v) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}
