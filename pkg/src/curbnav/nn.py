"""Minimal dense-network toolkit: MLP forward/backward, Adam, flat params.

float64 throughout; every forward caches what backward needs. Gradients are
exact (verified against central finite differences in the tests), and all
randomness flows through explicit seeds so training runs are repeatable
bit-for-bit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_grad(x):
    return expit(x)


class MLP:
    """Fully connected net with a smooth-rectifier nonlinearity on hidden layers.

    ``dims`` = [input, hidden..., output]; the output layer is linear.
    """

    def __init__(self, dims, seed: int = 0):
        self.dims = list(int(d) for d in dims)
        self.W: list = []
        self.b: list = []
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
            scale = np.sqrt(2.0 / fan_in)
            self.W.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def forward(self, x: np.ndarray):
        """Returns (output, cache). ``x`` is (batch, input_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        pre: list = []
        acts = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.W[i] + self.b[i]
            pre.append(z)
            h = softplus(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, (pre, acts)

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (grad_W, grad_b) lists matching self.W / self.b.
        """
        pre, acts = cache
        gW = [None] * self.n_layers
        gb = [None] * self.n_layers
        g = np.asarray(grad_out, dtype=np.float64)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                g = g * softplus_grad(pre[i])
            gW[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = g @ self.W[i].T
        return gW, gb

    def params(self) -> list:
        out = []
        for W, b in zip(self.W, self.b):
            out.append(W)
            out.append(b)
        return out

    def set_params(self, params) -> None:
        it = iter(params)
        for i in range(self.n_layers):
            self.W[i] = np.array(next(it), dtype=np.float64)
            self.b[i] = np.array(next(it), dtype=np.float64)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        out = []
        pos = 0
        for p in self.params():
            n = p.size
            out.append(vec[pos : pos + n].reshape(p.shape))
            pos += n
        if pos != vec.size:
            raise ValueError(f"flat vector has {vec.size} values, net needs {pos}")
        self.set_params(out)

    def copy(self) -> "MLP":
        dup = MLP.__new__(MLP)
        dup.dims = list(self.dims)
        dup.W = [W.copy() for W in self.W]
        dup.b = [b.copy() for b in self.b]
        return dup


class Adam:
    """Adaptive-moment optimizer over a list of parameter arrays."""

    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def grads_flat(net: MLP, gW, gb) -> np.ndarray:
    out = []
    for W, b in zip(gW, gb):
        out.append(W.ravel())
        out.append(b.ravel())
    return np.concatenate(out)
