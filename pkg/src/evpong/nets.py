"""Small fully-connected networks in numpy with hand-written backprop.

Float64 throughout so analytic gradients can be checked against central
finite differences to tight tolerances.
"""

from __future__ import annotations

import numpy as np


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


class MLP:
    """Input -> two ReLU hidden layers -> linear or tanh output.

    Parameters are a flat list [W1, b1, W2, b2, W3, b3]; ``backward``
    returns gradients in the same layout plus the input gradient so a critic
    can be chained through its action input.
    """

    FINAL_INIT = 3e-3  # small output-layer init keeps tanh heads unsaturated

    def __init__(self, in_dim: int, hidden: int, out_dim: int,
                 out_activation: str, rng: np.random.Generator):
        if out_activation not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {out_activation!r}")
        self.dims = (in_dim, hidden, hidden, out_dim)
        self.out_activation = out_activation
        self.params: list[np.ndarray] = []
        last = len(self.dims) - 2
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bound = self.FINAL_INIT if i == last else 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, fan_out))

    def forward(self, x: np.ndarray):
        w1, b1, w2, b2, w3, b3 = self.params
        z1 = x @ w1 + b1
        h1 = relu(z1)
        z2 = h1 @ w2 + b2
        h2 = relu(z2)
        z3 = h2 @ w3 + b3
        out = np.tanh(z3) if self.out_activation == "tanh" else z3
        cache = (x, z1, h1, z2, h2, out)
        return out, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of sum(grad_out * out) w.r.t. params and input."""
        x, z1, h1, z2, h2, out = cache
        w1, _b1, w2, _b2, w3, _b3 = self.params
        if self.out_activation == "tanh":
            dz3 = grad_out * (1.0 - out * out)
        else:
            dz3 = grad_out
        dw3 = h2.T @ dz3
        db3 = dz3.sum(axis=0)
        dh2 = dz3 @ w3.T
        dz2 = dh2 * (z2 > 0)
        dw2 = h1.T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ w2.T
        dz1 = dh1 * (z1 > 0)
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        dx = dz1 @ w1.T
        return [dw1, db1, dw2, db2, dw3, db3], dx

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for k, p in enumerate(self.params):
            self.params[k] = flat[i : i + p.size].reshape(p.shape).copy()
            i += p.size
        if i != flat.size:
            raise ValueError(f"flat vector size {flat.size} != parameter count {i}")

    def clone(self) -> "MLP":
        dup = object.__new__(MLP)
        dup.dims = self.dims
        dup.out_activation = self.out_activation
        dup.params = [p.copy() for p in self.params]
        return dup


class Adam:
    """Adam optimizer over a list of parameter arrays."""

    def __init__(self, shapes, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def soft_update(target: MLP, source: MLP, tau: float) -> None:
    """Polyak averaging: target <- tau * source + (1 - tau) * target."""
    for pt, ps in zip(target.params, source.params):
        pt *= 1.0 - tau
        pt += tau * ps
