"""Minimal reverse-mode dense networks and optimizers.

Every network exposes ``params`` (a list of arrays updated in place by the
optimizers), ``forward(x)`` and ``vjp(x)``.  ``vjp`` returns the output
together with a pullback mapping an output cotangent to
``(param_grads, input_grad)``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Adam",
    "ConstantNet",
    "DenseNet",
    "PermEquivariantNet",
    "cosine_schedule",
    "exponential_schedule",
    "gelu",
    "gelu_grad",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)``."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(x.dtype)


def identity(x: np.ndarray) -> np.ndarray:
    return x


def identity_grad(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "gelu": (gelu, gelu_grad),
    "relu": (relu, relu_grad),
    "identity": (identity, identity_grad),
}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class DenseNet:
    """Fully connected network; the activation is skipped after the last layer."""

    def __init__(
        self,
        widths: Sequence[int],
        activation: str = "gelu",
        rng: np.random.Generator | None = None,
    ):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.widths = tuple(int(w) for w in widths)
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            self.params.append(glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.vjp(x, need_pullback=False)[0]

    __call__ = forward

    def vjp(self, x: np.ndarray, need_pullback: bool = True):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.widths[0]:
            raise ValueError(f"expected input width {self.widths[0]}, got {x.shape[-1]}")
        act, act_grad = ACTIVATIONS[self.activation]
        n_layers = len(self.params) // 2
        inputs, pre = [], []
        h = x
        for layer in range(n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            h = act(z) if layer < n_layers - 1 else z
        if not need_pullback:
            return h, None

        def pullback(dy: np.ndarray):
            grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
            g = np.asarray(dy, dtype=np.float64)
            for layer in range(n_layers - 1, -1, -1):
                if layer < n_layers - 1:
                    g = g * act_grad(pre[layer])
                W = self.params[2 * layer]
                a = inputs[layer]
                grads[2 * layer] = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                grads[2 * layer + 1] = g.reshape(-1, g.shape[-1]).sum(axis=0)
                g = g @ W.T
            return grads, g

        return h, pullback

    def backward(self, x: np.ndarray, dy: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients of ``<dy, forward(x)>``."""
        return self.vjp(x)[1](dy)[0]


class PermEquivariantNet:
    """Stack of set layers ``x -> x W_self + mean(x) W_mean + b`` acting on ``(..., n, c)``.

    Equivariant to permutations of the set axis (second to last).  With
    ``channels=(1, 23, 23, 23, 1)`` this has 2278 parameters.
    """

    def __init__(
        self,
        channels: Sequence[int] = (1, 23, 23, 23, 1),
        activation: str = "gelu",
        rng: np.random.Generator | None = None,
    ):
        self.channels = tuple(int(c) for c in channels)
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for c_in, c_out in zip(self.channels[:-1], self.channels[1:]):
            # the self and mean weights share a layer, so they split its fan-in
            self.params.append(glorot_uniform(rng, 2 * c_in, c_out, (c_in, c_out)))
            self.params.append(glorot_uniform(rng, 2 * c_in, c_out, (c_in, c_out)))
            self.params.append(np.zeros(c_out))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.vjp(x, need_pullback=False)[0]

    __call__ = forward

    def vjp(self, x: np.ndarray, need_pullback: bool = True):
        x = np.asarray(x, dtype=np.float64)
        act, act_grad = ACTIVATIONS[self.activation]
        n_layers = len(self.params) // 3
        inputs, means, pre = [], [], []
        h = x
        for layer in range(n_layers):
            Ws, Wm, b = self.params[3 * layer : 3 * layer + 3]
            m = h.mean(axis=-2, keepdims=True)
            inputs.append(h)
            means.append(m)
            z = h @ Ws + m @ Wm + b
            pre.append(z)
            h = act(z) if layer < n_layers - 1 else z
        if not need_pullback:
            return h, None
        set_size = x.shape[-2]

        def pullback(dy: np.ndarray):
            grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
            g = np.asarray(dy, dtype=np.float64)
            for layer in range(n_layers - 1, -1, -1):
                if layer < n_layers - 1:
                    g = g * act_grad(pre[layer])
                Ws, Wm, _ = self.params[3 * layer : 3 * layer + 3]
                a, m = inputs[layer], means[layer]
                gsum = g.sum(axis=-2, keepdims=True)
                grads[3 * layer] = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                grads[3 * layer + 1] = m.reshape(-1, m.shape[-1]).T @ gsum.reshape(-1, g.shape[-1])
                grads[3 * layer + 2] = g.reshape(-1, g.shape[-1]).sum(axis=0)
                g = g @ Ws.T + (gsum @ Wm.T) / set_size
            return grads, g

        return h, pullback

    def backward(self, x: np.ndarray, dy: np.ndarray) -> list[np.ndarray]:
        return self.vjp(x)[1](dy)[0]


class ConstantNet:
    """Input-independent output: a degree-0 polynomial coefficient function."""

    def __init__(self, values, n_inputs: int | None = None):
        self.params = [np.array(values, dtype=np.float64).reshape(-1)]
        self.n_inputs = n_inputs

    @property
    def n_params(self) -> int:
        return self.params[0].size

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        return np.broadcast_to(self.params[0], x.shape[:-1] + self.params[0].shape).copy()

    __call__ = forward

    def vjp(self, x: np.ndarray, need_pullback: bool = True):
        y = self.forward(x)

        def pullback(dy):
            dy = np.asarray(dy)
            return [dy.reshape(-1, dy.shape[-1]).sum(axis=0)], np.zeros(np.shape(x))

        return y, pullback


def cosine_schedule(peak: float, total_steps: int) -> Callable[[int], float]:
    """Cosine annealing from ``peak`` at step 0 to 0 at ``total_steps``."""
    total = max(int(total_steps), 1)

    def lr(step: int) -> float:
        t = min(step, total) / total
        return 0.5 * peak * (1.0 + math.cos(math.pi * t))

    return lr


def exponential_schedule(lr0: float, rate: float = 0.999, every: int = 1) -> Callable[[int], float]:
    """``lr0 * rate**(step // every)``."""

    def lr(step: int) -> float:
        return lr0 * rate ** (step // every)

    return lr


class Adam:
    """Adam with optional decoupled weight decay (AdamW when ``weight_decay > 0``).

    Updates ``params`` in place; the learning rate comes from ``schedule(step)``.
    """

    def __init__(
        self,
        params: list[np.ndarray],
        schedule: Callable[[int], float] | float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.schedule = schedule if callable(schedule) else (lambda step, lr=float(schedule): lr)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    @classmethod
    def adamw(cls, params, schedule, weight_decay: float = 1e-2, **kw) -> "Adam":
        return cls(params, schedule, weight_decay=weight_decay, **kw)

    @property
    def lr(self) -> float:
        return self.schedule(self.t)

    def step(self, grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        lr = self.schedule(self.t)
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay:
                p *= 1.0 - lr * self.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return self.params
