"""Dense layers with hand-written reverse mode, plus an Adam optimizer.

Everything works on row-major batches: inputs are ``(batch, features)``; a
1-D input is treated as a batch of one and returned 1-D.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "identity")


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(y: np.ndarray, grad: np.ndarray, kind: str) -> np.ndarray:
    """Chain ``grad`` through the activation, given its output ``y``."""
    if kind == "tanh":
        return grad * (1.0 - y * y)
    if kind == "identity":
        return grad
    raise ValueError(f"unknown activation {kind!r}")


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray | None
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2:
            raise ValueError("weight must be a matrix")
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match "
                             f"{self.weight.shape[0]} outputs")

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int, n_out: int,
             activation: str = "tanh", bias: bool = True) -> DenseLayer:
        return cls(glorot(rng, n_out, n_in), np.zeros(n_out) if bias else None, activation)

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.weight.T
        if self.bias is not None:
            z = z + self.bias
        return activate(z, self.activation)

    def backward(self, x: np.ndarray, y: np.ndarray,
                 grad_y: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients w.r.t. (weight[, bias]) and the input, for 2-D ``x``/``y``."""
        gz = activation_grad(y, grad_y, self.activation)
        grads = [gz.T @ x]
        if self.bias is not None:
            grads.append(gz.sum(axis=0))
        return grads, gz @ self.weight


@dataclass
class Tape:
    """Intermediates recorded by :meth:`Mlp.forward`; ``values[k]`` feeds layer k."""

    owner: Mlp
    values: list[np.ndarray]
    squeeze: bool = False


class TapeError(ValueError):
    pass


@dataclass
class Mlp:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator,
             hidden: str = "tanh", output: str = "identity") -> Mlp:
        n = len(sizes) - 1
        return cls([DenseLayer.init(rng, sizes[k], sizes[k + 1],
                                    hidden if k < n - 1 else output)
                    for k in range(n)])

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def _check_input(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"expected input with {self.n_in} features, got shape {x.shape}")
        return x, squeeze

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h, squeeze = self._check_input(x)
        for layer in self.layers:
            h = layer(h)
        return h[0] if squeeze else h

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Tape]:
        h, squeeze = self._check_input(x)
        values = [h]
        for layer in self.layers:
            h = layer(h)
            values.append(h)
        return (h[0] if squeeze else h), Tape(self, values, squeeze)

    def backward(self, tape: Tape, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Return (parameter gradients in :meth:`parameters` order, input gradient)."""
        if tape.owner is not self:
            raise TapeError("tape was recorded by a different network")
        g = np.asarray(grad_out, dtype=float)
        if tape.squeeze:
            g = g[None, :]
        if g.shape != tape.values[-1].shape:
            raise TapeError(f"output gradient shape {g.shape} does not match "
                            f"recorded output {tape.values[-1].shape}")
        per_layer: list[list[np.ndarray]] = []
        for k in range(len(self.layers) - 1, -1, -1):
            grads, g = self.layers[k].backward(tape.values[k], tape.values[k + 1], g)
            per_layer.append(grads)
        flat = [p for grads in reversed(per_layer) for p in grads]
        return flat, (g[0] if tape.squeeze else g)


@dataclass
class OptimizerState:
    """Adam accumulators; ``first``/``second`` mirror the parameter list."""

    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, lr, beta1, beta2, eps)


def optimizer_step(params: list[np.ndarray], grads: list[np.ndarray],
                   state: OptimizerState) -> None:
    """Adam update with bias correction, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first, state.second):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
