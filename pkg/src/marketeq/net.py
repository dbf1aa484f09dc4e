"""Feedforward allocation function x(b, g) > 0 with reverse-mode gradients.

A plain fully connected net on the concatenated contexts [b; g]: relu hidden
layers, a single softplus output so the allocation is strictly positive, all
arithmetic in float64.  Backprop and the adaptive-moment optimizer are written
out by hand; no autograd framework behind this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericFailure
from .market import softplus

CHECKPOINT_VERSION = 1


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class AllocationNet:
    """Weights and biases of the allocation network.

    `weights[i]` has shape (fan_in, fan_out); layer order is input -> hidden
    (depth of them, relu) -> scalar output (softplus).  Treat instances as
    owned by one trainer; forward passes are safe to share read-only.
    """

    context_dim: int
    hidden_depth: int
    hidden_width: int
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @classmethod
    def initialize(cls, context_dim: int, hidden_depth: int = 5, hidden_width: int = 256,
                   seed: int | np.random.SeedSequence = 0) -> "AllocationNet":
        """He-style init: N(0, 2/fan_in) weights, zero biases."""
        if context_dim < 1 or hidden_depth < 1 or hidden_width < 1:
            raise InvalidArgument("architecture dimensions must be >= 1")
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        gen = np.random.Generator(np.random.Philox(seed))
        dims = [2 * context_dim] + [hidden_width] * hidden_depth + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(gen.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(context_dim, hidden_depth, hidden_width, weights, biases)

    @property
    def input_dim(self) -> int:
        return 2 * self.context_dim

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    # ---- forward -----------------------------------------------------------

    def forward_pairs(self, inputs: np.ndarray) -> np.ndarray:
        """Outputs for a (rows, 2k) batch of concatenated [b; g] inputs; shape (rows,)."""
        y, _ = self._forward_cached(np.asarray(inputs, dtype=float), keep=False)
        return y

    def forward(self, b, g) -> float:
        b = np.asarray(b, dtype=float)
        g = np.asarray(g, dtype=float)
        if b.shape != (self.context_dim,) or g.shape != (self.context_dim,):
            raise InvalidArgument(
                f"contexts must have dimension {self.context_dim}, got {b.shape} and {g.shape}"
            )
        return float(self.forward_pairs(np.concatenate([b, g])[None, :])[0])

    def forward_batch(self, buyers: np.ndarray, goods: np.ndarray) -> np.ndarray:
        """Allocation matrix for M buyer contexts against m good contexts, shape (M, m)."""
        buyers = np.atleast_2d(np.asarray(buyers, dtype=float))
        goods = np.atleast_2d(np.asarray(goods, dtype=float))
        if buyers.shape[1] != self.context_dim or goods.shape[1] != self.context_dim:
            raise InvalidArgument("context dimension mismatch with network input")
        big, little = buyers.shape[0], goods.shape[0]
        inputs = np.empty((big * little, 2 * self.context_dim))
        inputs[:, : self.context_dim] = np.repeat(buyers, little, axis=0)
        inputs[:, self.context_dim:] = np.tile(goods, (big, 1))
        return self.forward_pairs(inputs).reshape(big, little)

    def _forward_cached(self, inputs, keep=True):
        if inputs.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise InvalidArgument(f"inputs must be (rows, {self.input_dim})")
        h = inputs
        pre_acts = []
        acts = [inputs]
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if not np.all(np.isfinite(z)):
                raise NumericFailure(f"non-finite pre-activation in layer {li}")
            if li == last:
                y = softplus(z[:, 0])
            else:
                h = np.maximum(z, 0.0)
                if keep:
                    pre_acts.append(z)
                    acts.append(h)
        if keep:
            pre_acts.append(z)
        return (y, (acts, pre_acts)) if keep else (y, None)

    # ---- backward ----------------------------------------------------------

    def backward(self, cache, grad_output: np.ndarray):
        """Parameter gradients of sum(grad_output * output) for a cached forward pass.

        Returns ([dW...], [db...]) matching self.weights / self.biases.
        """
        acts, pre_acts = cache
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        # d softplus(z) / dz = sigmoid(z)
        delta = (grad_output * _sigmoid(pre_acts[-1][:, 0]))[:, None]
        for li in range(len(self.weights) - 1, -1, -1):
            grad_w[li] = acts[li].T @ delta
            grad_b[li] = delta.sum(axis=0)
            if li > 0:
                delta = (delta @ self.weights[li].T) * (pre_acts[li - 1] > 0)
        return grad_w, grad_b

    # ---- flat parameter view (checkpoints, finite differences) -------------

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [arr.ravel() for pair in zip(self.weights, self.biases) for arr in pair]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise InvalidArgument(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[offset: offset + w.size].reshape(w.shape)
            offset += w.size
            b[...] = flat[offset: offset + b.size]
            offset += b.size

    # ---- checkpoints --------------------------------------------------------

    def save(self, path, optimizer: "AdamState | None" = None) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "context_dim": self.context_dim,
            "hidden_depth": self.hidden_depth,
            "hidden_width": self.hidden_width,
            "params": self.get_flat(),
        }
        if optimizer is not None:
            payload.update(
                opt_m=optimizer.m, opt_v=optimizer.v, opt_step=optimizer.step,
                opt_lr=optimizer.lr, opt_beta1=optimizer.beta1,
                opt_beta2=optimizer.beta2, opt_eps=optimizer.eps,
            )
        np.savez(path, **payload)

    @classmethod
    def load(cls, path):
        """Returns (net, optimizer state or None)."""
        with np.load(path) as blob:
            if int(blob["version"]) != CHECKPOINT_VERSION:
                raise InvalidArgument(f"unsupported checkpoint version {blob['version']}")
            net = cls.initialize(
                int(blob["context_dim"]), int(blob["hidden_depth"]), int(blob["hidden_width"])
            )
            net.set_flat(blob["params"])
            state = None
            if "opt_m" in blob:
                state = AdamState(
                    m=blob["opt_m"].copy(), v=blob["opt_v"].copy(), step=int(blob["opt_step"]),
                    lr=float(blob["opt_lr"]), beta1=float(blob["opt_beta1"]),
                    beta2=float(blob["opt_beta2"]), eps=float(blob["opt_eps"]),
                )
        return net, state


def loss_gradient(net: AllocationNet, inputs: np.ndarray, loss_fn):
    """Value and parameter gradient of a scalar loss of the network outputs.

    `loss_fn(outputs) -> (value, dvalue_doutputs)` closes over whatever market
    data it needs; this routine only owns the network part of the chain.
    Returns (value, (grad_weights, grad_biases)).
    """
    outputs, cache = net._forward_cached(np.asarray(inputs, dtype=float))
    value, grad_out = loss_fn(outputs)
    if not np.isfinite(value):
        raise NumericFailure("loss evaluated to a non-finite value")
    return value, net.backward(cache, np.asarray(grad_out, dtype=float))


@dataclass
class AdamState:
    """Flat first/second moment accumulators plus hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: AllocationNet, lr: float = 1e-4, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(net.n_params), v=np.zeros(net.n_params),
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, net: AllocationNet, grads) -> None:
    """One adaptive-moment descent step with bias correction; updates in place."""
    grad_w, grad_b = grads
    flat = np.concatenate([arr.ravel() for pair in zip(grad_w, grad_b) for arr in pair])
    if flat.shape != state.m.shape:
        raise InvalidArgument("gradient shape does not match optimizer state")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * flat
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * flat * flat
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    params = net.get_flat()
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    net.set_flat(params)


__all__ = ["AllocationNet", "AdamState", "adam_step", "loss_gradient", "CHECKPOINT_VERSION"]
