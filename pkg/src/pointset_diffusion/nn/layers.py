"""Dense layers, MLPs, layer norm, masked multi-head self-attention and
sinusoidal embeddings. Layers register their weights in a ParameterStore
under dotted names and keep references to the stored tensors.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .optim import ParameterStore

MASKED_SCORE = -1e9


def sinusoidal_embed(k, d_model: int) -> np.ndarray:
    """Sinusoidal features of a nonnegative integer (or an array of them).

    Entry 2i is sin(k / 10000^(2i/d_model)) and entry 2i+1 the matching cosine.
    An array input of shape (B,) gives a (B, d_model) output.
    """
    if d_model % 2:
        raise ValueError("d_model must be even")
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    freq = 1.0 / 10000.0 ** (np.arange(0, d_model, 2) / d_model)
    angles = k[..., None] * freq
    out = np.empty(k.shape + (d_model,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


class Linear:
    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int, rng, zero: bool = False):
        if zero:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / (n_in + n_out)), size=(n_in, n_out))
        self.weight = store.add(f"{name}.weight", w)
        self.bias = store.add(f"{name}.bias", np.zeros(n_out))

    def __call__(self, x) -> Tensor:
        x = ag.as_tensor(x)
        if x.ndim == 1:
            return ag.reshape(ag.matmul(ag.reshape(x, (1, -1)), self.weight), (-1,)) + self.bias
        return ag.matmul(x, self.weight) + self.bias


class MLP:
    """ReLU MLP; ``sizes`` lists layer widths including input and output."""

    def __init__(self, store, name, sizes, rng, zero_last: bool = False):
        n = len(sizes) - 1
        self.layers = [
            Linear(store, f"{name}.{i}", sizes[i], sizes[i + 1], rng, zero=zero_last and i == n - 1)
            for i in range(n)
        ]

    def __call__(self, x) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ag.relu(x)
        return x


class LayerNorm:
    def __init__(self, store, name, d: int):
        self.gamma = store.add(f"{name}.gamma", np.ones(d))
        self.beta = store.add(f"{name}.beta", np.zeros(d))

    def __call__(self, x) -> Tensor:
        return ag.layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention:
    """Full self-attention over a padded batch of sets, with no positional
    encoding, so it is equivariant to permutations of the valid rows."""

    def __init__(self, store, name, d_model: int, heads: int, rng):
        if d_model % heads:
            raise ValueError(f"d_model={d_model} is not divisible by heads={heads}")
        self.heads = heads
        self.d_head = d_model // heads
        self.q = Linear(store, f"{name}.q", d_model, d_model, rng)
        self.k = Linear(store, f"{name}.k", d_model, d_model, rng)
        self.v = Linear(store, f"{name}.v", d_model, d_model, rng)
        self.out = Linear(store, f"{name}.out", d_model, d_model, rng)

    def _split(self, x: Tensor) -> Tensor:
        B, N, _ = x.shape
        return ag.transpose(ag.reshape(x, (B, N, self.heads, self.d_head)), (0, 2, 1, 3))

    def __call__(self, x, valid: np.ndarray = None) -> Tensor:
        """x: (B, N, d_model); valid: (B, N) boolean, False for padding."""
        x = ag.as_tensor(x)
        B, N, D = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(self.d_head))
        if valid is not None:
            bias = np.where(valid, 0.0, MASKED_SCORE)[:, None, None, :]
            scores = scores + bias
        attn = ag.softmax(scores, axis=-1)
        mixed = ag.reshape(ag.transpose(ag.matmul(attn, v), (0, 2, 1, 3)), (B, N, D))
        return self.out(mixed)


class EncoderBlock:
    """Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, store, name, d_model: int, heads: int, d_ff: int, rng):
        self.ln1 = LayerNorm(store, f"{name}.ln1", d_model)
        self.attn = MultiHeadAttention(store, f"{name}.attn", d_model, heads, rng)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d_model)
        self.ff = MLP(store, f"{name}.ff", [d_model, d_ff, d_model], rng)

    def __call__(self, x, valid=None) -> Tensor:
        x = x + self.attn(self.ln1(x), valid)
        return x + self.ff(self.ln2(x))


class SetEncoder:
    """Stack of encoder blocks followed by a final layer norm."""

    def __init__(self, store, name, d_model: int, heads: int, depth: int, d_ff: int, rng):
        self.blocks = [EncoderBlock(store, f"{name}.{i}", d_model, heads, d_ff, rng) for i in range(depth)]
        self.norm = LayerNorm(store, f"{name}.norm", d_model)

    def __call__(self, x, valid=None) -> Tensor:
        for block in self.blocks:
            x = block(x, valid)
        return self.norm(x)


def attention_encoder(points, heads: int, store: ParameterStore = None, rng=None, depth: int = 2) -> Tensor:
    """Encode one set of tokens (n, d_model) with a fresh randomly initialized encoder.

    Convenience for experiments; models build a :class:`SetEncoder` once and reuse it.
    """
    points = ag.as_tensor(points)
    n, d_model = points.shape
    enc = SetEncoder(store or ParameterStore(), "enc", d_model, heads, depth, 2 * d_model,
                     rng or np.random.default_rng(0))
    if n == 0:
        return Tensor(np.zeros((0, d_model)))
    return ag.reshape(enc(ag.reshape(points, (1, n, d_model))), (n, d_model))
