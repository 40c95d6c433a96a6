"""Parameter storage, Adam with decoupled weight decay, global-norm clipping
and JSON checkpoints."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .autograd import Tensor, parameter

CHECKPOINT_SCHEMA = "psd-params/1"


class NonFiniteGradient(FloatingPointError):
    pass


class ParameterStore:
    """Named parameters plus Adam first/second moments for each."""

    def __init__(self):
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict = {}
        self.v: dict = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = parameter(value)
        self.params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def size(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def gradients(self) -> dict:
        return {k: (np.zeros_like(p.data) if p.grad is None else p.grad) for k, p in self.params.items()}

    def snapshot(self) -> dict:
        return {k: p.data.copy() for k, p in self.params.items()}

    def restore(self, values: dict) -> None:
        for k, p in self.params.items():
            if values[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {values[k].shape} vs {p.data.shape}")
            p.data = np.array(values[k], dtype=np.float64)

    def state_dict(self) -> dict:
        return {
            "schema": CHECKPOINT_SCHEMA,
            "params": {k: {"shape": list(p.data.shape), "values": p.data.ravel().tolist()}
                       for k, p in self.params.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        if state.get("schema") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported checkpoint schema {state.get('schema')!r}")
        entries = state["params"]
        missing = set(self.params) ^ set(entries)
        if missing:
            raise ValueError(f"checkpoint/parameter name mismatch: {sorted(missing)}")
        self.restore({k: np.asarray(e["values"], dtype=np.float64).reshape(e["shape"]) for k, e in entries.items()})


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict, clip_norm: float) -> tuple[dict, float]:
    """Scale all gradients jointly so their global L2 norm is at most ``clip_norm``."""
    norm = global_norm(grads)
    if clip_norm is None or norm <= clip_norm:
        return grads, norm
    scale = clip_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def adam_step(
    store: ParameterStore,
    grads: dict = None,
    lr: float = 1e-3,
    weight_decay: float = 1e-4,
    clip_norm: float = 2.0,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
) -> float:
    """One Adam update with decoupled weight decay; returns the pre-clip gradient norm.

    Gradients default to the ``.grad`` slots of the store's parameters.
    """
    if grads is None:
        grads = store.gradients()
    for k, g in grads.items():
        if g.shape != store[k].data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {store[k].data.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {k}")
    grads, norm = clip_by_global_norm(grads, clip_norm)
    b1, b2 = betas
    store.step += 1
    c1 = 1.0 - b1**store.step
    c2 = 1.0 - b2**store.step
    for k, g in grads.items():
        p = store[k]
        store.m[k] = b1 * store.m[k] + (1.0 - b1) * g
        store.v[k] = b2 * store.v[k] + (1.0 - b2) * g * g
        update = (store.m[k] / c1) / (np.sqrt(store.v[k] / c2) + eps)
        p.data = p.data - lr * (update + weight_decay * p.data)
    return norm
