"""Training loop with validation-based early stopping."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .denoiser import NeuralDenoiser
from .metrics import mmd, sl_wasserstein
from .nn.optim import adam_step
from .sampling import sample_unconditional
from .schedule import DiffusionSchedule, forward_marginal, make_schedule

log = logging.getLogger(__name__)

# "auto": SL for purely spatial domains, CD-MMD when there is a time axis
EVAL_METRICS = ("auto", "sl_wasserstein", "cd_mmd")


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs_max: int = 5000
    batch_size: int = 128
    lr: float = 0.001
    weight_decay: float = 0.0001
    clip_norm: float = 2.0
    early_stop_samples: int = 100
    early_stop_patience: int = 50
    eval_metric: str = "auto"
    seed: int = 0
    # 0 picks the default cadence: every epoch, or every 10 above 1000 instances
    eval_every: int = 0
    # model and schedule
    T: int = 100
    schedule: str = "linear"
    d_model: int = 32
    heads: int = 4
    depth: int = 2
    components: int = 16

    def __post_init__(self):
        if self.eval_metric not in EVAL_METRICS:
            raise ValueError(f"eval_metric must be one of {EVAL_METRICS}")
        for name in ("epochs_max", "batch_size", "early_stop_samples", "early_stop_patience", "T"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "clip_norm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        """Parse ``key = value`` lines ('#' starts a comment); ``overrides`` win."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], val)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _coerce(type_name, val: str):
    name = type_name if isinstance(type_name, str) else type_name.__name__
    return {"int": int, "float": float, "str": str}[name](val)


@dataclass
class TrainResult:
    model: NeuralDenoiser
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_score: float = float("inf")
    final_score: float = float("nan")

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "bce", "nll", "val_metric"])
            for row in self.history:
                val = "" if row["val_metric"] is None else repr(row["val_metric"])
                w.writerow([row["epoch"], repr(row["bce"]), repr(row["nll"]), val])


def build_schedule(train_sets, config: TrainConfig) -> DiffusionSchedule:
    """Schedule whose noise rate matches the mean training cardinality."""
    domain = train_sets[0].domain
    mean_count = float(np.mean([len(x) for x in train_sets]))
    return make_schedule(config.T, config.schedule, max(mean_count, 1e-9), domain.volume)


def build_model(train_sets, config: TrainConfig) -> NeuralDenoiser:
    n_max = 2 * max(max(len(x) for x in train_sets), 1)
    return NeuralDenoiser(
        dim=train_sets[0].domain.dim, n_max=n_max, T=config.T, d_model=config.d_model,
        heads=config.heads, depth=config.depth, components=config.components,
        d_ff=2 * config.d_model, seed=config.seed,
    )


def sample_steps(rng: np.random.Generator, T: int, size: int) -> np.ndarray:
    """Diffusion steps drawn uniformly from {1, ..., T}."""
    return rng.integers(1, T + 1, size=size)


def resolve_eval_metric(config: TrainConfig, domain) -> str:
    if config.eval_metric != "auto":
        return config.eval_metric
    return "sl_wasserstein" if domain.ordered_axis is None else "cd_mmd"


def validation_score(model, schedule, val_sets, config: TrainConfig, rng) -> float:
    samples = sample_unconditional(model, schedule, rng, config.early_stop_samples, val_sets[0].domain)
    if resolve_eval_metric(config, val_sets[0].domain) == "sl_wasserstein":
        return sl_wasserstein(samples, val_sets)
    return mmd(samples, val_sets, "cd")


def train(dataset, val, config: TrainConfig, schedule: DiffusionSchedule = None,
          model: NeuralDenoiser = None) -> TrainResult:
    """Fit the denoiser; returns the best checkpoint seen on validation.

    ``dataset`` and ``val`` are point sets on the normalized domain.
    """
    if not dataset or not val:
        raise ValueError("train and validation splits must be nonempty")
    domain = dataset[0].domain
    if any(x.domain != domain for x in list(dataset) + list(val)):
        raise ValueError("all point sets must share one domain")
    if config.eval_metric == "cd_mmd" and domain.ordered_axis is None:
        raise ValueError("cd_mmd needs a domain with an ordered axis")
    schedule = schedule or build_schedule(dataset, config)
    model = model or build_model(dataset, config)
    if model.T != schedule.T:
        raise ValueError("model and schedule disagree on T")
    eval_every = config.eval_every or (1 if len(dataset) <= 1000 else 10)

    rng = np.random.default_rng(config.seed)
    result = TrainResult(model)
    best_params, since_best = None, 0
    n = len(dataset)
    for epoch in range(1, config.epochs_max + 1):
        perm = rng.permutation(n)
        sums = np.zeros(2)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            steps = sample_steps(rng, schedule.T, len(idx))
            X0s = [dataset[i] for i in idx]
            states = [forward_marginal(x, int(t), schedule, rng) for x, t in zip(X0s, steps)]
            model.store.zero_grad()
            total, bce, nll = model.batch_loss(X0s, states)
            if not np.isfinite(total.data):
                raise NumericError(f"non-finite loss at epoch {epoch} (bce={bce}, nll={nll})")
            total.backward()
            adam_step(model.store, lr=config.lr, weight_decay=config.weight_decay, clip_norm=config.clip_norm)
            sums += len(idx) * np.array([bce, nll])
        row = {"epoch": epoch, "bce": float(sums[0] / n), "nll": float(sums[1] / n), "val_metric": None}
        if epoch % eval_every == 0 or epoch == config.epochs_max:
            vrng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(epoch,)))
            score = validation_score(model, schedule, val, config, vrng)
            row["val_metric"] = score
            result.final_score = score
            if score < result.best_score:
                result.best_score, result.best_epoch = score, epoch
                best_params, since_best = model.store.snapshot(), 0
            else:
                since_best += 1
            log.info("epoch %d bce %.4f nll %.4f val %.4f", epoch, row["bce"], row["nll"], score)
        result.history.append(row)
        if since_best >= config.early_stop_patience:
            break
    if best_params is not None:
        model.store.restore(best_params)
    return result
