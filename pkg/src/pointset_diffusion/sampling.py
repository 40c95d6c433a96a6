"""Reverse-chain sampling: unconditional generation and mask-conditional
generation, plus a task runner that spreads independent sampling jobs over
worker processes.

Randomness at reverse step t is drawn from a stream keyed by (root entropy,
t), so a chain can be replayed step by step.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Domain, LabeledState, Mask, PointSet, split_by_mask, superpose
from .posterior import posterior_sample
from .schedule import DiffusionSchedule, forward_marginal, sample_noise


class MaskViolation(ValueError):
    """Known points supplied for conditioning lie outside the mask."""


def _step_streams(rng: np.random.Generator, T: int):
    root = int(rng.integers(2**63))
    return lambda t: np.random.default_rng(np.random.SeedSequence(root, spawn_key=(t,)))


def _reverse(model, schedule, domain, num, rng, known: Optional[PointSet] = None, mask: Optional[Mask] = None):
    T = schedule.T
    stream = _step_streams(rng, T)
    noise_rng = stream(T + 1)
    latents = [sample_noise(schedule, domain, noise_rng) for _ in range(num)]
    for t in range(T, 0, -1):
        r = stream(t)
        recs = model.reconstruct(latents, t, r)
        if t == 1:
            outs = [rec.x0 for rec in recs]
            break
        nxt = []
        for x_t, rec in zip(latents, recs):
            k = rec.n_kept
            state = LabeledState(
                retained=rec.x0.subset(np.arange(k)),
                noise=x_t.subset(~rec.kept),
                t=t,
                source_idx=np.arange(k),
            )
            prev = posterior_sample(rec.x0, state, schedule, r).points
            if mask is not None:
                cond = forward_marginal(known, t - 1, schedule, r).points
                prev = superpose(split_by_mask(prev, mask)[1], split_by_mask(cond, mask)[0])
            nxt.append(prev)
        latents = nxt
    if mask is not None:
        outs = [split_by_mask(x, mask)[1] for x in outs]
    return outs


def sample_unconditional(model, schedule: DiffusionSchedule, rng: np.random.Generator, num: int = 1,
                         domain: Domain = None) -> list:
    """Generate ``num`` point sets, starting from noise and running T reverse steps.

    Points live on ``domain`` (default: the normalized box of the model's dimension).
    """
    if num < 1:
        raise ValueError("num must be >= 1")
    domain = domain or Domain.unit(model_dim(model))
    return _reverse(model, schedule, domain, num, rng)


def sample_conditional(model, schedule: DiffusionSchedule, X0_known: PointSet, C: Mask,
                       rng: np.random.Generator, num: int = 1) -> list:
    """Generate the complement region C'(X_0) given the points of X_0 inside C.

    At every reverse step the C-region of the latent is replaced by a fresh
    forward sample of the known points, and only the C'-region of the model's
    chain is carried over.
    """
    if len(X0_known) and not np.all(C(X0_known.points)):
        raise MaskViolation("known points must satisfy the conditioning mask")
    if num < 1:
        raise ValueError("num must be >= 1")
    return _reverse(model, schedule, X0_known.domain, num, rng, known=X0_known, mask=C)


def model_dim(model) -> int:
    if hasattr(model, "dim"):
        return model.dim
    return model.X0.domain.dim


@dataclass
class SampleTask:
    """One unit of work for :func:`sample_batch`.

    Without ``mask`` it draws ``num`` unconditional samples; with ``mask``
    it conditions on ``known``.
    """

    num: int = 1
    known: Optional[PointSet] = None
    mask: Optional[Mask] = None


def task_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_task(model, schedule, domain, seed, index, task: SampleTask) -> list:
    rng = task_rng(seed, index)
    if task.mask is None:
        return sample_unconditional(model, schedule, rng, task.num, domain)
    known = task.known if task.known is not None else PointSet.empty(domain)
    return sample_conditional(model, schedule, known, task.mask, rng, task.num)


_WORKER = {}


def _init_worker(model, schedule, domain, seed):
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)
    _WORKER.update(model=model, schedule=schedule, domain=domain, seed=seed)


def _worker_task(args):
    index, task = args
    w = _WORKER
    return _run_task(w["model"], w["schedule"], w["domain"], w["seed"], index, task)


def sample_batch(model, schedule: DiffusionSchedule, tasks, workers: int = 1, seed: int = 0,
                 domain: Domain = None) -> list:
    """Run independent sampling tasks, optionally in a process pool.

    Task i uses the RNG stream derived from (seed, i), so results do not
    depend on ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    domain = domain or Domain.unit(model_dim(model))
    tasks = [t if isinstance(t, SampleTask) else SampleTask(num=int(t)) for t in tasks]
    if workers == 1 or len(tasks) <= 1:
        return [_run_task(model, schedule, domain, seed, i, t) for i, t in enumerate(tasks)]
    ctx = _mp_context()
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_init_worker,
                             initargs=(model, schedule, domain, seed)) as pool:
        return list(pool.map(_worker_task, enumerate(tasks)))


def _mp_context():
    import multiprocessing as mp

    return mp.get_context("fork" if os.name == "posix" else "spawn")
