"""Command-line interface: ``psd datagen | train | sample | evaluate | benchmark``.

Exit codes: 0 ok, 2 io, 3 mask, 4 usage (also bad metric/domain combinations),
5 numeric. Failures print one JSON line ``{"error": <class>, "message": ...}``
to stderr. Every successful run writes ``<output>.manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import Domain, DomainError, Mask, PointSet
from .datagen import KINDS, SyntheticSpec, generate
from .io import DatasetError, load_dataset, load_model, save_dataset, save_model
from .metrics import count_mae, counting_distance, mean_pairwise, mmd, ot_wasserstein, sl_wasserstein
from .nn.optim import NonFiniteGradient
from .sampling import MaskViolation, SampleTask, sample_batch
from .schedule import DiffusionSchedule
from .training import NumericError, TrainConfig, build_schedule, train

EXIT = {"io": 2, "mask": 3, "usage": 4, "domain": 4, "numeric": 5}
METRICS = ("sl", "mae", "cd", "wd", "mmd_wd", "mmd_cd")
SAMPLE_CHUNK = 10

log = logging.getLogger("psd")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _floats(s: str) -> list:
    return [float(v) for v in s.split(",")]


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out, command: str, config: dict, seed, outputs: list, timings: dict, extra=None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "argv": sys.argv[1:],
        "config": config,
        "seed": seed,
        "outputs": [str(p) for p in outputs],
        "hashes": {str(p): _sha256(p) for p in outputs if Path(p).exists()},
        "timings": timings,
    }
    manifest.update(extra or {})
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2))


def _schedule_summary(s: DiffusionSchedule) -> dict:
    return {"T": s.T, "noise_rate": s.noise_rate, "alpha_bar_1": float(s.alpha_bar[1]),
            "alpha_bar_T": float(s.alpha_bar[-1])}


def _load(path):
    try:
        return load_dataset(path)
    except FileNotFoundError as e:
        raise CliError("io", f"cannot read {path}: {e.strerror}") from e
    except DatasetError as e:
        raise CliError("io", str(e)) from e


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError as e:
        raise CliError("io", f"cannot read {path}: {e.strerror}") from e
    except (ValueError, KeyError) as e:
        raise CliError("io", f"bad model file {path}: {e}") from e


def cmd_datagen(args) -> None:
    t0 = time.perf_counter()
    lower = _floats(args.lower)
    upper = _floats(args.upper)
    if args.kind in ("hawkes_st", "pinwheel_hawkes") and args.ordered_axis is None:
        args.ordered_axis = 0
    domain = Domain(tuple(lower), tuple(upper), args.ordered_axis)
    params = {k: getattr(args, k) for k in ("rate", "expected_per_cluster", "width_frac", "mu", "alpha", "beta",
                                            "kernel_width", "num_arms") if getattr(args, k) is not None}
    spec = SyntheticSpec(args.kind, domain, args.num, args.seed, params)
    sets = generate(spec)
    save_dataset(args.out, domain, sets)
    _write_manifest(args.out, "datagen", {"kind": args.kind, "params": params, "domain": domain.to_dict(),
                                          "num": args.num}, args.seed, [args.out],
                    {"total_s": time.perf_counter() - t0})


def cmd_train(args) -> None:
    t0 = time.perf_counter()
    overrides = dict(seed=args.seed, epochs_max=args.epochs, T=args.steps, batch_size=args.batch_size,
                     eval_every=args.eval_every, eval_metric=args.eval_metric)
    try:
        if args.config:
            config = TrainConfig.from_file(args.config, **overrides)
        else:
            config = TrainConfig(**{k: v for k, v in overrides.items() if v is not None})
    except FileNotFoundError as e:
        raise CliError("io", f"cannot read {args.config}") from e
    except (ValueError, TypeError) as e:
        raise CliError("usage", str(e)) from e
    domain, train_raw = _load(args.data)
    vdomain, val_raw = _load(args.val)
    if vdomain != domain:
        raise CliError("domain", "training and validation files have different domains")
    if not train_raw or not val_raw:
        raise CliError("usage", "training and validation sets must be nonempty")
    if config.eval_metric == "cd_mmd" and domain.ordered_axis is None:
        raise CliError("domain", "cd_mmd needs a domain with an ordered axis")
    train_sets = [domain.normalize(x) for x in train_raw]
    val_sets = [domain.normalize(x) for x in val_raw]
    schedule = build_schedule(train_sets, config)
    try:
        result = train(train_sets, val_sets, config, schedule)
    except (NumericError, NonFiniteGradient) as e:
        raise CliError("numeric", str(e)) from e
    t_train = time.perf_counter() - t0
    save_model(args.out, result.model, schedule, domain)
    history = args.history or str(Path(args.out).with_suffix("")) + ".history.csv"
    result.write_history(history)
    cfg = {k: getattr(config, k) for k in config.__dataclass_fields__}
    _write_manifest(args.out, "train", cfg, config.seed, [args.out, history],
                    {"train_s": t_train, "total_s": time.perf_counter() - t0},
                    {"inputs": {args.data: _sha256(args.data), args.val: _sha256(args.val)},
                     "schedule": _schedule_summary(schedule), "best_epoch": result.best_epoch,
                     "best_score": result.best_score})


def _read_mask(path, domain: Domain) -> Mask:
    try:
        mask = Mask.from_json(json.loads(Path(path).read_text()))
    except FileNotFoundError as e:
        raise CliError("io", f"cannot read {path}") from e
    except (ValueError, KeyError, TypeError, DomainError) as e:
        raise CliError("mask", f"bad mask file {path}: {e}") from e
    if any(len(lo) != domain.dim for lo, _ in mask.boxes):
        raise CliError("mask", f"mask boxes must have {domain.dim} coordinates")
    return mask


def forecast_mask(domain: Domain, cutoff: float) -> Mask:
    """History mask: everything on the ordered axis up to ``cutoff`` is known."""
    if domain.ordered_axis is None:
        raise CliError("domain", "forecasting needs a domain with an ordered axis")
    upper = list(domain.upper)
    upper[domain.ordered_axis] = cutoff
    return Mask(((domain.lower, tuple(upper)),))


def cmd_sample(args) -> None:
    t0 = time.perf_counter()
    model, schedule, domain = _load_model(args.model)
    unit = domain.normalized()
    tasks = []
    mask = None
    if getattr(args, "cutoff", None) is not None:
        mask = forecast_mask(domain, args.cutoff)
    elif getattr(args, "mask", None):
        mask = _read_mask(args.mask, domain)
    if mask is not None:
        norm_mask = mask.transformed(domain)
        if args.known:
            kdomain, known_raw = _load(args.known)
            if kdomain != domain:
                raise CliError("domain", "known points use a different domain than the model")
        else:
            known_raw = [PointSet.empty(domain)]
        for k in known_raw:
            if args.command == "forecast":
                k = k.subset(mask(k.points)) if len(k) else k
            if len(k) and not np.all(mask(k.points)):
                raise CliError("mask", "known points must lie inside the conditioning mask")
            tasks.append(SampleTask(args.num, domain.normalize(k), norm_mask))
    else:
        if args.known:
            raise CliError("usage", "--known requires --mask")
        if args.num < 1:
            raise CliError("usage", "--num must be positive")
        full, rest = divmod(args.num, SAMPLE_CHUNK)
        tasks = [SampleTask(SAMPLE_CHUNK)] * full + ([SampleTask(rest)] if rest else [])
    workers = args.workers or os.cpu_count() or 1
    try:
        results = sample_batch(model, schedule, tasks, workers=workers, seed=args.seed, domain=unit)
    except MaskViolation as e:
        raise CliError("mask", str(e)) from e
    samples = [domain.denormalize(x) for chunk in results for x in chunk]
    save_dataset(args.out, domain, samples)
    outputs = [args.out]
    if args.svg:
        from .svg import write_svg

        write_svg(args.svg, samples[: args.svg_max], domain, mask)
        outputs.append(args.svg)
    _write_manifest(args.out, args.command, {"num": args.num, "mask": mask.to_json() if mask else None,
                                             "known": args.known, "workers": workers}, args.seed, outputs,
                    {"total_s": time.perf_counter() - t0},
                    {"model": {args.model: _sha256(args.model)}, "schedule": _schedule_summary(schedule)})


def _paired(a, b, fn):
    pairs = [(x, y) for x, y in zip(a, b) if len(x) and len(y)]
    if len(a) != len(b):
        raise CliError("usage", f"paired metrics need equally many sets ({len(a)} vs {len(b)})")
    if not pairs:
        raise CliError("usage", "no pair of nonempty sets to compare")
    return mean_pairwise([p[0] for p in pairs], [p[1] for p in pairs], fn)


def cmd_evaluate(args) -> None:
    t0 = time.perf_counter()
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in names if m not in METRICS]
    if unknown:
        raise CliError("usage", f"unknown metric(s) {unknown}; choose from {list(METRICS)}")
    domain, truth_raw = _load(args.data)
    if domain.ordered_axis is None and any(m in ("cd", "mmd_cd") for m in names):
        raise CliError("domain", "cd and mmd_cd need a domain with an ordered axis")
    if bool(args.model) == bool(args.samples):
        raise CliError("usage", "give exactly one of --model or --samples")
    if args.samples:
        sdomain, gen_raw = _load(args.samples)
        if sdomain != domain:
            raise CliError("domain", "samples and data use different domains")
        gen = [domain.normalize(x) for x in gen_raw]
    else:
        model, schedule, mdomain = _load_model(args.model)
        if mdomain != domain:
            raise CliError("domain", "model and data use different domains")
        num = args.num or len(truth_raw)
        full, rest = divmod(num, SAMPLE_CHUNK)
        tasks = [SampleTask(SAMPLE_CHUNK)] * full + ([SampleTask(rest)] if rest else [])
        chunks = sample_batch(model, schedule, tasks, workers=args.workers or os.cpu_count() or 1,
                              seed=args.seed, domain=domain.normalized())
        gen = [x for c in chunks for x in c]
    truth = [domain.normalize(x) for x in truth_raw]
    if not gen or not truth:
        raise CliError("usage", "both sides need at least one point set")
    rows = []
    for name in names:
        bw = None
        if name == "sl":
            value = sl_wasserstein(gen, truth)
        elif name == "mae":
            if len(gen) != len(truth):
                raise CliError("usage", "mae needs paired lists of equal length")
            value = count_mae(gen, truth)
        elif name == "wd":
            value = _paired(gen, truth, ot_wasserstein)
        elif name == "cd":
            if len(gen) != len(truth):
                raise CliError("usage", "cd needs paired lists of equal length")
            value = mean_pairwise(gen, truth, counting_distance)
        else:
            if name == "mmd_wd" and any(len(x) == 0 for x in gen + truth):
                raise CliError("usage", "mmd_wd is undefined for empty point sets")
            rep = mmd(gen, truth, name.split("_")[1], return_report=True)
            value, bw = rep.value, rep.bandwidth
        rows.append({"metric": name, "value": repr(float(value)), "n_a": len(gen), "n_b": len(truth),
                     "bandwidth": "" if bw is None else repr(bw), "seed": args.seed})
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["metric", "value", "n_a", "n_b", "bandwidth", "seed"])
        w.writeheader()
        w.writerows(rows)
    _write_manifest(args.out, "evaluate", {"metrics": names, "data": args.data, "samples": args.samples,
                                           "model": args.model}, args.seed, [args.out],
                    {"total_s": time.perf_counter() - t0})


def benchmark(model, schedule: DiffusionSchedule, domain: Domain, sizes, runs: int = 10, num: int = 10,
              seed: int = 0, workers: int = 1) -> list:
    """Median wall clock for ``num`` samples at each target size.

    The noise rate is recalibrated so that the noise set, and hence every
    latent, holds ``size`` points in expectation.
    """
    unit = domain.normalized()
    rows = []
    for size in sizes:
        sched = DiffusionSchedule(schedule.alpha_bar, schedule.beta_bar, size / unit.volume)
        times = []
        for r in range(runs):
            t0 = time.perf_counter()
            sample_batch(model, sched, [SampleTask(num)], workers=workers, seed=seed + r, domain=unit)
            times.append(time.perf_counter() - t0)
        rows.append({"size": size, "median_seconds": float(np.median(times))})
    return rows


def cmd_benchmark(args) -> None:
    t0 = time.perf_counter()
    model, schedule, domain = _load_model(args.model)
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = benchmark(model, schedule, domain, sizes, args.runs, args.num, args.seed)
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["size", "median_seconds"])
        w.writeheader()
        w.writerows(rows)
    _write_manifest(args.out, "benchmark", {"sizes": sizes, "runs": args.runs, "num": args.num}, args.seed,
                    [args.out], {"total_s": time.perf_counter() - t0})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="psd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("datagen", help="write a synthetic dataset")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--out", required=True)
    g.add_argument("--num", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lower", default="0,0")
    g.add_argument("--upper", default="1,1")
    g.add_argument("--ordered-axis", type=int, default=None)
    g.add_argument("--rate", type=float)
    g.add_argument("--expected-per-cluster", type=float)
    g.add_argument("--width-frac", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--kernel-width", type=float)
    g.add_argument("--num-arms", type=int)
    g.set_defaults(func=cmd_datagen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True)
    t.add_argument("--val", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--history")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--steps", type=int, help="diffusion steps T")
    t.add_argument("--batch-size", type=int)
    t.add_argument("--eval-every", type=int)
    t.add_argument("--eval-metric", choices=("auto", "sl_wasserstein", "cd_mmd"))
    t.set_defaults(func=cmd_train)

    for name, help_ in (("sample", "draw unconditional or mask-conditional samples"),
                        ("impute", "fill the complement of a mask given the known points"),
                        ("forecast", "continue histories past a cutoff on the ordered axis")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--model", required=True)
        s.add_argument("--num", type=int, default=10, help="samples (per known set when conditioning)")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)
        if name == "forecast":
            s.add_argument("--cutoff", type=float, required=True)
        else:
            s.add_argument("--mask", required=name == "impute",
                           help="JSON list of boxes {lower, upper} in raw coordinates")
        s.add_argument("--known", required=name != "sample",
                       help="dataset file with the known points inside the mask")
        s.add_argument("--workers", type=int, default=0, help="default: available cores")
        s.add_argument("--svg")
        s.add_argument("--svg-max", type=int, default=10)
        s.set_defaults(func=cmd_sample)

    e = sub.add_parser("evaluate", help="score samples or a model against data")
    src = e.add_argument_group("source")
    src.add_argument("--model")
    src.add_argument("--samples")
    e.add_argument("--data", required=True)
    e.add_argument("--metrics", default="sl,mmd_wd")
    e.add_argument("--num", type=int, default=0, help="samples to draw with --model (default: |data|)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="sampling runtime versus set size")
    b.add_argument("--model", required=True)
    b.add_argument("--sizes", default="100,1000")
    b.add_argument("--runs", type=int, default=10)
    b.add_argument("--num", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        args.func(args)
    except CliError as e:
        print(json.dumps({"error": e.kind, "message": str(e)}), file=sys.stderr)
        return EXIT[e.kind]
    except OSError as e:
        print(json.dumps({"error": "io", "message": str(e)}), file=sys.stderr)
        return EXIT["io"]
    except ValueError as e:
        kind = "domain" if isinstance(e, DomainError) else "usage"
        print(json.dumps({"error": kind, "message": str(e)}), file=sys.stderr)
        return EXIT[kind]
    except (FloatingPointError, NonFiniteGradient) as e:
        print(json.dumps({"error": "numeric", "message": str(e)}), file=sys.stderr)
        return EXIT["numeric"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
