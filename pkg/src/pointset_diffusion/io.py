"""Dataset and model files.

Dataset: JSON Lines. The first line is the header
``{"dim": d, "lower": [...], "upper": [...], "ordered_axis": null | i}``;
every further line is one record ``{"points": [[c1, ..., cd], ...]}`` in raw
(unnormalized) coordinates. Floats are written with Python's shortest
round-trip repr, so save/load is bitwise exact.

Model: a single JSON object bundling the schema tag, raw domain, schedule
arrays and the denoiser's hyperparameters and parameters.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import Domain, DomainError, PointSet, SimplicityError
from .denoiser import NeuralDenoiser
from .schedule import DiffusionSchedule

MODEL_SCHEMA = "psd-model/1"


class DatasetError(ValueError):
    pass


def save_dataset(path, domain: Domain, sets) -> None:
    path = Path(path)
    with path.open("w") as f:
        f.write(json.dumps(domain.to_dict()) + "\n")
        for X in sets:
            if X.domain != domain:
                raise DomainError("all point sets must live on the dataset domain")
            f.write(json.dumps({"points": X.points.tolist()}) + "\n")


def load_dataset(path) -> tuple:
    """Read a dataset file; returns (domain, list of PointSet)."""
    path = Path(path)
    with path.open() as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].strip():
        raise DatasetError(f"{path}:1: missing header line")
    try:
        domain = Domain.from_dict(json.loads(lines[0]))
    except (ValueError, KeyError, TypeError) as e:
        raise DatasetError(f"{path}:1: bad header: {e}") from e
    sets = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pts = np.asarray(rec["points"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as e:
            raise DatasetError(f"{path}:{lineno}: malformed record: {e}") from e
        if pts.size == 0:
            pts = np.zeros((0, domain.dim))
        if pts.ndim != 2 or pts.shape[1] != domain.dim:
            raise DatasetError(f"{path}:{lineno}: expected points of dimension {domain.dim}")
        outside = ~domain.contains(pts)
        if outside.any():
            bad = pts[np.argmax(outside)].tolist()
            raise DatasetError(f"{path}:{lineno}: point {bad} lies outside the domain")
        try:
            sets.append(PointSet.ingest(pts, domain))
        except (DomainError, SimplicityError) as e:
            raise DatasetError(f"{path}:{lineno}: {e}") from e
    return domain, sets


def save_model(path, model: NeuralDenoiser, schedule: DiffusionSchedule, domain: Domain) -> None:
    blob = {
        "schema": MODEL_SCHEMA,
        "domain": domain.to_dict(),
        "schedule": schedule.to_dict(),
        "denoiser": model.to_dict(),
    }
    Path(path).write_text(json.dumps(blob))


def load_model(path) -> tuple:
    """Returns (model, schedule, raw domain)."""
    blob = json.loads(Path(path).read_text())
    if blob.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {blob.get('schema')!r}")
    return (
        NeuralDenoiser.from_dict(blob["denoiser"]),
        DiffusionSchedule.from_dict(blob["schedule"]),
        Domain.from_dict(blob["domain"]),
    )
