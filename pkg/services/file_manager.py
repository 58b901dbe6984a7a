# services/file_manager.py

import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, Field

from config_helpers import VERSION

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "{:.12g}"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FORMAT.format(float(value))


def _aligned(columns: Mapping[str, Sequence]) -> List[np.ndarray]:
    arrays = [np.atleast_1d(np.asarray(v)) for v in columns.values()]
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {dict(zip(columns, map(len, arrays)))}")
    return arrays


def write_csv(columns: Mapping[str, Sequence], path: Path) -> Path:
    """One header row, one row per sample; floats in a fixed format."""
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = _aligned(columns)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(columns))
        for row in zip(*arrays):
            writer.writerow([_fmt(v) for v in row])
    logger.info("wrote %s", path)
    return path


def write_dat(columns: Mapping[str, Sequence], path: Path) -> Path:
    """Whitespace-separated columns with a '#' header, as gnuplot reads them."""
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = _aligned(columns)
    lines = ["# " + " ".join(columns)]
    lines.extend(" ".join(_fmt(v) for v in row) for row in zip(*arrays))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def write_json(model: BaseModel, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model.model_dump(mode="json"), f, indent=2)
    logger.info("wrote %s", path)
    return path


class RunManifest(BaseModel):
    """What produced a directory of outputs. Timestamps live here only."""

    command: str
    config_hash: str
    seed_base: int
    version: str = VERSION
    started: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str = ""
    outputs: List[str] = Field(default_factory=list)

    def record(self, path: Path) -> Path:
        self.outputs.append(path.name)
        return path


def write_manifest(manifest: RunManifest, output_dir: Path) -> Path:
    manifest.finished = datetime.now(timezone.utc).isoformat()
    return write_json(manifest, output_dir / "manifest.json")


def write_tables(tables: Dict[str, Dict[str, np.ndarray]], output_dir: Path, manifest: RunManifest) -> None:
    """Each table as <name>.csv and <name>.dat."""
    for name, columns in tables.items():
        manifest.record(write_csv(columns, output_dir / f"{name}.csv"))
        manifest.record(write_dat(columns, output_dir / f"{name}.dat"))
