"""
Run manifests and the CSV/JSON writers used by every subcommand.

A CSV file is accompanied by <file>.manifest.json, and CSV on standard output
by a one-line manifest on standard error; a JSON document carries its
manifest under the "manifest" key. Floats are written with repr(), the
shortest string that reads back to the same binary64 value: up to 17
significant digits, fewer only when the value is exactly representable
with fewer (0.2 stays "0.2").
"""
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from robust_bandit import __version__

logger = logging.getLogger(__name__)


class RunManifest(BaseModel):
    """Everything needed to reproduce one CLI invocation."""

    command: str
    params: Optional[Dict[str, Any]] = None     # resolved model primitives
    options: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    version: str = __version__
    outputs: List[str] = Field(default_factory=list)
    checks: Dict[str, bool] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# ─── Value conversion ────────────────────────────────────────────────────────

def jsonable(value: Any) -> Any:
    """Convert dataclasses, numpy scalars and arrays to plain JSON values.

    Non-finite floats become None so the document stays strict JSON.
    """
    if is_dataclass(value) and not isinstance(value, type):
        return jsonable(asdict(value))
    if isinstance(value, BaseModel):
        return jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


# ─── Writers ─────────────────────────────────────────────────────────────────

def render_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, header has {len(columns)}")
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def render_json(payload: Dict[str, Any], manifest: RunManifest) -> str:
    doc = {**jsonable(payload), "manifest": jsonable(manifest)}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def render_manifest(manifest: RunManifest, indent: Optional[int] = 2) -> str:
    return json.dumps(jsonable(manifest), indent=indent, allow_nan=False) + "\n"


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def write_table(
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    manifest: RunManifest,
    out: Optional[Path],
) -> None:
    """
    Write a CSV table to out plus out.manifest.json. Without out the table goes
    to standard output and the manifest to standard error as one JSON line.
    """
    text = render_csv(columns, rows)
    if out is None:
        sys.stdout.write(text)
        sys.stderr.write(render_manifest(manifest, indent=None))
        return
    side = manifest_path(out)
    manifest.outputs = [str(out), str(side)]
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    side.write_text(render_manifest(manifest), encoding="utf-8")
    logger.info("wrote %s and %s", out, side)


def write_document(payload: Dict[str, Any], manifest: RunManifest, out: Optional[Path]) -> None:
    """Write a JSON document with the manifest embedded."""
    if out is not None:
        manifest.outputs = [str(out)]
    text = render_json(payload, manifest)
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    logger.info("wrote %s", out)
