"""
Report emission and loading.

A report is a directory of tables (CSV or JSON, one file per table) plus a
metadata.json. Everything is assembled in memory first and written by a single
writer into a staging directory, which replaces the target directory only once
every file is complete. A failed run therefore leaves no partial report behind.
Only an empty directory or an earlier output of this tool is ever replaced; the
working directory and anything holding a run input are refused.
"""
import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import orjson
import pandas as pd

from . import __version__
from .errors import ConfigError, IoError, SchemaError

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
METADATA_FILE = "metadata.json"
REPORT_VERSION = "1.0"
REPORT_KINDS = ("evaluate", "diagnostics", "compare", "synth")
FORMATS = ("csv", "json")
JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


@dataclass
class Report:
    """Named tables plus metadata; `kind` is evaluate, diagnostics, compare or synth."""

    kind: str
    metadata: dict
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    format: str = "csv"

    def table(self, name: str) -> Optional[pd.DataFrame]:
        return self.tables.get(name)


def _json_default(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (pd.Timestamp, datetime)):
        return value.isoformat()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def dumps(payload) -> bytes:
    return orjson.dumps(payload, option=JSON_OPTIONS, default=_json_default)


def _table_bytes(frame: pd.DataFrame, fmt: str) -> bytes:
    if fmt == "csv":
        return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n").encode()
    rows = frame.replace({np.nan: None}).to_dict(orient="records")
    return dumps(rows)


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _is_tool_output(directory: Path) -> bool:
    try:
        metadata = orjson.loads((directory / METADATA_FILE).read_bytes())
    except (OSError, orjson.JSONDecodeError):
        return False
    return isinstance(metadata, dict) and metadata.get("kind") in REPORT_KINDS and "created_at" in metadata


def check_output_dir(out_dir, inputs=()):
    """Raises ConfigError unless `out_dir` may be replaced by a fresh output."""
    target = Path(out_dir).resolve()
    cwd = Path.cwd().resolve()
    if target == cwd or target in cwd.parents:
        raise ConfigError(f"Output directory {out_dir} is or contains the working directory")
    for path in inputs:
        if path is None:
            continue
        source = Path(path).resolve()
        if target == source or target in source.parents:
            raise ConfigError(f"Output directory {out_dir} holds the run input {path}")
    if not target.exists():
        return
    if not target.is_dir():
        raise ConfigError(f"Output path {out_dir} exists and is not a directory")
    if any(target.iterdir()) and not _is_tool_output(target):
        raise ConfigError(f"Output directory {out_dir} holds files this tool did not write; choose another")


@contextmanager
def staged_directory(out_dir, inputs=()):
    """Yields an empty staging directory that replaces `out_dir` when the block succeeds."""
    out_dir = Path(out_dir)
    check_output_dir(out_dir, inputs)
    try:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    except OSError as e:
        raise IoError(f"Cannot create output directory next to {out_dir}: {e}") from e
    try:
        yield staging
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(staging, out_dir)
    except OSError as e:
        shutil.rmtree(staging, ignore_errors=True)
        raise IoError(f"Could not write to {out_dir}: {e}") from e
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def write_report(report: Report, out_dir, inputs=()) -> Path:
    """Writes every table and metadata.json; returns the final directory. `inputs` must survive the write."""
    if report.format not in FORMATS:
        raise SchemaError(f"Unknown report format '{report.format}' (expected csv or json)")
    metadata = {
        **report.metadata,
        "kind": report.kind,
        "format": report.format,
        "version": REPORT_VERSION,
        "package_version": __version__,
        "tables": sorted(report.tables),
        "created_at": timestamp(),
    }
    with staged_directory(out_dir, inputs) as staging:
        for name, frame in sorted(report.tables.items()):
            (staging / f"{name}.{report.format}").write_bytes(_table_bytes(frame, report.format))
        (staging / METADATA_FILE).write_bytes(dumps(metadata))
    logger.info(f"Report written to {out_dir} ({len(report.tables)} tables)")
    return Path(out_dir)


def load_report(path) -> Report:
    path = Path(path)
    meta_path = path / METADATA_FILE
    if not meta_path.is_file():
        raise IoError(f"{path} is not a report directory (no {METADATA_FILE})")
    try:
        metadata = orjson.loads(meta_path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise SchemaError(f"{meta_path}: unreadable metadata ({e})") from e

    fmt = metadata.get("format", "csv")
    tables = {}
    for name in metadata.get("tables", []):
        table_path = path / f"{name}.{fmt}"
        if not table_path.is_file():
            raise IoError(f"Report table missing: {table_path}")
        if fmt == "csv":
            tables[name] = pd.read_csv(table_path)
        else:
            tables[name] = pd.DataFrame(orjson.loads(table_path.read_bytes()))
    return Report(kind=metadata.get("kind", ""), metadata=metadata, tables=tables, format=fmt)
