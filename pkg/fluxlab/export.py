"""Results files: provenance header, streamed journal and the atomic final CSV.

A results file is a block of ``# key: value`` lines followed by a CSV table
whose columns follow the row schema of its model. Floats are written with 17
significant digits so a file read back reproduces every value bit for bit.
"""
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import pandas as pd
from rest_framework.renderers import JSONRenderer

from . import __version__
from .conf import get_setting
from .exceptions import SchemaError
from .serializers import DICKE_COLUMNS, KERR_COLUMNS, columns_for

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def config_digest(raw_config):
    canonical = json.dumps(raw_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def provenance(raw_config, model, **extra):
    metadata = {
        "schema_version": get_setting("RUN", "SCHEMA_VERSION"),
        "code_version": __version__,
        "config_sha256": config_digest(raw_config),
        "model": model,
    }
    metadata.update(extra)
    return metadata


def _format(value):
    return FLOAT_FORMAT % value if isinstance(value, float) else str(value)


class Journal:
    """Append-only JSON-lines log of finished rows, ``<output>.partial``."""

    def __init__(self, output):
        self.path = Path(f"{output}.partial")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("wb")
        self._renderer = JSONRenderer()

    def append(self, row):
        self._handle.write(self._renderer.render(row) + b"\n")
        self._handle.flush()

    def close(self):
        self._handle.close()

    @staticmethod
    def discard(output):
        Path(f"{output}.partial").unlink(missing_ok=True)


def results_frame(rows, model):
    control = "lambda" if model == "dicke" else "eps"
    frame = pd.DataFrame(list(rows), columns=list(columns_for(model)))
    return frame.sort_values(["N", control], kind="mergesort", ignore_index=True)


def write_results(path, rows, model, metadata):
    """Write header and rows to a temporary file beside ``path``, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = results_frame(rows, model)
    fd, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
            for key, value in metadata.items():
                handle.write(f"# {key}: {_format(value)}\n")
            frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    logger.info("Wrote %d rows to %s.", len(frame), path)
    return frame


def read_metadata(path):
    metadata = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            metadata[key.strip()] = value.strip()
    return metadata


def read_results(path, model=None):
    """(metadata, frame) of a results file, checked against its row schema."""
    metadata = read_metadata(path)
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    found = model or metadata.get("model") or (frame["model"].iloc[0] if "model" in frame and len(frame) else None)
    if found not in ("kerr", "cavity", "dicke"):
        raise SchemaError(f"{path}: cannot tell which model produced this file.")
    expected = list(DICKE_COLUMNS if found == "dicke" else KERR_COLUMNS)
    if list(frame.columns) != expected:
        raise SchemaError(f"{path}: columns {list(frame.columns)} do not match the {found} schema.")
    version = metadata.get("schema_version")
    if version is not None and int(version) != get_setting("RUN", "SCHEMA_VERSION"):
        raise SchemaError(f"{path}: schema version {version} is not supported.")
    if len(frame) and set(frame["model"]) != {found}:
        raise SchemaError(f"{path}: rows mix models {sorted(set(frame['model']))}.")
    metadata["model"] = found
    return metadata, frame
