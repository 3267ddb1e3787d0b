import json
import os

from django.core.management.base import CommandError

from fluxlab.conf import get_setting
from fluxlab.exceptions import SchemaError
from fluxlab.export import read_results

CONFIG_ERROR, NUMERICAL_ERROR, IO_ERROR = 2, 3, 4


def load_config(path):
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise CommandError(f"Cannot read {path}: {exc.strerror}", returncode=IO_ERROR) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", returncode=CONFIG_ERROR) from exc
    if not isinstance(raw, dict):
        raise CommandError(f"{path}:1:1: a configuration must be a JSON object", returncode=CONFIG_ERROR)
    return raw


def flatten_errors(errors, prefix=""):
    """DRF error detail as ``field.sub: message`` lines."""
    if isinstance(errors, dict):
        lines = []
        for key, value in errors.items():
            name = key if key != "non_field_errors" else ""
            lines += flatten_errors(value, f"{prefix}.{name}" if prefix and name else prefix or name)
        return lines
    if isinstance(errors, list):
        return [line for item in errors for line in flatten_errors(item, prefix)]
    return [f"{prefix}: {errors}" if prefix else str(errors)]


def resolve_threads(option):
    if option is not None:
        threads = option
    else:
        value = os.environ.get("WEHRLFLUX_THREADS")
        try:
            threads = int(value) if value else get_setting("RUN", "THREADS")
        except ValueError as exc:
            raise CommandError(f"WEHRLFLUX_THREADS={value!r} is not an integer.", returncode=CONFIG_ERROR) from exc
    if threads < 1:
        raise CommandError("Thread count must be at least 1.", returncode=CONFIG_ERROR)
    return threads


def load_results(path, model=None):
    try:
        return read_results(path, model)
    except SchemaError as exc:
        raise CommandError(str(exc), returncode=CONFIG_ERROR) from exc
    except OSError as exc:
        raise CommandError(f"Cannot read {path}: {exc.strerror or exc}", returncode=IO_ERROR) from exc
