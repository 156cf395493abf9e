"""Config-file reading for the CLI.

Config files are JSON or YAML mappings whose keys match the long CLI flag
names with dashes replaced by underscores (``baseline_variance``,
``master_seed``...). A run manifest is also accepted: its ``config`` section
is used, which makes every run reproducible from its own manifest.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            import yaml

            doc = yaml.safe_load(text) or {}
        else:
            doc = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    if "config" in doc and "outputs" in doc:
        doc = doc["config"]
    return doc


def parse_floats(text) -> list[float]:
    """``"0.1,1,10"`` or a list of numbers -> list of floats."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None
