"""Experiment manifests in INI-style ``key = value`` format.

Example::

    [experiment]
    problem = transport_diffusion_1d
    n_coarse = 16
    refinements = 4
    paths = 100
    seed = 20240101
    horizon = 1.0

    [richardson]
    k = 1
    power_step = 2

    [integrator]
    scheme = auto          ; auto | spectral | explicit | drift_implicit
    time_steps = auto      ; auto | <integer>

    [output]
    dir = results
    name = transport_k1
"""

from __future__ import annotations

import configparser
import os
import re

from .errors import ConfigError
from .harness import ExperimentConfig

OUT_ENV = "ACCELFD_OUT"

# section -> key -> (config field, converter)
SCHEMA = {
    "experiment": {
        "problem": ("problem", str),
        "n_coarse": ("n_coarse", int),
        "refinements": ("refinements", int),
        "paths": ("paths", int),
        "seed": ("seed", int),
        "horizon": ("horizon", float),
        "workers": ("workers", int),
    },
    "richardson": {
        "k": ("k", int),
        "power_step": ("power_step", int),
    },
    "integrator": {
        "scheme": ("scheme", str),
        "time_steps": ("time_steps", lambda v: v if v == "auto" else int(v)),
    },
    "output": {
        "dir": ("output_dir", str),
        "name": ("name", str),
    },
}


def _line_of(text: str, section: str, key=None) -> int:
    """1-based line of ``key`` in ``section`` (of the header if ``key`` is None)."""
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
        elif key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.I):
            return n
    return 0


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}] (line {_line_of(text, section)})")
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}, line {line}: unknown key {key!r} in [{section}]")
            name, conv = SCHEMA[section][key]
            try:
                values[name] = conv(raw.strip())
            except ValueError:
                raise ConfigError(f"{source}, line {line}: bad value {raw!r} for {section}.{key}") from None
    if "problem" not in values:
        raise ConfigError(f"{source}: [experiment] problem is required")
    values.setdefault("output_dir", os.environ.get(OUT_ENV, "."))
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
