"""Experiment configuration: INI-style sections mapped onto dataclasses.

A config file has one section per dataclass, e.g. ``[snn]`` or ``[toy2d]``.
Command-line overrides are ``key=value`` or ``section.key=value``.  Unknown
sections or keys are rejected so that typos never pass silently.
"""

from __future__ import annotations

import configparser
import dataclasses
import subprocess
from pathlib import Path
from typing import Any

from . import __version__


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, current: Any, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(raw)
            return low in _TRUE
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _apply(obj, section: str, items) -> Any:
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in items:
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}")
        changes[key] = _coerce(raw, getattr(obj, key), f"{section}.{key}")
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load(sections: dict[str, Any], path: str | Path | None = None, overrides=()) -> dict[str, Any]:
    """Resolve ``sections`` (name -> default dataclass instance) from a file and overrides."""
    out = dict(sections)
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except configparser.Error as e:
            raise ConfigError(f"malformed config {path}: {e}") from None
        for name in parser.sections():
            if name not in out:
                raise ConfigError(f"unknown section [{name}]")
            out[name] = _apply(out[name], name, parser.items(name))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must be key=value, got {item!r}")
        section, dot, field = key.strip().rpartition(".")
        if not dot:
            owners = [s for s, obj in out.items() if field in {f.name for f in dataclasses.fields(obj)}]
            if len(owners) != 1:
                raise ConfigError(f"unknown key {field}" if not owners else f"ambiguous key {field}")
            section = owners[0]
        if section not in out:
            raise ConfigError(f"unknown section [{section}]")
        out[section] = _apply(out[section], section, [(field, value)])
    return out


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+g{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def dump(sections: dict[str, Any], command: str) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {"command": command, "version": version_string()}
    for name, obj in sections.items():
        parser[name] = {k: str(v) for k, v in dataclasses.asdict(obj).items()}
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in parser[name].items()]
        lines.append("")
    return "\n".join(lines)


def write_resolved(out_dir: str | Path, sections: dict[str, Any], command: str) -> Path:
    path = Path(out_dir) / "config.resolved.ini"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump(sections, command))
    return path
