"""Plain-text ``key=value`` configuration files."""

from __future__ import annotations

from pathlib import Path

from pairtopk.errors import ConfigError


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def read_key_values(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_key_values(path.read_text(encoding="utf-8"), str(path))


def format_key_values(values: dict) -> str:
    return "".join(f"{k}={values[k]}\n" for k in sorted(values))
