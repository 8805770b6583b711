"""Run configuration files and run manifests.

Configs are INI-style ``key = value`` files with section headers.  The
canonical text form written by :meth:`RunConfig.to_text` parses back to an
equal config and re-serialises to identical bytes.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

_REQUIRED = object()


class ConfigError(ValueError):
    """Missing or malformed configuration entry; ``key`` names it."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    sections: dict = field(default_factory=dict)  # section -> {key: str}
    source: str | None = None

    @classmethod
    def parse(cls, text: str, source: str | None = None) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                           comment_prefixes=("#", ";"), inline_comment_prefixes=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=source or "<config>")
        except configparser.Error as exc:
            raise ConfigError(source or "<config>", str(exc).splitlines()[0]) from exc
        sections = {s: {k: v.strip() for k, v in parser.items(s)} for s in parser.sections()}
        return cls(sections, source)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from exc
        return cls.parse(text, str(path))

    def to_text(self) -> str:
        lines = []
        for name, entries in self.sections.items():
            if lines:
                lines.append("")
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in entries.items())
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.to_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.sections == other.sections

    def has(self, section, key=None) -> bool:
        if section not in self.sections:
            return False
        return key is None or key in self.sections[section]

    def with_value(self, section, key, value) -> "RunConfig":
        sections = {s: dict(v) for s, v in self.sections.items()}
        sections.setdefault(section, {})[key] = str(value)
        return RunConfig(sections, self.source)

    def get_str(self, section, key, default=_REQUIRED) -> str:
        entries = self.sections.get(section, {})
        if key not in entries or entries[key] == "":
            if default is _REQUIRED:
                raise ConfigError(f"{section}.{key}", "required key is missing")
            return default
        return entries[key]

    def get_float(self, section, key, default=_REQUIRED) -> float:
        raw = self.get_str(section, key, None if default is not _REQUIRED else _REQUIRED)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected a number, got {raw!r}") from None

    def get_int(self, section, key, default=_REQUIRED) -> int:
        raw = self.get_str(section, key, None if default is not _REQUIRED else _REQUIRED)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}") from None

    def get_bool(self, section, key, default=_REQUIRED) -> bool:
        raw = self.get_str(section, key, None if default is not _REQUIRED else _REQUIRED)
        if raw is None:
            return default
        value = raw.lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key}", f"expected a boolean, got {raw!r}")


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    tool_version: str
    command: str
    config_hash: str
    inputs: dict  # path -> sha256
    outputs: dict  # file name (relative to the output dir) -> sha256
    duration_s: float

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "command": self.command,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_s": self.duration_s,
        }

    def write(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(data["tool_version"], data["command"], data["config_hash"],
                   data["inputs"], data["outputs"], data["duration_s"])

    def verify(self, config: RunConfig | None, out_dir) -> list[str]:
        """Digest mismatches against the current config, inputs and outputs."""
        problems = []
        if config is not None and config.digest() != self.config_hash:
            problems.append("config digest differs from manifest")
        for path, digest in self.inputs.items():
            if not Path(path).exists():
                problems.append(f"input missing: {path}")
            elif file_digest(path) != digest:
                problems.append(f"input modified: {path}")
        for name, digest in self.outputs.items():
            p = Path(out_dir) / name
            if not p.exists():
                problems.append(f"output missing: {name}")
            elif file_digest(p) != digest:
                problems.append(f"output modified: {name}")
        return problems
