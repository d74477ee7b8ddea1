"""
Plain-text ``key: value`` documents with named sections and a schema version.

Floats are written with ``repr`` and lists as JSON, so parsing a document
gives back exactly the values that were written.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field

from .errors import DataFormatError

__all__ = ["SCHEMA_VERSION", "dump_document", "parse_document", "RunReport"]

SCHEMA_VERSION = 1
_INT = re.compile(r"^-?\d+$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_RESERVED = {"null", "true", "false"}


def _encode(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value))
    if isinstance(value, str):
        plain = (value and value == value.strip() and value not in _RESERVED and "\n" not in value
                 and value[0] not in '"[' and _decode_number(value) is None)
        return value if plain else json.dumps(value)
    raise TypeError(f"cannot encode {type(value).__name__}")


def _decode_number(text: str):
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return None


def _decode(text: str):
    if text == "null":
        return None
    if text in ("true", "false"):
        return text == "true"
    if text.startswith(("[", '"')):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"malformed value {text!r}") from exc
    num = _decode_number(text)
    return text if num is None else num


def dump_document(kind: str, sections: dict[str, dict]) -> str:
    lines = [f"schema_version: {SCHEMA_VERSION}", f"kind: {_encode(kind)}"]
    for name, body in sections.items():
        lines += ["", f"[{name}]"]
        for key, value in body.items():
            if not _KEY.match(key):
                raise ValueError(f"invalid key {key!r}")
            lines.append(f"{key}: {_encode(value)}")
    return "\n".join(lines) + "\n"


def parse_document(text: str) -> tuple[str, dict[str, dict]]:
    """Return (kind, sections); raises DataFormatError on anything malformed."""
    header: dict = {}
    sections: dict[str, dict] = {}
    current = header
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], {})
            continue
        key, sep, value = line.partition(": ")
        if not sep or not _KEY.match(key):
            raise DataFormatError(f"line {lineno}: expected 'key: value'")
        current[key] = _decode(value)
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema_version {header.get('schema_version')!r}")
    if "kind" not in header:
        raise DataFormatError("document has no kind")
    return header["kind"], sections


@dataclass(frozen=True)
class RunReport:
    verdict: str
    dr: float
    delta: float
    delta_source: str
    alpha: float
    n_auto_reject: int
    n_efficient: int
    n_discarded: int
    n_votes: int
    theta: float
    n: int
    n1: int
    n2: int
    p: int
    resample_rounds: int
    seed: int
    version: str
    config: dict = field(default_factory=dict)

    def to_text(self) -> str:
        result = {k: v for k, v in asdict(self).items() if k not in ("config", "version", "seed")}
        return dump_document("test-report", {
            "result": result,
            "config": dict(self.config),
            "provenance": {"version": self.version, "seed": self.seed},
        })

    @classmethod
    def from_text(cls, text: str) -> "RunReport":
        kind, sections = parse_document(text)
        if kind != "test-report":
            raise DataFormatError(f"expected a test-report, got {kind!r}")
        try:
            return cls(**sections["result"], config=sections.get("config", {}), **sections["provenance"])
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"incomplete report: {exc}") from exc
