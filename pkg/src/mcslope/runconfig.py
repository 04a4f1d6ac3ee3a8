"""Flat key-value run configuration with strict schema validation.

Format: one ``key = value`` pair per line, ``#`` comments, dotted section
prefixes (``synthetic.n = 500``). Unknown keys are rejected. Every command
echoes its fully-resolved configuration (defaults filled in, flags applied)
to ``resolved_config.txt``; re-running from the echo reproduces the run.
"""

from __future__ import annotations

from pathlib import Path

from .core import InvalidInputError

__all__ = ["parse_kv_file", "parse_kv_text", "format_kv", "resolve", "REQUIRED"]


class _Required:
    def __repr__(self):  # pragma: no cover - debugging aid
        return "REQUIRED"


REQUIRED = _Required()


def parse_kv_text(text: str, origin: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{origin}: line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise InvalidInputError(f"{origin}: line {lineno}: empty key")
        if key in out:
            raise InvalidInputError(f"{origin}: line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"config file not found: {path}")
    return parse_kv_text(path.read_text(encoding="utf-8"), origin=str(path))


def format_kv(cfg: dict[str, str]) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


# -- typed coercion ----------------------------------------------------------


def _coerce(key: str, raw: str, kind: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        if kind == "int_list":
            return [int(v.strip()) for v in raw.split(",") if v.strip()]
        if kind == "float_or_auto":
            return "auto" if raw == "auto" else float(raw)
    except ValueError as exc:
        raise InvalidInputError(f"config key {key!r}: {exc}") from exc
    raise InvalidInputError(f"internal: unknown kind {kind!r}")


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def resolve(
    raw: dict[str, str],
    schema: dict[str, tuple[str, object]],
    overrides: dict[str, str] | None = None,
) -> tuple[dict, dict[str, str]]:
    """Validate ``raw`` (plus flag ``overrides``) against ``schema``.

    ``schema`` maps key -> (kind, default-or-REQUIRED). Returns the typed
    configuration and its canonical echo dict. Unknown keys, missing
    required keys and coercion failures raise InvalidInputError.
    """
    merged = dict(raw)
    for k, v in (overrides or {}).items():
        merged[k] = v
    unknown = sorted(set(merged) - set(schema))
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    typed: dict = {}
    echo: dict[str, str] = {}
    for key, (kind, default) in schema.items():
        if key in merged:
            typed[key] = _coerce(key, merged[key], kind)
        elif default is REQUIRED:
            raise InvalidInputError(f"missing required config key {key!r}")
        else:
            typed[key] = default
        if typed[key] is not None:
            echo[key] = _render(typed[key])
    return typed, echo
