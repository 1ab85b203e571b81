import hashlib
import os
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import orjson

from config import OUTPUT_DIR
from run_config import validate_report

REPORT_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def to_json_bytes(payload: Any) -> bytes:
    return orjson.dumps(payload, option=REPORT_OPTIONS, default=_fallback)


def _fallback(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (set, frozenset, tuple)):
        return sorted(value) if isinstance(value, (set, frozenset)) else list(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def config_hash(config: Dict[str, Any]) -> str:
    return hashlib.sha256(orjson.dumps(config, option=orjson.OPT_SORT_KEYS)).hexdigest()[:16]


def resolve_output_path(out: Optional[str], subcommand: str, seed: int) -> Path:
    if out:
        return Path(out)
    return Path(OUTPUT_DIR) / f"{subcommand}-seed{seed}.json"


def write_report(path: Path, report: Dict[str, Any]) -> Path:
    payload = to_json_bytes(report)
    validate_report(orjson.loads(payload))
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    path.write_bytes(payload)
    return path


def format_seconds(seconds: float) -> str:
    if seconds >= 60:
        return f"{seconds / 60:.1f} min"
    elif seconds >= 1:
        return f"{seconds:.2f} s"
    else:
        return f"{seconds * 1000:.0f} ms"
