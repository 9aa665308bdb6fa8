"""Artifact writers: every file lands via a temp file in the same directory and os.replace."""
from __future__ import annotations

import datetime as dt
import json
import logging
import os
import platform
import tempfile
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "PyYAML")


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _atomic(path: Path, mode: str, writer) -> Path:
    ensure_dir(path.parent)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_json_atomic(obj: Any, path: str | Path) -> Path:
    text = json.dumps(_jsonable(obj), ensure_ascii=False, indent=2, sort_keys=True)
    return _atomic(Path(path), "w", lambda fh: fh.write(text + "\n"))


def write_csv_atomic(df: pd.DataFrame, path: str | Path) -> Path:
    return _atomic(Path(path), "w", lambda fh: df.to_csv(fh, index=False, float_format="%.17g"))


def write_npz_atomic(path: str | Path, **arrays: np.ndarray) -> Path:
    return _atomic(Path(path), "wb", lambda fh: np.savez(fh, **arrays))


def package_versions() -> Dict[str, Optional[str]]:
    out: Dict[str, Optional[str]] = {}
    for name in TRACKED_PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


def build_manifest(command: str, config_digest: str, config: Dict[str, Any],
                   timings: Optional[Dict[str, float]] = None, flags: Optional[list] = None,
                   outputs: Optional[list] = None) -> Dict[str, Any]:
    from shlab import __version__

    return {
        "command": command,
        "shlab_version": __version__,
        "config_digest": config_digest,
        "config": config,
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "packages": package_versions(),
        "timings_s": timings or {},
        "flags": flags or [],
        "outputs": outputs or [],
    }
