"""Deterministic, atomic output files shared by the command-line runs."""
from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def _file_mode() -> int:
    umask = os.umask(0)
    os.umask(umask)
    return 0o666 & ~umask


def run_id(subcommand: str, config: dict, seed: int) -> str:
    """Stable 16-hex-digit identifier of ``(subcommand, config, seed)``."""
    blob = json.dumps({"cmd": subcommand, "config": config, "seed": seed}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def atomic_write_text(path: Path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, _file_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, _file_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return str(x)


def csv_text(header, rows, rid: str) -> str:
    """CSV with a ``# run_id=...`` comment line, a header, and 17-digit floats."""
    lines = [f"# run_id={rid}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header, rows, rid: str) -> Path:
    if isinstance(rows, np.ndarray):
        rows = rows.tolist()
    return atomic_write_text(path, csv_text(header, rows, rid))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, Path):
        return str(x)
    return x


def write_json(path: Path, obj: dict, rid: str) -> Path:
    """Indented JSON with the run id; non-finite floats become ``null``."""
    payload = {"run_id": rid, **_jsonable(obj)}
    return atomic_write_text(path, json.dumps(payload, indent=2, allow_nan=False) + "\n")


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "logspiral": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(out_dir: Path, rid: str, subcommand: str, config: dict, seed: int,
                   outputs, outcome: str, exit_code: int, wall_time: float) -> Path:
    """``manifest.json``: config echo, versions, outputs, outcome and wall time.

    ``wall_time_s`` is the only field that differs between identical re-runs.
    """
    return write_json(
        Path(out_dir) / "manifest.json",
        {
            "subcommand": subcommand,
            "seed": seed,
            "config": config,
            "versions": versions(),
            "outputs": sorted(str(Path(p).name) for p in outputs),
            "outcome": outcome,
            "exit_code": exit_code,
            "wall_time_s": wall_time,
        },
        rid,
    )
