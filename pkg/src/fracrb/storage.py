"""Persistence of trained reduced spaces and CSV/JSON writers."""
import csv
import json
import platform
import zipfile
from pathlib import Path

import numpy as np

from . import __version__
from .rb_offline import RbOperators, RbSpace

FORMAT = "fracrb-rb-space"
FORMAT_VERSION = 1

_OPERATOR_FIELDS = ("M_N", "A_N", "B_N", "Mp_N", "Ap_N", "Bp_N", "Yd_N", "yd_state", "yd_sq")


class StorageError(OSError):
    pass


def persist_rb_space(space: RbSpace, ops: RbOperators, path, spec=None, extra: dict = None):
    header = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "N": space.N,
        "problem_digest": spec.digest() if spec is not None else None,
        "problem": spec.as_dict() if spec is not None else None,
        "extra": extra or {},
    }
    arrays = {name: getattr(ops, name) for name in _OPERATOR_FIELDS}
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            Z_y=space.Z_y,
            Z_p=space.Z_p,
            S_N=np.asarray(space.S_N, dtype=float),
            **arrays,
        )
    return path


def load_rb_space(path, spec=None):
    """Load ``(space, ops)``; refuses files trained for a different problem."""
    path = Path(path)
    if not path.exists():
        raise StorageError(f"no trained reduced space at {path}; run 'train' first")
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            content = {k: data[k] for k in data.files if k != "header"}
    except (ValueError, KeyError, OSError, EOFError, zipfile.BadZipFile) as exc:
        raise StorageError(f"corrupt reduced-space file {path}: {exc}") from None
    if header.get("format") != FORMAT or header.get("version") != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported format {header.get('format')} v{header.get('version')}")
    if spec is not None and header.get("problem_digest") != spec.digest():
        raise StorageError(f"{path}: trained for a different problem ({header.get('problem')})")
    try:
        space = RbSpace(content["Z_y"], content["Z_p"], tuple(float(m) for m in content["S_N"]))
        ops = RbOperators(**{name: content[name] for name in _OPERATOR_FIELDS})
    except KeyError as exc:
        raise StorageError(f"corrupt reduced-space file {path}: missing {exc}") from None
    return space, ops


def metadata(cfg, command, timings=None, **values) -> dict:
    return {
        "command": command,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.as_dict() if cfg is not None else None,
        "timings": timings or {},
        **values,
    }


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def write_csv(path, header, rows, comment: str = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
