"""Versioned, self-describing model files.

A model file is an uncompressed ``.npz`` container. The entry ``meta`` holds
UTF-8 JSON (format name, version, estimator class and parameters, problem
description, config echo); every other entry is a named array stored
little-endian (``<f8`` for reals, ``<i8`` for indices), so a save/load round
trip is bit-exact.
"""

import json
import os
import tempfile
import zipfile

import numpy as np

from .ercm import EmpiricalRCM
from .estimator import EstimatorCache
from .exceptions import ArtifactError
from .lsrcm import LeastSquaresRCM
from .problem import AffineProblem

FORMAT = "redcolloc-model"
FORMAT_VERSION = 1

_CLASSES = {"lsrcm": LeastSquaresRCM, "ercm": EmpiricalRCM}

_COMMON = (
    "train_mus_",
    "beta_train_",
    "selected_index_",
    "selected_mus_",
    "training_log_",
    "estimate_history_",
    "basis_",
    "snapshots_",
)
_EXTRA = {
    "lsrcm": (),
    "ercm": ("point_index_", "points_", "B_", "op_rows_", "rhs_rows_"),
}
_CACHE = ("ff", "uLLu", "fLu")


def _le(a):
    a = np.asarray(a)
    kind = "<i8" if a.dtype.kind in "iu" else "<f8"
    return np.ascontiguousarray(a.astype(kind, copy=False))


def _params(model):
    params = model.get_params(deep=False)
    params.pop("problem")
    rs = params.get("random_state")
    if rs is not None and not isinstance(rs, (int, np.integer)):
        raise ArtifactError("only an integer or None random_state can be stored")
    if rs is not None:
        params["random_state"] = int(rs)
    return params


def save_model(model, path, config=None):
    """Write a fitted model to ``path``.

    The file is written to a temporary name and moved into place, so a failed
    save never leaves a partial artifact behind.
    """
    method = getattr(model, "_method", None)
    if method not in _CLASSES or not hasattr(model, "basis_"):
        raise ArtifactError("only fitted LeastSquaresRCM or EmpiricalRCM models can be saved")
    meta = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "method": method,
        "params": _params(model),
        "problem": model.problem.describe(),
        "offline_time": float(model.offline_time_),
        "config": dict(config or {}),
    }
    arrays = {name: _le(getattr(model, name)) for name in _COMMON + _EXTRA[method]}
    for name in _CACHE:
        arrays["cache_" + name] = _le(getattr(model.cache_, name))
    meta_bytes = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), np.uint8)

    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, meta=meta_bytes, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_meta(path):
    """Metadata dictionary of a model file, validated for format and version."""
    with _open(path) as data:
        return _meta(data)


def _open(path):
    try:
        return np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise ArtifactError(f"cannot read model file {os.fspath(path)!r}: {exc}") from None


def _meta(data):
    if "meta" not in data.files:
        raise ArtifactError("model file has no metadata entry")
    try:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"corrupt model metadata: {exc}") from None
    if meta.get("format") != FORMAT:
        raise ArtifactError(f"not a {FORMAT} file")
    if meta.get("version") != FORMAT_VERSION:
        raise ArtifactError(
            f"unsupported model format version {meta.get('version')!r}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    if meta.get("method") not in _CLASSES:
        raise ArtifactError(f"unknown method {meta.get('method')!r}")
    return meta


def load_model(path):
    """Read a model written by :func:`save_model`.

    Returns
    -------
    model : LeastSquaresRCM or EmpiricalRCM
        Fitted estimator ready for online use. The stored training-set
        stability constants are placed in the problem's cache.
    meta : dict
    """
    with _open(path) as data:
        meta = _meta(data)
        method = meta["method"]
        names = _COMMON + _EXTRA[method] + tuple("cache_" + n for n in _CACHE)
        missing = [n for n in names if n not in data.files]
        if missing:
            raise ArtifactError(f"model file lacks arrays {missing}")
        arrays = {n: data[n] for n in names}

    problem = AffineProblem.from_description(meta["problem"])
    model = _CLASSES[method](problem=problem, **meta["params"])
    for name in _COMMON + _EXTRA[method]:
        setattr(model, name, arrays[name])
    model.cache_ = EstimatorCache(*(arrays["cache_" + n] for n in _CACHE))
    model.offline_time_ = meta["offline_time"]
    for mu, beta in zip(model.train_mus_, model.beta_train_):
        problem._beta_cache[("auto", mu.tobytes())] = float(beta)
    return model, meta

