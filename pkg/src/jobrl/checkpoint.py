"""Checkpoint container: an ``.npz`` holding every parameter block plus JSON metadata."""

from __future__ import annotations

import json

import numpy as np

from . import __version__
from .qnet import LEAKY_SLOPE, MSG_IN, QNetworkParams

CHECKPOINT_VERSION = 1
_META_KEY = "__meta__"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: QNetworkParams, metadata=None):
    meta = dict(metadata or {})
    meta.update({
        "format": "jobrl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "code_version": __version__,
        "dims": list(params.dims),
        "K": len(params.modules),
        "conflict_msg_dir": params.conflict_msg_dir,
        "leaky_slope": params._slope(),
    })
    arrays = {k: np.asarray(v) for k, v in params.flat().items()}
    arrays[_META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns ``(params, metadata)``."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data[_META_KEY]))
            flat = {k: data[k] for k in data.files if k != _META_KEY}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != "jobrl-checkpoint" or meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    params = QNetworkParams.from_flat(flat, meta.get("conflict_msg_dir", MSG_IN), meta.get("leaky_slope", LEAKY_SLOPE))
    if list(params.dims) != meta["dims"]:
        raise CheckpointError(f"{path}: stored dims {meta['dims']} do not match blocks {params.dims}")
    return params, meta
