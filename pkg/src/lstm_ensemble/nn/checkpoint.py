"""Text checkpoints for a parameter set.

A checkpoint is a single JSON object::

    {"format": "lstm-checkpoint/1",
     "scheme": "GlorotUniform", "m": 3, "n": 1, "seed": 17,
     "block_order": ["w_forget", ..., "b_out"],
     "blocks": {"w_forget": [...], ...},     # row-major flat lists
     "meta": {...}}                          # caller-defined extras

Blocks are written in the fixed order of ``BLOCK_NAMES`` and floats use
their shortest round-trip repr, so a save/load/save cycle is byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import BLOCK_NAMES, LstmParameters, expected_shapes

FORMAT = "lstm-checkpoint/1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: LstmParameters
    scheme: str
    seed: int
    meta: dict = field(default_factory=dict)


def dumps(ckpt: Checkpoint) -> str:
    p = ckpt.params
    doc = {
        "format": FORMAT,
        "scheme": ckpt.scheme,
        "m": p.m,
        "n": p.n,
        "seed": int(ckpt.seed),
        "block_order": list(BLOCK_NAMES),
        "blocks": {name: [float(x) for x in np.ravel(getattr(p, name))] for name in BLOCK_NAMES},
        "meta": ckpt.meta,
    }
    return json.dumps(doc, indent=1) + "\n"


def loads(text: str, source: str = "<string>") -> Checkpoint:
    try:
        doc = json.loads(text)
        if doc.get("format") != FORMAT:
            raise CheckpointError(f"unsupported format {doc.get('format')!r}")
        m, n = int(doc["m"]), int(doc["n"])
        if tuple(doc["block_order"]) != BLOCK_NAMES:
            raise CheckpointError("unexpected block order")
        blocks = {}
        for name, shape in expected_shapes(m, n).items():
            values = np.asarray(doc["blocks"][name], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise CheckpointError(f"block {name} has {values.size} values, expected {int(np.prod(shape))}")
            blocks[name] = values.reshape(shape)
        params = LstmParameters(**blocks)
        if not params.is_finite():
            raise CheckpointError("non-finite parameter values")
        return Checkpoint(params, doc["scheme"], int(doc["seed"]), doc.get("meta", {}))
    except CheckpointError as exc:
        raise CheckpointError(f"{source}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{source}: corrupt checkpoint ({exc})") from None


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_text(dumps(ckpt), encoding="utf-8")


def load(path) -> Checkpoint:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from None
    return loads(text, source=str(path))
