"""Writer for the engine's model file pair.

The format is the engine's external interface: ``<stem>.manifest.json``
(version 1, fixed-point params, polynomial config, per-layer thresholds,
tensor table) plus ``<stem>.blob`` (tensors concatenated in sorted name
order as little-endian 8-byte ring words at scale 2^f).
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from .approxmath import poly_dict

MANIFEST_VERSION = 1
RING_BITS = 64
DEFAULT_FRAC_BITS = 20
# thresholds must stay inside the engine's narrowed compare window
THRESHOLD_LIMIT = 7.9


def _ring_encode(arr: np.ndarray, f: int) -> np.ndarray:
    q = np.round(np.asarray(arr, np.float64) * (1 << f)).astype(np.int64)
    return q.astype(np.uint64)


def export_model(stem: str | Path, tensors: dict[str, np.ndarray],
                 thetas, betas, heads: int, ffn_dim: int,
                 vocab: int, classes: int,
                 frac_bits: int = DEFAULT_FRAC_BITS) -> tuple[Path, Path]:
    """Quantize float tensors/thresholds and write the file pair."""
    stem = Path(stem)
    dim = tensors["embed"].shape[1]
    layers = []
    for l, (th, be) in enumerate(zip(thetas, betas)):
        th = float(np.clip(th, -THRESHOLD_LIMIT, THRESHOLD_LIMIT))
        be = float(np.clip(be, -THRESHOLD_LIMIT, THRESHOLD_LIMIT))
        min_gap = 2.0 ** -(frac_bits - 10)
        if be <= th:
            warnings.warn(f"layer {l}: reduction threshold {be} <= prune "
                          f"threshold {th}; clamping")
            be = th + min_gap
        layers.append({"heads": heads, "dim": dim, "ffn_dim": ffn_dim,
                       "theta": int(_ring_encode(np.array(th), frac_bits)),
                       "beta": int(_ring_encode(np.array(be), frac_bits))})
    table, chunks, offset = {}, [], 0
    for name in sorted(tensors):
        arr = _ring_encode(tensors[name], frac_bits)
        raw = arr.astype("<u8").tobytes()
        table[name] = {"shape": list(arr.shape), "dtype": "<u8",
                       "offset": offset}
        chunks.append(raw)
        offset += len(raw)
    doc = {
        "version": MANIFEST_VERSION,
        "params": {"ell": RING_BITS, "f": frac_bits},
        "poly": poly_dict(),
        "vocab": vocab,
        "classes": classes,
        "layers": layers,
        "tensors": table,
    }
    mpath = stem.parent / (stem.name + ".manifest.json")
    bpath = stem.parent / (stem.name + ".blob")
    mpath.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    bpath.write_bytes(b"".join(chunks))
    return mpath, bpath
