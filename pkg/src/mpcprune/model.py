"""Model container: a JSON manifest plus a raw little-endian blob.

The manifest (``<name>.manifest.json``) carries layer shapes, per-layer
prune/reduce thresholds, fixed-point parameters, the polynomial
configuration and a tensor table; the blob (``<name>.blob``) is the
concatenation of all tensors as 8-byte little-endian ring words.  This
file pair is the only interface between the engine and model producers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .reference import PolyConfig
from .ring import FixedPointParams, vencode, to_signed, encode

MANIFEST_VERSION = 1
WORD = 8


class ModelFormatError(ValueError):
    """Manifest/blob validation failure."""


@dataclass
class LayerSpec:
    heads: int
    dim: int
    ffn_dim: int
    theta: int  # ring-encoded prune threshold
    beta: int   # ring-encoded reduction threshold

    def to_dict(self) -> dict:
        return {"heads": self.heads, "dim": self.dim, "ffn_dim": self.ffn_dim,
                "theta": self.theta, "beta": self.beta}

    @staticmethod
    def from_dict(d: dict) -> "LayerSpec":
        return LayerSpec(int(d["heads"]), int(d["dim"]), int(d["ffn_dim"]),
                         int(d["theta"]), int(d["beta"]))


@dataclass
class ModelManifest:
    params: FixedPointParams
    poly: PolyConfig
    layers: list[LayerSpec]
    vocab: int
    classes: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.layers[0].dim

    def layer_tensor_names(self, l: int) -> list[str]:
        return [f"layer{l}.{t}" for t in
                ("wq", "wk", "wv", "wo", "ln1.gamma", "ln1.beta",
                 "w1", "b1", "w2", "b2", "ln2.gamma", "ln2.beta")]

    def expected_tensors(self) -> dict[str, tuple]:
        d = self.dim
        out = {"embed": (self.vocab, d),
               "head.w": (d, self.classes),
               "head.b": (self.classes,)}
        for l, spec in enumerate(self.layers):
            f = spec.ffn_dim
            shapes = [(d, d)] * 4 + [(d,), (d,), (d, f), (f,), (f, d), (d,), (d,), (d,)]
            for name, shape in zip(self.layer_tensor_names(l), shapes):
                out[name] = shape
        return out

    def validate(self) -> None:
        p = self.params
        for l, spec in enumerate(self.layers):
            if spec.dim != self.dim:
                raise ModelFormatError(f"layer {l}: model dim changes mid-stack")
            if spec.dim % spec.heads != 0:
                raise ModelFormatError(f"layer {l}: dim not divisible by head count")
            if to_signed(spec.beta, p) <= to_signed(spec.theta, p):
                raise ModelFormatError(
                    f"layer {l}: reduction threshold must exceed prune threshold")
        expected = self.expected_tensors()
        for name, shape in expected.items():
            if name not in self.tensors:
                raise ModelFormatError(f"missing tensor {name}")
            if tuple(self.tensors[name].shape) != tuple(shape):
                raise ModelFormatError(
                    f"tensor {name}: shape {self.tensors[name].shape} != {shape}")
        for name in self.tensors:
            if name not in expected:
                raise ModelFormatError(f"unexpected tensor {name}")


def save_model(manifest: ModelManifest, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.manifest.json`` and ``<stem>.blob``."""
    manifest.validate()
    stem = Path(stem)
    table = {}
    chunks = []
    offset = 0
    for name in sorted(manifest.tensors):
        arr = np.ascontiguousarray(manifest.tensors[name], dtype=np.uint64)
        raw = arr.astype("<u8").tobytes()
        table[name] = {"shape": list(arr.shape), "dtype": "<u8", "offset": offset}
        chunks.append(raw)
        offset += len(raw)
    doc = {
        "version": MANIFEST_VERSION,
        "params": {"ell": manifest.params.ell, "f": manifest.params.f},
        "poly": manifest.poly.as_dict(),
        "vocab": manifest.vocab,
        "classes": manifest.classes,
        "layers": [s.to_dict() for s in manifest.layers],
        "tensors": table,
    }
    mpath = stem.parent / (stem.name + ".manifest.json")
    bpath = stem.parent / (stem.name + ".blob")
    mpath.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    bpath.write_bytes(b"".join(chunks))
    return mpath, bpath


def load_model(manifest_path: str | Path, blob_path: str | Path | None = None) -> ModelManifest:
    manifest_path = Path(manifest_path)
    if blob_path is None:
        blob_path = manifest_path.with_suffix("").with_suffix(".blob")
    blob_path = Path(blob_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    if not blob_path.exists():
        raise FileNotFoundError(f"blob not found: {blob_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"manifest is not valid JSON: {e}") from e
    if doc.get("version") != MANIFEST_VERSION:
        raise ModelFormatError(
            f"unsupported manifest version {doc.get('version')!r}")
    params = FixedPointParams(ell=int(doc["params"]["ell"]), f=int(doc["params"]["f"]))
    poly = PolyConfig.from_dict(doc["poly"])
    layers = [LayerSpec.from_dict(d) for d in doc["layers"]]
    blob = blob_path.read_bytes()
    tensors = {}
    for name, meta in doc["tensors"].items():
        if meta.get("dtype") != "<u8":
            raise ModelFormatError(f"tensor {name}: unsupported dtype {meta.get('dtype')}")
        shape = tuple(int(s) for s in meta["shape"])
        size = int(np.prod(shape)) * WORD if shape else WORD
        off = int(meta["offset"])
        if off < 0 or off + size > len(blob):
            raise ModelFormatError(
                f"tensor {name}: offset {off} + {size} bytes exceeds blob "
                f"({len(blob)} bytes)")
        tensors[name] = np.frombuffer(blob[off:off + size], dtype="<u8").astype(np.uint64).reshape(shape)
    m = ModelManifest(params=params, poly=poly, layers=layers,
                      vocab=int(doc["vocab"]), classes=int(doc["classes"]),
                      tensors=tensors)
    m.validate()
    return m


def make_toy_model(layers: int = 2, dim: int = 16, heads: int = 2,
                   ffn_dim: int = 32, vocab: int = 32, classes: int = 4,
                   seed: int = 0,
                   theta: float | list[float] = -1.0,
                   beta: float | list[float] = 2.0,
                   params: FixedPointParams | None = None,
                   poly: PolyConfig | None = None) -> ModelManifest:
    """Random small transformer with weights scaled for fixed-point headroom.

    Default thresholds disable pruning (theta below any score) and
    reduction (beta above any score) while respecting beta > theta.
    """
    params = params or FixedPointParams()
    poly = poly or PolyConfig()
    rng = np.random.Generator(np.random.PCG64(seed))
    if not isinstance(theta, (list, tuple)):
        theta = [theta] * layers
    if not isinstance(beta, (list, tuple)):
        beta = [beta] * layers
    specs = [LayerSpec(heads, dim, ffn_dim,
                       encode(theta[l], params), encode(beta[l], params))
             for l in range(layers)]
    m = ModelManifest(params=params, poly=poly, layers=specs,
                      vocab=vocab, classes=classes)

    def w(shape, scale):
        return vencode(rng.normal(0.0, scale, size=shape), params)

    m.tensors["embed"] = w((vocab, dim), 0.5)
    m.tensors["head.w"] = w((dim, classes), 0.5 / np.sqrt(dim))
    m.tensors["head.b"] = w((classes,), 0.1)
    for l in range(layers):
        names = m.layer_tensor_names(l)
        sd = 0.5 / np.sqrt(dim)
        vals = [w((dim, dim), sd) for _ in range(4)]
        vals += [vencode(rng.normal(1.0, 0.05, dim), params),
                 w((dim,), 0.05),
                 w((dim, ffn_dim), sd), w((ffn_dim,), 0.05),
                 w((ffn_dim, dim), 0.5 / np.sqrt(ffn_dim)), w((dim,), 0.05),
                 vencode(rng.normal(1.0, 0.05, dim), params),
                 w((dim,), 0.05)]
        for name, v in zip(names, vals):
            m.tensors[name] = v
    m.validate()
    return m


def positional_encoding(n: int, d: int, params: FixedPointParams) -> np.ndarray:
    """Public sinusoidal positional table, ring-encoded, shape (n, d)."""
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    table = np.where(np.arange(d)[None, :] % 2 == 0, np.sin(angle), np.cos(angle))
    return vencode(0.5 * table, params)
