"""End-to-end private transformer inference.

The orchestrator runs both party contexts in one process: the model
holder (party 0) shares its weights, the client (party 1) shares its
one-hot token matrix, and the layers run attention, optional oblivious
pruning/reduction, LayerNorm and the FFN entirely on shares.  The logits
are the only application value opened.  A plaintext forward pass in
exact-float or deterministic fixed-point arithmetic provides the
reference both for testing and for threshold calibration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import plainfx as fx
from . import reference as ref
from .channel import (LAN, WAN, Channel, CostLedger, NetworkModel, Transcript,
                      estimate_time)
from .dealer import DealerTape
from .linear import (SharedMatrix, add_bias, attention_scores, matmul_shared,
                     reconstruct_matrix, residual_add, share_matrix)
from .model import ModelManifest, positional_encoding
from .nonlinear import gelu_shared, layernorm_shared, softmax_shared
from .pruning import (BoundTokens, PruneReport, bind_and_count,
                      importance_scores, oblivious_compact, prune_mask,
                      reduction_mask, strip_scores, truncate_and_strip)
from .ring import FixedPointParams, vdecode, vencode, vmul, vreduce, vsigned, vtruncate
from .sharing import ProtocolContext, apair, open_shared

VARIANTS = ("baseline", "prune", "prune-reduce")


@dataclass
class InferenceReport:
    """Everything one private run discloses to the experimenter."""

    logits: list[float]
    token_counts: list[int]       # tokens entering each layer, then the output count
    reduced_counts: list[int]     # low-degree tokens after each layer
    prune_reports: list[dict]
    phases: dict
    total_bytes: int
    total_rounds: int
    est_lan_s: float
    est_wan_s: float
    transcript_digest: str
    variant: str
    seed: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def _onehot(token_ids: np.ndarray, vocab: int, p: FixedPointParams) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("token ids must be a non-empty vector")
    if ids.min() < 0 or ids.max() >= vocab:
        raise ValueError("token id out of vocabulary range")
    out = np.zeros((ids.size, vocab), np.uint64)
    out[np.arange(ids.size), ids] = np.uint64(p.scale)
    return out


# ---------------------------------------------------------------------------
# plaintext reference paths

def plaintext_forward(model: ModelManifest, token_ids, mode: str = "fixed-point",
                      variant: str = "prune-reduce"):
    """Cleartext forward pass; the oracle for the private path.

    mode "fixed-point" runs the deterministic ring mirror; "exact-float"
    runs double precision with the same polynomial approximations.
    Returns (logits ndarray, token_counts, reduced_counts).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if mode == "fixed-point":
        return _forward_fx(model, token_ids, variant)
    if mode == "exact-float":
        return _forward_float(model, token_ids, variant)
    raise ValueError(f"unknown mode {mode!r}")


def _forward_fx(model: ModelManifest, token_ids, variant: str):
    p = model.params
    cfg = model.poly
    n = len(token_ids)
    x = fx.fx_matmul(_onehot(token_ids, model.vocab, p), model.tensors["embed"], p)
    x = vreduce(x + positional_encoding(n, model.dim, p), p)
    high = np.ones(n, bool)
    counts, reduced = [], []
    for l, spec in enumerate(model.layers):
        counts.append(x.shape[0])
        t = {k.split(".", 1)[1]: v for k, v in model.tensors.items()
             if k.startswith(f"layer{l}.")}
        dh = spec.dim // spec.heads
        probs = []
        ctxs = []
        for h in range(spec.heads):
            sl = slice(h * dh, (h + 1) * dh)
            q = fx.fx_matmul(x, t["wq"][:, sl], p)
            k_ = fx.fx_matmul(x, t["wk"][:, sl], p)
            v_ = fx.fx_matmul(x, t["wv"][:, sl], p)
            sc = fx.fx_attention_scores(q, k_, dh, p)
            pr = fx.fx_softmax(sc, high, cfg, p)
            probs.append(pr)
            ctxs.append(fx.fx_matmul(pr, v_, p))
        att = fx.fx_matmul(np.concatenate(ctxs, axis=1), t["wo"], p)
        r = vreduce(x + att, p)
        if variant != "baseline" and r.shape[0] > 0:
            s = _fx_importance(probs, p)
            keep = vsigned(s, p) > vsigned(np.uint64(spec.theta), p)
            r = r[keep]
            s = s[keep]
            if variant == "prune-reduce":
                high = vsigned(s, p) > vsigned(np.uint64(spec.beta), p)
            else:
                high = np.ones(r.shape[0], bool)
        else:
            high = np.ones(r.shape[0], bool)
        reduced.append(int(high.size - high.sum()))
        z = fx.fx_layernorm(r, t["ln1.gamma"], t["ln1.beta"], p)
        hmid = vreduce(fx.fx_matmul(z, t["w1"], p) + t["b1"], p)
        g = np.empty_like(hmid)
        for flag in (True, False):
            idx = np.nonzero(high == flag)[0]
            if idx.size:
                g[idx] = fx.fx_gelu(hmid[idx], flag, p)
        f_ = vreduce(fx.fx_matmul(g, t["w2"], p) + t["b2"], p)
        x = fx.fx_layernorm(vreduce(z + f_, p), t["ln2.gamma"], t["ln2.beta"], p)
    counts.append(x.shape[0])
    if x.shape[0] == 0:
        return np.zeros(model.classes), counts, reduced
    logits = vreduce(fx.fx_matmul(x[:1], model.tensors["head.w"], p)
                     + model.tensors["head.b"], p)[0]
    return vdecode(logits, p), counts, reduced


def _fx_importance(probs: list[np.ndarray], p: FixedPointParams) -> np.ndarray:
    n = probs[0].shape[-1]
    acc = np.zeros(n, np.uint64)
    for pr in probs:
        acc = vreduce(acc + pr.sum(axis=0, dtype=np.uint64), p)
    return vtruncate(vmul(acc, np.uint64(vencode(1.0 / (len(probs) * n), p)), p), p.f, p)


def layer0_importance(model: ModelManifest, token_ids) -> np.ndarray:
    """First-layer importance scores from the fixed-point oracle, decoded.

    Used to calibrate prune thresholds against a known input distribution.
    """
    p = model.params
    cfg = model.poly
    n = len(token_ids)
    x = fx.fx_matmul(_onehot(token_ids, model.vocab, p), model.tensors["embed"], p)
    x = vreduce(x + positional_encoding(n, model.dim, p), p)
    spec = model.layers[0]
    dh = spec.dim // spec.heads
    high = np.ones(n, bool)
    probs = []
    for h in range(spec.heads):
        sl = slice(h * dh, (h + 1) * dh)
        q = fx.fx_matmul(x, model.tensors["layer0.wq"][:, sl], p)
        k_ = fx.fx_matmul(x, model.tensors["layer0.wk"][:, sl], p)
        sc = fx.fx_attention_scores(q, k_, dh, p)
        probs.append(fx.fx_softmax(sc, high, cfg, p))
    return vdecode(_fx_importance(probs, p), p)


def _forward_float(model: ModelManifest, token_ids, variant: str):
    p = model.params
    cfg = model.poly
    n = len(token_ids)
    dec = lambda name: vdecode(model.tensors[name], p)
    ids = np.asarray(token_ids, dtype=np.int64)
    x = dec("embed")[ids] + vdecode(positional_encoding(n, model.dim, p), p)
    high = np.ones(n, bool)
    counts, reduced = [], []
    for l, spec in enumerate(model.layers):
        counts.append(x.shape[0])
        t = {k.split(".", 1)[1]: vdecode(v, p) for k, v in model.tensors.items()
             if k.startswith(f"layer{l}.")}
        dh = spec.dim // spec.heads
        probs, ctxs = [], []
        for h in range(spec.heads):
            sl = slice(h * dh, (h + 1) * dh)
            q, k_, v_ = x @ t["wq"][:, sl], x @ t["wk"][:, sl], x @ t["wv"][:, sl]
            sc = (q @ k_.T) / np.sqrt(dh)
            pr = np.empty_like(sc)
            for flag, deg in ((True, cfg.exp_high_n), (False, cfg.exp_low_n)):
                idx = np.nonzero(high == flag)[0]
                if idx.size:
                    pr[idx] = ref.approx_softmax(sc[idx], deg, cfg.exp_clip_t)
            probs.append(pr)
            ctxs.append(pr @ v_)
        r = x + np.concatenate(ctxs, axis=1) @ t["wo"]
        if variant != "baseline" and r.shape[0] > 0:
            s = sum(pr.sum(axis=0) for pr in probs) / (spec.heads * r.shape[0])
            keep = s > vdecode(np.uint64(spec.theta), p)
            r, s = r[keep], s[keep]
            if variant == "prune-reduce":
                high = s > vdecode(np.uint64(spec.beta), p)
            else:
                high = np.ones(r.shape[0], bool)
        else:
            high = np.ones(r.shape[0], bool)
        reduced.append(int(high.size - high.sum()))
        eps = 16.0 / p.scale
        z = ref.layernorm(r, t["ln1.gamma"], t["ln1.beta"], eps)
        hmid = z @ t["w1"] + t["b1"]
        g = np.empty_like(hmid)
        for flag in (True, False):
            idx = np.nonzero(high == flag)[0]
            if idx.size:
                g[idx] = ref.gelu_high(hmid[idx]) if flag else ref.gelu_low(hmid[idx])
        x = ref.layernorm(z + g @ t["w2"] + t["b2"], t["ln2.gamma"], t["ln2.beta"], eps)
    counts.append(x.shape[0])
    if x.shape[0] == 0:
        return np.zeros(model.classes), counts, reduced
    logits = x[0] @ dec("head.w") + dec("head.b")
    return logits, counts, reduced


# ---------------------------------------------------------------------------
# private path

class FaultyTape(DealerTape):
    """Test hook: corrupts the first matrix Beaver triple it hands out.

    The first matrix triple backs the embedding product, so the fault
    perturbs every downstream value and must be caught by verification.
    """

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self._armed = True

    def matrix_beaver(self, n, k, mcols):
        t = super().matrix_beaver(n, k, mcols)
        if self._armed:
            self._armed = False
            flat = t.c0.reshape(-1)
            # matmul outputs sit at double scale before truncation
            off = np.uint64((1 << (2 * self.params.f)) & self.params.mask)
            flat[0] = (flat[0] + off) & np.uint64(self.params.mask)
        return t


def private_forward(model: ModelManifest, token_ids, seed: int = 0,
                    variant: str = "prune-reduce",
                    record_masked: bool = False,
                    tape_cls=DealerTape) -> InferenceReport:
    """Run the full two-party workflow and return the public report."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    model.validate()
    p = model.params
    cfg = model.poly
    ledger = CostLedger()
    transcript = Transcript(record_masked=record_masked)
    ctx = ProtocolContext(p, tape_cls(seed, p), Channel(ledger), transcript)
    rng = np.random.Generator(np.random.PCG64(seed ^ 0x5EED))
    n = len(token_ids)

    w = {name: share_matrix(arr, rng, p) for name, arr in model.tensors.items()}
    onehot = share_matrix(_onehot(token_ids, model.vocab, p), rng, p)
    with ctx.phase("embed"):
        x = matmul_shared(onehot, w["embed"], ctx)
        # public positional table enters through party 0's share
        pos = positional_encoding(n, model.dim, p)
        x = SharedMatrix((x.s0 + pos) & np.uint64(p.mask), x.s1)

    high = np.ones(n, bool)
    counts, reduced, prune_reports = [], [], []
    for l, spec in enumerate(model.layers):
        counts.append(x.rows)
        if x.rows == 0:
            # every token was pruned upstream; the layer has no work
            high = np.ones(0, bool)
            reduced.append(0)
            continue
        t = {k.split(".", 1)[1]: v for k, v in w.items() if k.startswith(f"layer{l}.")}
        dh = spec.dim // spec.heads
        with ctx.phase(f"layer{l}.attn"):
            scores, values = [], []
            for h in range(spec.heads):
                sl = slice(h * dh, (h + 1) * dh)
                q = matmul_shared(x, SharedMatrix(t["wq"].s0[:, sl], t["wq"].s1[:, sl]), ctx)
                k_ = matmul_shared(x, SharedMatrix(t["wk"].s0[:, sl], t["wk"].s1[:, sl]), ctx)
                values.append(matmul_shared(x, SharedMatrix(t["wv"].s0[:, sl], t["wv"].s1[:, sl]), ctx))
                scores.append(attention_scores(q, k_, dh, ctx))
            # rows of all heads share the softmax schedule: run them as one batch
            stacked = SharedMatrix(np.concatenate([s.s0 for s in scores]),
                                   np.concatenate([s.s1 for s in scores]))
            pstack = softmax_shared(stacked, np.tile(high, spec.heads), cfg, ctx)
            probs = [SharedMatrix(pstack.s0[h * x.rows:(h + 1) * x.rows],
                                  pstack.s1[h * x.rows:(h + 1) * x.rows])
                     for h in range(spec.heads)]
            ctxs = [matmul_shared(pr, v_, ctx) for pr, v_ in zip(probs, values)]
            cat = SharedMatrix(np.concatenate([c.s0 for c in ctxs], axis=1),
                               np.concatenate([c.s1 for c in ctxs], axis=1))
            r = residual_add(x, matmul_shared(cat, t["wo"], ctx), p)
        if variant != "baseline" and r.rows > 0:
            with ctx.phase(f"layer{l}.prune"):
                before = _ledger_bytes(ledger)
                s = importance_scores(probs, ctx)
                mask = prune_mask(s, np.uint64(spec.theta), 0, ctx)
                bound, n_prime = bind_and_count(r, s, mask, ctx)
                m = r.rows - n_prime
                swaps = oblivious_compact(bound, m, ctx)
                r = truncate_and_strip(bound, n_prime)
                kept_scores = strip_scores(bound, n_prime)
                if variant == "prune-reduce" and n_prime > 0:
                    high = reduction_mask(kept_scores, np.uint64(spec.beta), 0, ctx)
                else:
                    high = np.ones(n_prime, bool)
                prune_reports.append(PruneReport(
                    layer=l, n_in=counts[-1], n_out=n_prime, swaps=swaps,
                    bytes=_ledger_bytes(ledger) - before,
                    reduced_count=int(high.size - high.sum())).to_dict())
        else:
            high = np.ones(r.rows, bool)
        reduced.append(int(high.size - high.sum()))
        with ctx.phase(f"layer{l}.ffn"):
            z = layernorm_shared(r, _rowvec(t["ln1.gamma"]), _rowvec(t["ln1.beta"]), ctx)
            hmid = add_bias(matmul_shared(z, t["w1"], ctx), _rowvec(t["b1"]), p)
            g0 = np.empty_like(hmid.s0)
            g1 = np.empty_like(hmid.s1)
            for flag in (True, False):
                idx = np.nonzero(high == flag)[0]
                if idx.size:
                    part = gelu_shared(apair(hmid.s0[idx], hmid.s1[idx]), flag, ctx)
                    g0[idx] = part[0].value
                    g1[idx] = part[1].value
            f_ = add_bias(matmul_shared(SharedMatrix(g0, g1), t["w2"], ctx), _rowvec(t["b2"]), p)
            x = layernorm_shared(residual_add(z, f_, p), _rowvec(t["ln2.gamma"]),
                                 _rowvec(t["ln2.beta"]), ctx)
    counts.append(x.rows)
    with ctx.phase("head"):
        if x.rows == 0:
            logits = np.zeros(model.classes)
        else:
            cls = SharedMatrix(x.s0[:1], x.s1[:1])
            lm = add_bias(matmul_shared(cls, w["head.w"], ctx), _rowvec(w["head.b"]), p)
            opened = open_shared(lm.pair(), ctx, "output")
            logits = vdecode(opened[0], p)

    phases = ledger.as_dict()
    tb = _ledger_bytes(ledger)
    tr = sum(v["rounds"] for v in phases.values())
    return InferenceReport(
        logits=[float(v) for v in logits],
        token_counts=counts,
        reduced_counts=reduced,
        prune_reports=prune_reports,
        phases=phases,
        total_bytes=tb,
        total_rounds=tr,
        est_lan_s=estimate_time(ledger, LAN),
        est_wan_s=estimate_time(ledger, WAN),
        transcript_digest=transcript.digest(),
        variant=variant,
        seed=seed,
    )


def _rowvec(mat: SharedMatrix) -> SharedMatrix:
    """Reshape a stored (d,) vector tensor into a 1 x d SharedMatrix."""
    return SharedMatrix(mat.s0.reshape(1, -1), mat.s1.reshape(1, -1))


def _ledger_bytes(ledger: CostLedger) -> int:
    return sum(v["bytes0"] + v["bytes1"] for v in ledger.as_dict().values())
