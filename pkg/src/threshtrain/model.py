"""Toy transformer with trainable prune/reduce thresholds.

The torch module mirrors the inference engine's layer structure and
tensor naming exactly so its weights can be exported verbatim.  The
numpy ``hard_forward`` applies binarized masks with true token removal,
reproducing the engine's float semantics for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import approxmath as am
from .masks import mixed_activations, soft_masks


@dataclass
class ModelConfig:
    layers: int = 2
    dim: int = 16
    heads: int = 2
    ffn_dim: int = 32
    vocab: int = 24
    classes: int = 3
    ln_eps: float = 16.0 / (1 << 20)
    theta_init: float = 0.0
    beta_init: float = 0.2


LAYER_TENSORS = ("wq", "wk", "wv", "wo", "ln1.gamma", "ln1.beta",
                 "w1", "b1", "w2", "b2", "ln2.gamma", "ln2.beta")


class ToyTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        if cfg.dim % cfg.heads != 0:
            raise ValueError("dim must be divisible by heads")
        self.cfg = cfg
        g = torch.Generator().manual_seed(seed)
        d, f = cfg.dim, cfg.ffn_dim

        def w(*shape, scale):
            return nn.Parameter(torch.randn(*shape, generator=g) * scale)

        self.weights = nn.ParameterDict()
        self.weights["embed"] = w(cfg.vocab, d, scale=0.5)
        self.weights["head:w"] = w(d, cfg.classes, scale=0.5 / d ** 0.5)
        self.weights["head:b"] = w(cfg.classes, scale=0.1)
        for l in range(cfg.layers):
            sd = 0.5 / d ** 0.5
            self.weights[f"layer{l}:wq"] = w(d, d, scale=sd)
            self.weights[f"layer{l}:wk"] = w(d, d, scale=sd)
            self.weights[f"layer{l}:wv"] = w(d, d, scale=sd)
            self.weights[f"layer{l}:wo"] = w(d, d, scale=sd)
            self.weights[f"layer{l}:ln1_gamma"] = nn.Parameter(
                1.0 + 0.05 * torch.randn(d, generator=g))
            self.weights[f"layer{l}:ln1_beta"] = w(d, scale=0.05)
            self.weights[f"layer{l}:w1"] = w(d, f, scale=sd)
            self.weights[f"layer{l}:b1"] = w(f, scale=0.05)
            self.weights[f"layer{l}:w2"] = w(f, d, scale=0.5 / f ** 0.5)
            self.weights[f"layer{l}:b2"] = w(d, scale=0.05)
            self.weights[f"layer{l}:ln2_gamma"] = nn.Parameter(
                1.0 + 0.05 * torch.randn(d, generator=g))
            self.weights[f"layer{l}:ln2_beta"] = w(d, scale=0.05)
        self.theta = nn.Parameter(torch.full((cfg.layers,), cfg.theta_init))
        self.beta = nn.Parameter(torch.full((cfg.layers,), cfg.beta_init))

    # -- helpers ----------------------------------------------------------
    def _wt(self, l: int, name: str) -> torch.Tensor:
        # ParameterDict keys cannot contain dots; store ln1.gamma as ln1_gamma
        return self.weights[f"layer{l}:{name.replace('.', '_')}"]

    def export_tensors(self) -> dict[str, np.ndarray]:
        """Engine-format float tensor dict (names with dots)."""
        out = {"embed": self.weights["embed"],
               "head.w": self.weights["head:w"],
               "head.b": self.weights["head:b"]}
        for l in range(self.cfg.layers):
            for t in LAYER_TENSORS:
                out[f"layer{l}.{t}"] = self._wt(l, t)
        return {k: v.detach().cpu().double().numpy() for k, v in out.items()}

    # -- training forward --------------------------------------------------
    def forward(self, ids: torch.Tensor, temperature: float = 0.02,
                binary: bool = False, straight_through: bool = True):
        """Batched forward with soft (or binarized) masks, no token removal.

        Returns (logits (B, C), masks: list of (M_theta, M_beta) per layer).
        Pruning is relaxed by weighting attention keys with the cumulative
        keep mask and renormalizing — the same effect true removal has on
        the softmax denominator, and one LayerNorm cannot undo (a plain
        feature gate would be erased by the next layer's normalization).
        """
        cfg = self.cfg
        B, n = ids.shape
        dh = cfg.dim // cfg.heads
        x = self.weights["embed"][ids]
        x = x + torch.as_tensor(am.positional_encoding(n, cfg.dim),
                                dtype=x.dtype, device=x.device)
        alive = torch.ones(B, n, dtype=x.dtype, device=x.device)
        m_beta_prev = torch.ones_like(alive)
        masks = []
        for l in range(cfg.layers):
            probs_sum = torch.zeros(B, n, dtype=x.dtype, device=x.device)
            ctxs = []
            for h in range(cfg.heads):
                sl = slice(h * dh, (h + 1) * dh)
                q = x @ self._wt(l, "wq")[:, sl]
                k = x @ self._wt(l, "wk")[:, sl]
                v = x @ self._wt(l, "wv")[:, sl]
                sc = q @ k.transpose(-1, -2) / dh ** 0.5
                exact = am.t_softmax_exact(sc)
                approx = am.t_softmax_approx(sc)
                pr = (m_beta_prev.unsqueeze(-1) * exact
                      + (1.0 - m_beta_prev).unsqueeze(-1) * approx)
                # pruned keys drop out of every context sum
                pr = pr * alive.unsqueeze(1)
                pr = pr / pr.sum(dim=-1, keepdim=True).clamp_min(1e-9)
                # only surviving queries contribute attention mass
                probs_sum = probs_sum + (alive.unsqueeze(-1) * pr).sum(dim=1)
                ctxs.append(pr @ v)
            att = torch.cat(ctxs, dim=-1) @ self._wt(l, "wo")
            r = x + att
            denom = alive.sum(-1, keepdim=True).clamp_min(1.0)
            scores = probs_sum / (cfg.heads * denom)
            if binary:
                with torch.no_grad():
                    m_theta = (scores > self.theta[l]).to(x.dtype) * alive
                    m_beta = (scores > self.beta[l]).to(x.dtype) * m_theta
            else:
                m_theta, m_beta = soft_masks(scores, self.theta[l],
                                             self.beta[l], temperature)
                if straight_through:
                    # hard values forward, sigmoid gradients backward: keeps
                    # the trained behavior identical to the binarized model
                    m_theta = ((scores > self.theta[l]).to(x.dtype)
                               + m_theta - m_theta.detach())
                    m_beta = ((scores > self.beta[l]).to(x.dtype)
                              + m_beta - m_beta.detach())
                m_theta = m_theta * alive
                m_beta = m_beta * alive
            masks.append((m_theta, m_beta))
            z = am.t_layernorm(r, self._wt(l, "ln1.gamma"),
                               self._wt(l, "ln1.beta"), cfg.ln_eps)
            hmid = z @ self._wt(l, "w1") + self._wt(l, "b1")
            g = mixed_activations(hmid, m_beta)
            f = g @ self._wt(l, "w2") + self._wt(l, "b2")
            x = am.t_layernorm(z + f, self._wt(l, "ln2.gamma"),
                               self._wt(l, "ln2.beta"), cfg.ln_eps)
            alive = m_theta
            m_beta_prev = m_beta
        # the classifier reads the first token; its cumulative keep mask
        # gates the readout so pruning it carries a task cost
        logits = ((alive[:, :1] * x[:, 0]) @ self.weights["head:w"]
                  + self.weights["head:b"])
        return logits, masks


# ---------------------------------------------------------------------------
# numpy evaluation with true token removal (engine float semantics)

def hard_forward(tensors: dict[str, np.ndarray], thetas, betas,
                 ids, classes: int, ln_eps: float = 16.0 / (1 << 20)):
    """Single-sequence forward with binarized masks and token removal.

    ``tensors`` is the engine-format float dict; exact activations use
    the high-degree approximations so the result predicts the engine's
    output on an exported model.  Returns (logits, token_counts,
    reduced_counts).
    """
    ids = np.asarray(ids, dtype=np.int64)
    n = ids.size
    layers = len(thetas)
    d = tensors["embed"].shape[1]
    x = tensors["embed"][ids] + am.positional_encoding(n, d)
    high = np.ones(n, bool)
    counts, reduced = [], []
    for l in range(layers):
        counts.append(x.shape[0])
        t = {k.split(".", 1)[1]: v for k, v in tensors.items()
             if k.startswith(f"layer{l}.")}
        heads = _head_count(t, d)
        dh = d // heads
        probs, ctxs = [], []
        for h in range(heads):
            sl = slice(h * dh, (h + 1) * dh)
            q, k_, v_ = x @ t["wq"][:, sl], x @ t["wk"][:, sl], x @ t["wv"][:, sl]
            sc = (q @ k_.T) / np.sqrt(dh)
            pr = np.empty_like(sc)
            for flag, deg in ((True, am.EXP_HIGH_N), (False, am.EXP_LOW_N)):
                idx = np.nonzero(high == flag)[0]
                if idx.size:
                    pr[idx] = am.np_approx_softmax(sc[idx], deg)
            probs.append(pr)
            ctxs.append(pr @ v_)
        r = x + np.concatenate(ctxs, axis=1) @ t["wo"]
        if r.shape[0] > 0:
            s = sum(pr.sum(axis=0) for pr in probs) / (heads * r.shape[0])
            keep = s > thetas[l]
            r, s = r[keep], s[keep]
            high = s > betas[l]
        else:
            high = np.ones(0, bool)
        reduced.append(int(high.size - high.sum()))
        z = am.np_layernorm(r, t["ln1.gamma"], t["ln1.beta"], ln_eps)
        hmid = z @ t["w1"] + t["b1"]
        g = np.empty_like(hmid)
        for flag in (True, False):
            idx = np.nonzero(high == flag)[0]
            if idx.size:
                g[idx] = (am.np_gelu_high(hmid[idx]) if flag
                          else am.np_gelu_low(hmid[idx]))
        x = am.np_layernorm(z + g @ t["w2"] + t["b2"],
                            t["ln2.gamma"], t["ln2.beta"], ln_eps)
    counts.append(x.shape[0])
    if x.shape[0] == 0:
        return np.zeros(classes), counts, reduced
    logits = x[0] @ tensors["head.w"] + tensors["head.b"]
    return logits, counts, reduced


def _head_count(layer_tensors: dict, dim: int) -> int:
    # heads are not stored in the float dict; the engine slices wq evenly,
    # so any divisor works identically — use the count stashed by export
    return int(layer_tensors.get("_heads", np.array(2)))


def hard_accuracy(tensors, thetas, betas, ids, labels, classes: int,
                  heads: int) -> tuple[float, float]:
    """(accuracy, mean pruned fraction) of the binarized model."""
    tensors = dict(tensors)
    layers = len(thetas)
    for l in range(layers):
        tensors[f"layer{l}._heads"] = np.array(heads)
    correct, pruned = 0, 0.0
    for row, y in zip(ids, labels):
        logits, counts, _ = hard_forward(tensors, thetas, betas, row, classes)
        correct += int(np.argmax(logits) == y)
        pruned += 1.0 - counts[-1] / counts[0]
    return correct / len(labels), pruned / len(labels)
