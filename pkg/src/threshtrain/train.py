"""Two-phase threshold training.

Phase 1 jointly trains weights and thresholds with soft masks; phase 2
freezes the thresholds, binarizes the masks and fine-tunes the weights
on the task loss alone.  An outer loop re-runs both phases with the
pruning weight halved whenever the binarized accuracy misses the target.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import make_dataset
from .export import export_model
from .masks import total_loss
from .model import ModelConfig, ToyTransformer, hard_accuracy


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    seq_len: int = 12
    train_samples: int = 512
    eval_samples: int = 256
    temperature: float = 0.05
    lam: float = 0.5
    alpha: float = 0.5
    accuracy_target: float = 0.9
    phase1_steps: int = 250
    phase2_steps: int = 80
    outer_cap: int = 5
    lr: float = 5e-3
    seed: int = 0


@dataclass
class TrainResult:
    model: ToyTransformer
    accuracy: float
    pruned_fraction: float
    thetas: list[float]
    betas: list[float]
    outer_iterations: int
    converged: bool


def train_two_phase(cfg: TrainConfig) -> TrainResult:
    torch.manual_seed(cfg.seed)
    mc = cfg.model
    ids_tr, y_tr = make_dataset(cfg.train_samples, cfg.seq_len, mc.vocab,
                                mc.classes, seed=cfg.seed)
    ids_ev, y_ev = make_dataset(cfg.eval_samples, cfg.seq_len, mc.vocab,
                                mc.classes, seed=cfg.seed + 1)
    xb = torch.as_tensor(ids_tr)
    yb = torch.as_tensor(y_tr)
    ce = torch.nn.CrossEntropyLoss()
    lam = cfg.lam
    best = None
    for outer in range(1, cfg.outer_cap + 1):
        model = ToyTransformer(mc, seed=cfg.seed + outer)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        for _ in range(cfg.phase1_steps):
            opt.zero_grad()
            logits, masks = model(xb, temperature=cfg.temperature)
            loss = total_loss(ce(logits, yb), masks, lam, cfg.alpha)
            loss.backward()
            opt.step()
        # phase 2: thresholds frozen, hard masks, task loss only
        model.theta.requires_grad_(False)
        model.beta.requires_grad_(False)
        wopt = torch.optim.Adam(
            [p for p in model.parameters() if p.requires_grad], lr=cfg.lr)
        for _ in range(cfg.phase2_steps):
            wopt.zero_grad()
            logits, _ = model(xb, binary=True)
            loss = ce(logits, yb)
            loss.backward()
            wopt.step()
        thetas = model.theta.detach().tolist()
        betas = model.beta.detach().tolist()
        acc, pruned = hard_accuracy(model.export_tensors(), thetas, betas,
                                    ids_ev, y_ev, mc.classes, mc.heads)
        if best is None or acc > best.accuracy:
            best = TrainResult(model, acc, pruned, thetas, betas, outer,
                               acc >= cfg.accuracy_target)
        if acc >= cfg.accuracy_target:
            return TrainResult(model, acc, pruned, thetas, betas, outer, True)
        lam /= 2.0  # too aggressive: relax the pruning pressure and retry
    warnings.warn(f"accuracy target {cfg.accuracy_target} not reached after "
                  f"{cfg.outer_cap} outer iterations; exporting best "
                  f"checkpoint (accuracy {best.accuracy:.3f})")
    return best


def train_and_export(stem, cfg: TrainConfig):
    """Convenience wrapper: train, then write the engine file pair."""
    res = train_two_phase(cfg)
    mc = cfg.model
    mpath, bpath = export_model(stem, res.model.export_tensors(),
                                res.thetas, res.betas, heads=mc.heads,
                                ffn_dim=mc.ffn_dim, vocab=mc.vocab,
                                classes=mc.classes)
    return res, mpath, bpath
