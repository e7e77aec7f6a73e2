"""Acceptance criteria for the threshold-learning package.

S1. Gradient checks: analytic (autograd) vs central finite-difference
    gradients for the soft masks, the blended activation, and the total
    training loss agree within 1e-4 relative on 100 random cases.
S2. Pruning quality: on the planted-keyword classification task the
    trained model prunes >= 30% of tokens on average while losing at
    most 2 accuracy points against an unpruned baseline trained with
    the pruning weight set to zero.
S3. Handoff: five learner-exported model file pairs each pass the
    engine's manifest validation, and the engine's private run matches
    its fixed-point plaintext oracle on them (identical per-layer token
    counts, logits within 2^-5).
"""

import numpy as np
import pytest
import torch

from mpcprune.model import load_model
from mpcprune.pipeline import plaintext_forward, private_forward

from threshtrain.data import make_dataset
from threshtrain.masks import mixed_activations, soft_masks, total_loss
from threshtrain.model import ModelConfig
from threshtrain.train import TrainConfig, train_and_export, train_two_phase

REL_TOL = 1e-4
LOGIT_TOL = 2.0 ** -5


def _directional_check(inputs, fn, rng, h=1e-5):
    """Compare autograd directional derivative against central differences.

    Returns the relative error between the two scalar values.
    """
    leaves = [t.clone().detach().requires_grad_(True) for t in inputs]
    fn(*leaves).backward()
    dirs = [torch.as_tensor(rng.standard_normal(t.shape), dtype=torch.float64)
            for t in leaves]
    norm = torch.sqrt(sum((d * d).sum() for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum((t.grad * d).sum() for t, d in zip(leaves, dirs)).item()
    plus = fn(*[t.detach() + h * d for t, d in zip(leaves, dirs)]).item()
    minus = fn(*[t.detach() - h * d for t, d in zip(leaves, dirs)]).item()
    fd = (plus - minus) / (2 * h)
    return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)


def test_S1_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    worst = 0.0
    for case in range(100):
        B, n = int(rng.integers(1, 4)), int(rng.integers(2, 9))
        temperature = float(rng.uniform(0.05, 0.5))
        lam = float(rng.uniform(0.0, 2.0))
        alpha = float(rng.uniform(0.0, 1.0))
        scores = torch.as_tensor(rng.uniform(-1.0, 1.0, (B, n)))
        theta = torch.as_tensor(rng.uniform(-0.5, 0.5, ()))
        beta = theta.detach() + torch.as_tensor(rng.uniform(0.05, 0.5, ()))
        x = torch.as_tensor(rng.uniform(-4.0, 4.0, (B, n, 5)))
        wsum = torch.as_tensor(rng.standard_normal((B, n, 5)))

        kind = case % 3
        if kind == 0:
            def fn(s, th, be):
                mt, mb = soft_masks(s, th, be, temperature)
                return (mt * mt).sum() + mb.sum()
            err = _directional_check([scores, theta, beta], fn, rng)
        elif kind == 1:
            def fn(xv, mb):
                return (mixed_activations(xv, torch.sigmoid(mb[..., 0]))
                        * torch.sigmoid(xv)).sum()
            err = _directional_check([x, wsum], fn, rng)
        else:
            def fn(s, th, be, xv):
                mt, mb = soft_masks(s, th, be, temperature)
                task = (mixed_activations(xv, mb) ** 2).mean()
                return total_loss(task, [(mt, mb)], lam, alpha)
            err = _directional_check([scores, theta, beta, x], fn, rng)
        worst = max(worst, err)
    assert worst <= REL_TOL, f"worst relative gradient error {worst:.2e}"


@pytest.mark.slow
def test_S2_pruning_with_bounded_accuracy_drop():
    base = train_two_phase(TrainConfig(lam=0.0, outer_cap=1, seed=0))
    trained = train_two_phase(TrainConfig(seed=0))
    assert trained.pruned_fraction >= 0.30, (
        f"only {trained.pruned_fraction:.2%} of tokens pruned")
    assert trained.accuracy >= base.accuracy - 0.02, (
        f"accuracy dropped from {base.accuracy:.3f} to {trained.accuracy:.3f}")


@pytest.mark.slow
def test_S3_exported_models_match_engine_oracle(tmp_path):
    shapes = [
        ModelConfig(layers=1, dim=8, heads=1, ffn_dim=16),
        ModelConfig(layers=1, dim=16, heads=2, ffn_dim=24),
        ModelConfig(layers=2, dim=8, heads=2, ffn_dim=16),
        ModelConfig(layers=2, dim=16, heads=2, ffn_dim=32),
        ModelConfig(layers=2, dim=16, heads=4, ffn_dim=32),
    ]
    for i, mc in enumerate(shapes):
        cfg = TrainConfig(model=mc, seed=i, phase1_steps=60, phase2_steps=20,
                          outer_cap=1, accuracy_target=0.0,
                          train_samples=128, eval_samples=64)
        _, mpath, bpath = train_and_export(tmp_path / f"m{i}", cfg)
        model = load_model(mpath, bpath)
        model.validate()
        ids, _ = make_dataset(1, cfg.seq_len, mc.vocab, mc.classes,
                              seed=100 + i)
        ids = ids[0]
        ref_logits, ref_counts, ref_reduced = plaintext_forward(
            model, ids, mode="fixed-point", variant="prune-reduce")
        rep = private_forward(model, ids, seed=i, variant="prune-reduce")
        assert rep.token_counts == list(ref_counts)
        assert rep.reduced_counts == list(ref_reduced)
        err = float(np.max(np.abs(np.asarray(rep.logits) - ref_logits)))
        assert err <= LOGIT_TOL, f"model {i}: logit error {err}"
