"""Command-line front end: run, verify, and benchmark the engine.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
All commands are deterministic under fixed seeds and write
machine-readable output (JSON reports, CSV tables) plus a short human
summary on standard output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .channel import LAN, WAN, NetworkModel
from .model import (ModelFormatError, ModelManifest, load_model,
                    make_toy_model)
from .pipeline import (FaultyTape, InferenceReport, layer0_importance,
                       plaintext_forward, private_forward)
from .ring import FixedPointParams, encode
from .dealer import DealerTape

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2

ORACLE_TOL = 2.0 ** -5

# benchmark model shape: enough layers that the fixed post-prune per-layer
# cost matters, head/dim sizes that keep attention the dominant quadratic term
BENCH_LAYERS = 32
BENCH_DIM = 16
BENCH_HEADS = 8
BENCH_FFN = 32
BENCH_VOCAB = 32
BENCH_KEEP = 8


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0, help="master seed")
    sp.add_argument("--out", type=str, default=None, help="output file path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcprune",
                                 description="two-party private transformer "
                                             "inference with oblivious token pruning")
    sub = ap.add_subparsers(dest="command", required=True)

    ip = sub.add_parser("infer", help="run one private inference")
    ip.add_argument("--model", type=str, required=True,
                    help="path to <name>.manifest.json")
    ip.add_argument("--input", type=str, default=None,
                    help="JSON file with {\"token_ids\": [...]}")
    ip.add_argument("--tokens", type=int, default=None,
                    help="synthesize this many random tokens instead of --input")
    ip.add_argument("--variant", choices=["baseline", "prune", "prune-reduce"],
                    default="prune-reduce")
    ip.add_argument("--net", choices=["lan", "wan"], default="lan")
    ip.add_argument("--bw", type=float, default=None,
                    help="custom bandwidth, bits per second")
    ip.add_argument("--lat", type=float, default=None,
                    help="custom one-way latency, seconds")
    _add_common(ip)

    vp = sub.add_parser("verify", help="oracle-equivalence sweep on toy models")
    vp.add_argument("--cases", type=int, default=5)
    vp.add_argument("--dim", type=int, default=16)
    vp.add_argument("--tokens", type=int, default=12)
    vp.add_argument("--inject-fault", action="store_true",
                    help="corrupt one dealer triple (harness sanity check)")
    _add_common(vp)

    bp = sub.add_parser("bench", help="communication scaling table")
    bp.add_argument("--sizes", type=str, default="32,64,128,256",
                    help="comma-separated token counts")
    bp.add_argument("--dim", type=int, default=BENCH_DIM)
    bp.add_argument("--variant", choices=["baseline", "prune", "prune-reduce", "all"],
                    default="all")
    _add_common(bp)
    return ap


def _load_tokens(args, model: ModelManifest) -> np.ndarray:
    if args.input is not None:
        path = Path(args.input)
        if not path.exists():
            raise FileNotFoundError(f"input not found: {path}")
        doc = json.loads(path.read_text())
        return np.asarray(doc["token_ids"], dtype=np.int64)
    if args.tokens is not None:
        rng = np.random.Generator(np.random.PCG64(args.seed))
        return rng.integers(0, model.vocab, size=args.tokens)
    raise ValueError("provide --input or --tokens")


def cmd_infer(args) -> int:
    model = load_model(args.model)
    ids = _load_tokens(args, model)
    report = private_forward(model, ids, seed=args.seed, variant=args.variant)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    if args.bw is not None or args.lat is not None:
        net = NetworkModel(args.bw if args.bw is not None else LAN.bandwidth_bps,
                           args.lat if args.lat is not None else LAN.latency_s)
        est = report.total_bytes * 8 / net.bandwidth_bps + report.total_rounds * net.latency_s
    else:
        est = report.est_lan_s if args.net == "lan" else report.est_wan_s
    print(f"infer: variant={args.variant} tokens={report.token_counts[0]}"
          f"->{report.token_counts[-1]} bytes={report.total_bytes}"
          f" rounds={report.total_rounds} est[{args.net}]={est:.4f}s")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.cases <= 0:
        print("verify: no cases")
        return EXIT_VERIFY_FAIL
    rng = np.random.Generator(np.random.PCG64(args.seed))
    failures = 0
    lines = []
    for i in range(args.cases):
        layers = int(rng.integers(1, 4))
        dim = int(rng.choice([8, 16, args.dim]))
        heads = 2 if dim % 2 == 0 else 1
        n = int(rng.integers(4, args.tokens + 1))
        model = make_toy_model(layers=layers, dim=dim, heads=heads,
                               ffn_dim=2 * dim, vocab=32, classes=4,
                               seed=int(rng.integers(0, 2 ** 31)),
                               theta=1.0 / max(n, 2) * 0.98,
                               beta=1.0 / max(n, 2) * 1.02)
        ids = rng.integers(0, 32, size=n)
        tape = FaultyTape if (args.inject_fault and i == 0) else DealerTape
        rep = private_forward(model, ids, seed=int(rng.integers(0, 2 ** 31)),
                              variant="prune-reduce", tape_cls=tape)
        logits, counts, _ = plaintext_forward(model, ids, "fixed-point", "prune-reduce")
        err = float(np.max(np.abs(np.asarray(rep.logits) - logits))) if len(logits) else 0.0
        ok = err <= ORACLE_TOL and rep.token_counts == counts
        failures += 0 if ok else 1
        status = "pass" if ok else "FAIL"
        lines.append(f"case {i}: {status} (L={layers} D={dim} n={n} "
                     f"max|err|={err:.2e} counts={'ok' if rep.token_counts == counts else 'MISMATCH'})")
    summary = "\n".join(lines) + f"\nverify: {args.cases - failures}/{args.cases} passed\n"
    if args.out:
        Path(args.out).write_text(summary)
    sys.stdout.write(summary)
    return EXIT_OK if failures == 0 else EXIT_VERIFY_FAIL


def bench_model(n: int, dim: int, seed: int) -> tuple[ModelManifest, np.ndarray]:
    """Toy model with layer-0 thresholds calibrated to keep a fixed token
    budget, so later layers run at constant width regardless of n."""
    model = make_toy_model(layers=BENCH_LAYERS, dim=dim, heads=BENCH_HEADS,
                           ffn_dim=BENCH_FFN, vocab=BENCH_VOCAB, classes=4,
                           seed=seed, theta=-1.0, beta=2.0)
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    ids = rng.integers(0, BENCH_VOCAB, size=n)
    scores = np.sort(layer0_importance(model, ids))
    keep = min(BENCH_KEEP, n)
    if keep < n:
        theta0 = float((scores[-keep] + scores[-keep - 1]) / 2)
        p = model.params
        model.layers[0].theta = encode(theta0, p)
        # beta stays above every score: all survivors get reduced degree
    return model, ids


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise ValueError("empty --sizes list")
    variants = (["baseline", "prune", "prune-reduce"]
                if args.variant == "all" else [args.variant])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["n", "variant", "bytes", "rounds", "est_lan_s", "est_wan_s", "swaps"])
    for n in sizes:
        model, ids = bench_model(n, args.dim, args.seed)
        for variant in variants:
            rep = private_forward(model, ids, seed=args.seed, variant=variant)
            swaps = sum(r["swaps"] for r in rep.prune_reports)
            writer.writerow([n, variant, rep.total_bytes, rep.total_rounds,
                             f"{rep.est_lan_s:.6f}", f"{rep.est_wan_s:.6f}", swaps])
            print(f"bench: n={n} variant={variant} bytes={rep.total_bytes} "
                  f"rounds={rep.total_rounds} swaps={swaps}")
    table = buf.getvalue()
    if args.out:
        Path(args.out).write_text(table)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0,) else 0
    try:
        if args.command == "infer":
            return cmd_infer(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "bench":
            return cmd_bench(args)
        raise ValueError(f"unknown command {args.command!r}")
    except (FileNotFoundError, ModelFormatError, ValueError, KeyError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
