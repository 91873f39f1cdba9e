"""Command-line entry point: ``xinggan <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .checkpoint import read_checkpoint
from .config import TrainConfig, parse_key_values
from .metrics import CSV_HEADER


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- images -------------------------------------------------------------------


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 255] by affine map with round-half-up; channel-first in,
    HxWxC (or HxW) out."""
    x = (np.asarray(img, dtype=np.float64) + 1.0) * 127.5
    x = np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)
    return x.transpose(1, 2, 0) if x.ndim == 3 else x


def save_png(path: str, img: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(to_uint8(img)).save(path)


def normalize_map(m: np.ndarray) -> np.ndarray:
    """Min-max normalize to [-1, 1] for display; constant maps become 0."""
    lo, hi = float(m.min()), float(m.max())
    if hi <= lo:
        return np.zeros_like(m, dtype=np.float64)
    return (m - lo) / (hi - lo) * 2.0 - 1.0


def attention_grid(candidates: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Two rows: the 2N+1 candidates (appearance intermediates, shape
    intermediates, input image) and below each its normalized attention map."""
    gray = np.stack([np.repeat(normalize_map(m)[None], 3, axis=0) for m in maps])
    top = np.concatenate(list(candidates), axis=2)
    bottom = np.concatenate(list(gray), axis=2)
    return np.concatenate([top, bottom], axis=1)


# -- config handling ----------------------------------------------------------------


def _load_config(args) -> TrainConfig:
    kwargs = {}
    try:
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as f:
                kwargs.update(parse_key_values(f.read()))
        for item in getattr(args, "set", None) or []:
            kwargs.update(parse_key_values(item))
        if args.seed is not None:
            kwargs["master_seed"] = args.seed
        return TrainConfig(**kwargs)
    except (OSError, ValueError) as e:
        raise UsageError(f"bad config: {e}") from None


def _write_snapshot(out: str, text: str) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as f:
        f.write(text)


def _load_trainer(path: str, seed: int | None):
    from .train import Trainer

    text, tensors = read_checkpoint(path)
    if seed is not None:
        text = "".join(l + "\n" for l in text.splitlines() if not l.startswith("master_seed="))
        text += f"master_seed={seed}\n"
    return Trainer.from_state(text, tensors)


# -- subcommands ----------------------------------------------------------------------


def cmd_train(args) -> int:
    from .train import train

    cfg = _load_config(args)
    trainer = None
    if args.resume:
        trainer = _load_trainer(args.resume, args.seed)
        cfg = trainer.config
    res = train(cfg, args.out, trainer)
    if res.metrics:
        step, rep = res.metrics[-1]
        print(CSV_HEADER)
        print(rep.csv_row(step))
    print(f"checkpoint: {res.checkpoints[-1]}")
    return 0


def cmd_eval(args) -> int:
    tr = _load_trainer(args.checkpoint, args.seed)
    rep = tr.evaluate(args.n_samples, oracle=args.oracle)
    row = rep.csv_row(tr.iteration)
    if args.out:
        _write_snapshot(args.out, tr.config_text())
        with open(os.path.join(args.out, "metrics.csv"), "w") as f:
            f.write(CSV_HEADER + "\n" + row + "\n")
    print(CSV_HEADER)
    print(row)
    return 0


def cmd_generate(args) -> int:
    tr = _load_trainer(args.checkpoint, args.seed)
    _write_snapshot(args.out, tr.config_text())
    idx = list(range(args.sample, args.sample + args.count))
    if idx[-1] >= len(tr.test_set):
        raise UsageError(f"sample index {idx[-1]} out of range (held-out set has {len(tr.test_set)})")
    b = tr.test_set.batch(idx)
    gen = tr.generate(b["source"], b["pose_s"], b["pose_t"])
    for k, i in enumerate(idx):
        save_png(os.path.join(args.out, f"generated_{i:04d}.png"), gen[k])
    print(f"wrote {len(idx)} images to {args.out}")
    return 0


def dump_attention(trainer, sample: int, out: str) -> list[str]:
    """Write maps, intermediates and summaries for one held-out sample;
    returns the written paths."""
    from . import tensor as T

    if trainer.config.variant != "FULL":
        raise UsageError(f"dump-attention needs a FULL checkpoint, got variant {trainer.config.variant}")
    if not 0 <= sample < len(trainer.test_set):
        raise UsageError(f"sample index {sample} out of range (held-out set has {len(trainer.test_set)})")
    p = trainer.test_set[sample]
    g = trainer.G
    g.requires_grad_(False)
    o = g(T.Var(p.source), T.Var(p.pose_s), T.Var(p.pose_t))
    g.requires_grad_(True)
    att = o.attention.data
    if np.abs(att.sum(axis=0) - 1.0).max() > 1e-5 or att.min() < 0:
        raise RuntimeError("attention maps violate the per-pixel simplex")
    n = g.N
    os.makedirs(out, exist_ok=True)
    written = []

    def put(name, img):
        path = os.path.join(out, name)
        save_png(path, img)
        written.append(path)

    for k in range(2 * n + 1):
        put(f"attention_{k:02d}.png", normalize_map(att[k]))
    for k in range(n):
        put(f"intermediate_I_{k + 1:02d}.png", o.intermediates_i.data[k])
    for k in range(n):
        put(f"intermediate_P_{k + 1:02d}.png", o.intermediates_p.data[k])
    put("source.png", p.source)
    put("target.png", p.target)
    put("generated.png", o.final.data)
    cands = np.concatenate([o.intermediates_i.data, o.intermediates_p.data, p.source[None]])
    put("grid.png", attention_grid(cands, att))
    return written


def cmd_dump_attention(args) -> int:
    tr = _load_trainer(args.checkpoint, args.seed)
    _write_snapshot(args.out, tr.config_text())
    files = dump_attention(tr, args.sample, args.out)
    print(f"wrote {len(files)} images to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    results = run_all()
    ok = True
    for name, (err, tol) in results.items():
        good = err <= tol
        ok &= good
        print(f"{name:20s} rel_err={err:.3e} tol={tol:.0e} {'ok' if good else 'FAIL'}")
    return 0 if ok else 2


def cmd_synth_preview(args) -> int:
    from .synth import SynthDataset

    cfg = _load_config(args)
    _write_snapshot(args.out, cfg.to_text())
    ds = SynthDataset(cfg.master_seed, min(args.count, cfg.n_train_identities), 1,
                      height=cfg.height, width=cfg.width, sigma=cfg.sigma)
    for i in range(len(ds)):
        p = ds[i]
        pose = np.repeat(p.pose_t.max(axis=0)[None] * 2.0 - 1.0, 3, axis=0)
        save_png(os.path.join(args.out, f"pair_{i:04d}.png"),
                 np.concatenate([p.source, p.target, pose], axis=2))
    with open(os.path.join(args.out, "manifest.txt"), "w") as f:
        f.write(ds.manifest())
    print(f"wrote {len(ds)} previews to {args.out}")
    return 0


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xinggan", description="Pose-guided person image generation on synthetic data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default=None, config=True):
        if config:
            sp.add_argument("--config", help="key=value config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", default=out_default, help="output directory")

    sp = sub.add_parser("train", help="run alternating GAN training")
    common(sp, "runs/train")
    sp.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="held-out metrics for a checkpoint")
    common(sp, config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n-samples", type=int)
    sp.add_argument("--oracle", action="store_true", help="score real targets against themselves")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("generate", help="write generated held-out images as PNG")
    common(sp, "runs/generate", config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sample", type=int, default=0)
    sp.add_argument("--count", type=int, default=1)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("dump-attention", help="export co-attention maps and intermediates")
    common(sp, "runs/attention", config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sample", type=int, default=0)
    sp.set_defaults(func=cmd_dump_attention)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    sp.set_defaults(func=cmd_gradcheck, seed=None)

    sp = sub.add_parser("synth-preview", help="render synthetic training pairs")
    common(sp, "runs/synth")
    sp.add_argument("--count", type=int, default=8)
    sp.set_defaults(func=cmd_synth_preview)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"xinggan: error: {e}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError, KeyError) as e:
        print(f"xinggan: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
