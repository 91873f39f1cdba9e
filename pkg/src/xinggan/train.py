"""Alternating adversarial training, evaluation and checkpointing."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import read_checkpoint, to_bytes, write_checkpoint
from .config import TrainConfig
from .losses import (FeatureExtractor, LossWeights, adversarial_term, gan_loss_d, gan_loss_g,
                     l1_loss, perceptual_loss, total_loss)
from .metrics import EvalReport, detect_joints, mask_ssim, pckh, pose_mask, ssim
from .nets import Generator, build_discriminators
from .rng import SplitMix64, derive_seed
from .synth import train_test_split

log = logging.getLogger(__name__)

EVAL_CHUNK = 16


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


class Adam:
    """Adam with bias correction; moments keyed by parameter name."""

    def __init__(self, params: dict, lr: float = 2e-4, beta1: float = 0.5, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data = (p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


@dataclass
class StepLosses:
    d: float
    g_gan: float
    l1: float
    perceptual: float
    total: float

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in vars(self).values())


@dataclass
class TrainResult:
    trainer: "Trainer"
    metrics: list = field(default_factory=list)  # (iteration, EvalReport)
    losses: list = field(default_factory=list)  # (iteration, StepLosses)
    checkpoints: list = field(default_factory=list)


class Trainer:
    def __init__(self, config: TrainConfig):
        self.config = config
        seed = config.master_seed
        self.G = Generator(config.T, config.N, config.c, config.variant)
        self.G.initialize(derive_seed(seed, "G"))
        self.D_I, self.D_P = build_discriminators(config.d_base)
        self.D_I.initialize(derive_seed(seed, "D_I"))
        self.D_P.initialize(derive_seed(seed, "D_P"))
        self.fx = FeatureExtractor()
        self.weights = LossWeights(config.lambda_gan, config.lambda_l1, config.lambda_p)
        self.opt_g = Adam(self.g_params(), config.lr, config.beta1, config.beta2)
        self.opt_d = Adam(self.d_params(), config.lr, config.beta1, config.beta2)
        self.train_set, self.test_set = train_test_split(
            seed, config.n_train_identities, config.n_test_identities, config.pairs_per_identity,
            config.height, config.width, config.sigma, config.eval_pairs_per_identity)
        self.iteration = 0
        self._eval_batch = None

    # -- parameter bookkeeping -----------------------------------------------

    def g_params(self) -> dict:
        return dict(self.G.named_parameters())

    def d_params(self) -> dict:
        out = {f"D_I.{k}": p for k, p in self.D_I.named_parameters()}
        out.update({f"D_P.{k}": p for k, p in self.D_P.named_parameters()})
        return out

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {f"G.{k}": p.data for k, p in self.g_params().items()}
        out.update({k: p.data for k, p in self.d_params().items()})
        for tag, opt in (("G", self.opt_g), ("D", self.opt_d)):
            out.update({f"adam.{tag}.m.{k}": a for k, a in opt.m.items()})
            out.update({f"adam.{tag}.v.{k}": a for k, a in opt.v.items()})
        return out

    def config_text(self) -> str:
        return self.config.to_text() + f"iteration={self.iteration}\n"

    def checkpoint_bytes(self) -> bytes:
        return to_bytes(self.config_text(), self.state_tensors())

    def save(self, path) -> None:
        write_checkpoint(path, self.config_text(), self.state_tensors())

    @classmethod
    def load(cls, path) -> "Trainer":
        text, tensors = read_checkpoint(path)
        return cls.from_state(text, tensors)

    @classmethod
    def from_state(cls, text: str, tensors: dict) -> "Trainer":
        lines = text.splitlines()
        meta = dict(l.split("=", 1) for l in lines if l.startswith("iteration="))
        body = "\n".join(l for l in lines if not l.startswith("iteration="))
        tr = cls(TrainConfig.from_text(body))
        tr.iteration = int(meta.get("iteration", 0))
        for k, p in tr.g_params().items():
            p.data = _fetch(tensors, f"G.{k}", p.shape)
        for k, p in tr.d_params().items():
            p.data = _fetch(tensors, k, p.shape)
        for tag, opt in (("G", tr.opt_g), ("D", tr.opt_d)):
            for k in opt.m:
                opt.m[k] = _fetch(tensors, f"adam.{tag}.m.{k}", opt.m[k].shape)
                opt.v[k] = _fetch(tensors, f"adam.{tag}.v.{k}", opt.v[k].shape)
            opt.t = tr.iteration
        return tr

    # -- training ----------------------------------------------------------------

    def batch_indices(self, iteration: int) -> np.ndarray:
        rng = SplitMix64(derive_seed(self.config.master_seed, "batch", iteration))
        return rng.integers(0, len(self.train_set), self.config.batch_size)

    def step(self) -> StepLosses:
        """One D_I + D_P update followed by one generator update."""
        it = self.iteration
        b = self.train_set.batch(self.batch_indices(it))
        src, ps, tgt, pt = (T.Var(b[k]) for k in ("source", "pose_s", "target", "pose_t"))
        red = self.config.adv_reduction

        self.G.requires_grad_(True)
        try:
            fake = self.G(src, ps, pt).final
        except T.NonFiniteError:
            raise TrainingDiverged(it, "generator activations") from None

        # discriminator step on a detached generator output
        self.D_I.requires_grad_(True)
        self.D_P.requires_grad_(True)
        fake_d = fake.detach()
        loss_d = adversarial_term([gan_loss_d(self.D_I(src, tgt), self.D_I(src, fake_d)),
                                   gan_loss_d(self.D_P(pt, tgt), self.D_P(pt, fake_d))], red)
        if not np.isfinite(loss_d.item()):
            raise TrainingDiverged(it, "discriminator loss")
        self.opt_d.zero_grad()
        T.backward(loss_d)
        self.opt_d.step()

        # generator step; discriminators frozen
        self.D_I.requires_grad_(False)
        self.D_P.requires_grad_(False)
        l_gan = adversarial_term([gan_loss_g(self.D_I(src, fake)), gan_loss_g(self.D_P(pt, fake))], red)
        l_l1 = l1_loss(fake, tgt)
        l_p = perceptual_loss(fake, tgt, self.fx)
        total = total_loss((l_gan, l_l1, l_p), self.weights)
        losses = StepLosses(loss_d.item(), l_gan.item(), l_l1.item(), l_p.item(), total.item())
        if not losses.finite():
            raise TrainingDiverged(it, "generator loss")
        self.opt_g.zero_grad()
        T.backward(total)
        self.opt_g.step()
        self.D_I.requires_grad_(True)
        self.D_P.requires_grad_(True)
        self.iteration += 1
        return losses

    # -- evaluation --------------------------------------------------------------

    def eval_batch(self) -> dict:
        if self._eval_batch is None:
            self._eval_batch = self.test_set.batch(range(len(self.test_set)))
        return self._eval_batch

    def generate(self, source, pose_s, pose_t) -> np.ndarray:
        """Generator forward without building a graph; returns [B,3,H,W]."""
        self.G.requires_grad_(False)
        try:
            outs = []
            for i in range(0, len(source), EVAL_CHUNK):
                sl = slice(i, i + EVAL_CHUNK)
                outs.append(self.G(T.Var(source[sl]), T.Var(pose_s[sl]), T.Var(pose_t[sl])).final.data)
            return np.concatenate(outs)
        finally:
            self.G.requires_grad_(True)

    def evaluate(self, n_samples: int | None = None, oracle: bool = False) -> EvalReport:
        """Held-out metrics. ``oracle=True`` scores the real targets against
        themselves (sanity mode)."""
        b = self.eval_batch()
        n = len(b["source"]) if n_samples is None else min(n_samples, len(b["source"]))
        if oracle:
            gen = b["target"][:n]
        else:
            gen = self.generate(b["source"][:n], b["pose_s"][:n], b["pose_t"][:n])
        return score(gen, b["target"][:n], b["skeleton_t"][:n], self.config)


def score(generated: np.ndarray, targets: np.ndarray, skeletons, config: TrainConfig) -> EvalReport:
    """Aggregate metrics over samples in fixed order."""
    l1s, ss, mss, pks = [], [], [], []
    skipped = 0
    for g, t, sk in zip(generated, targets, skeletons):
        l1s.append(float(np.mean(np.abs(g.astype(np.float64) - t))))
        ss.append(ssim(g, t))
        mss.append(mask_ssim(g, t, pose_mask(sk, config.mask_radius, config.height, config.width)))
        p = pckh(detect_joints(g), sk)
        if p is None:
            skipped += 1
        else:
            pks.append(p)
    return EvalReport(float(np.mean(ss)), float(np.mean(mss)), float(np.mean(pks)) if pks else 0.0,
                      float(np.mean(l1s)), len(l1s), skipped)


def _fetch(tensors: dict, key: str, shape) -> np.ndarray:
    if key not in tensors:
        raise KeyError(f"checkpoint is missing tensor {key!r}")
    arr = tensors[key]
    if arr.shape != tuple(shape):
        raise ValueError(f"tensor {key!r} has shape {arr.shape}, expected {tuple(shape)}")
    return np.array(arr, dtype=np.float32)


def _limit_threads(n: int):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(n)


def train(config: TrainConfig, out_dir: str | None = None, trainer: Trainer | None = None,
          on_eval=None) -> TrainResult:
    """Run ``config.iterations`` steps. Writes ``config.txt``, ``metrics.csv``,
    ``losses.csv`` and checkpoints into ``out_dir`` when given.

    On a non-finite loss the run stops with :class:`TrainingDiverged`; the
    last checkpoint on disk is the last good one.
    """
    tr = trainer or Trainer(config)
    res = TrainResult(tr)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.txt"), "w") as f:
            f.write(config.to_text())
        metrics_f = open(os.path.join(out_dir, "metrics.csv"), "w")
        metrics_f.write("step,ssim,mask_ssim,pckh,l1,n_samples\n")
        losses_f = open(os.path.join(out_dir, "losses.csv"), "w")
        losses_f.write("step,d,g_gan,l1,perceptual,total\n")
    else:
        metrics_f = losses_f = None

    def do_eval():
        rep = tr.evaluate()
        res.metrics.append((tr.iteration, rep))
        log.info("iter %d  %s", tr.iteration, rep)
        if metrics_f:
            metrics_f.write(rep.csv_row(tr.iteration) + "\n")
            metrics_f.flush()
        if on_eval:
            on_eval(tr.iteration, rep)

    def do_save():
        if out_dir:
            path = os.path.join(out_dir, f"ckpt_{tr.iteration:06d}.xgck")
            tr.save(path)
            res.checkpoints.append(path)

    try:
        with _limit_threads(config.threads):
            if config.eval_every:
                do_eval()
            while tr.iteration < config.iterations:
                losses = tr.step()
                res.losses.append((tr.iteration, losses))
                if losses_f and tr.iteration % config.log_every == 0:
                    losses_f.write(f"{tr.iteration},{losses.d:.6f},{losses.g_gan:.6f},{losses.l1:.6f},"
                                   f"{losses.perceptual:.6f},{losses.total:.6f}\n")
                if config.eval_every and tr.iteration % config.eval_every == 0:
                    do_eval()
                if config.checkpoint_every and tr.iteration % config.checkpoint_every == 0:
                    do_save()
            if config.eval_every and (not res.metrics or res.metrics[-1][0] != tr.iteration):
                do_eval()
            if not res.checkpoints or not res.checkpoints[-1].endswith(f"{tr.iteration:06d}.xgck"):
                do_save()
    finally:
        for f in (metrics_f, losses_f):
            if f:
                f.close()
    return res
