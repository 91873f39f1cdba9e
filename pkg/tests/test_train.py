import os

import numpy as np
import pytest

from xinggan import tensor as T
from xinggan.checkpoint import read_checkpoint
from xinggan.config import TrainConfig
from xinggan.metrics import CSV_HEADER, EvalReport
from xinggan.train import Adam, Trainer, TrainingDiverged, train


def tiny(**kw):
    base = dict(T=1, N=2, c=8, d_base=8, n_train_identities=4, n_test_identities=2,
                pairs_per_identity=2, eval_pairs_per_identity=1, batch_size=2, iterations=2,
                eval_every=0, checkpoint_every=0)
    base.update(kw)
    return TrainConfig(**base)


def test_config_text_round_trip():
    cfg = tiny(variant="SA+AS", lr=1e-3)
    assert TrainConfig.from_text(cfg.to_text()) == cfg
    assert TrainConfig.from_text("# comment\nT = 5  # inline\n").T == 5
    with pytest.raises(ValueError, match="unknown config key"):
        TrainConfig.from_text("bogus=1")
    with pytest.raises(ValueError, match="expects int"):
        TrainConfig.from_text("T=three")
    with pytest.raises(ValueError):
        TrainConfig(height=62)


def test_defaults_follow_training_recipe():
    cfg = TrainConfig()
    assert (cfg.lambda_gan, cfg.lambda_l1, cfg.lambda_p) == (5.0, 50.0, 50.0)
    assert (cfg.lr, cfg.beta1, cfg.beta2) == (2e-4, 0.5, 0.999)
    assert (cfg.T, cfg.N, cfg.iterations, cfg.batch_size) == (3, 4, 2000, 4)
    big = TrainConfig.full_size()
    assert (big.T, big.N, big.iterations, big.height, big.width) == (9, 10, 90_000, 128, 64)


def test_adam_first_step_moves_by_lr():
    p = T.Parameter((3,))
    p.grad = np.array([1.0, -2.0, 0.5], dtype=np.float32)
    opt = Adam({"p": p}, lr=0.1)
    opt.step()
    np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], atol=1e-6)


def test_zero_iterations_equals_initialization(tmp_path):
    cfg = tiny(iterations=0)
    res = train(cfg, str(tmp_path))
    _, tensors = read_checkpoint(res.checkpoints[-1])
    fresh = Trainer(cfg)
    for k, v in fresh.state_tensors().items():
        assert np.array_equal(tensors[k], v)
    tr = Trainer.load(res.checkpoints[-1])
    b = tr.test_set.batch([0])
    out = tr.G(T.Var(b["source"]), T.Var(b["pose_s"]), T.Var(b["pose_t"]))
    assert np.array_equal(out.code_i.data, out.code_i0.data)


def test_alternation_audit():
    tr = Trainer(tiny())
    snap = lambda params: {k: p.data.copy() for k, p in params.items()}
    calls = []
    d_step, g_step = tr.opt_d.step, tr.opt_g.step

    def audited(step, frozen, tag):
        def run():
            before = snap(frozen())
            step()
            after = snap(frozen())
            assert all(np.array_equal(before[k], after[k]) for k in before), tag
            calls.append(tag)
        return run

    tr.opt_d.step = audited(d_step, tr.g_params, "D")
    tr.opt_g.step = audited(g_step, tr.d_params, "G")
    g0, d0 = snap(tr.g_params()), snap(tr.d_params())
    tr.step()
    assert calls == ["D", "G"]
    # both networks did move
    assert any(not np.array_equal(g0[k], p.data) for k, p in tr.g_params().items())
    assert any(not np.array_equal(d0[k], p.data) for k, p in tr.d_params().items())


def test_losses_finite_and_logged(tmp_path):
    res = train(tiny(iterations=3, log_every=1), str(tmp_path))
    assert all(l.finite() for _, l in res.losses)
    lines = (tmp_path / "losses.csv").read_text().splitlines()
    assert lines[0] == "step,d,g_gan,l1,perceptual,total" and len(lines) == 4


def test_variant_parameter_names():
    sa = Trainer(tiny(variant="SA")).state_tensors()
    assert not any(k.startswith("G.as_blocks") or k.endswith(".beta") and v.ndim == 0 for k, v in sa.items())
    assert "G.sa_blocks.0.alpha" in sa
    as_ = Trainer(tiny(variant="AS")).state_tensors()
    assert "G.as_blocks.0.beta" in as_ and not any("alpha" in k for k in as_)
    full = Trainer(tiny()).state_tensors()
    assert "G.attention_head.out.weight" in full


def test_generate_equals_generator_forward():
    tr = Trainer(tiny())
    b = tr.test_set.batch([0, 1])
    direct = tr.G(T.Var(b["source"]), T.Var(b["pose_s"]), T.Var(b["pose_t"])).final.data
    assert np.array_equal(tr.generate(b["source"], b["pose_s"], b["pose_t"]), direct)


def test_oracle_evaluation_is_perfect():
    rep = Trainer(tiny()).evaluate(oracle=True)
    assert rep.ssim == 1.0 and rep.mask_ssim == 1.0 and rep.pckh == 1.0 and rep.l1 == 0.0


def test_untrained_pckh_reference():
    rep = Trainer(tiny(c=64, T=3, N=4, d_base=64)).evaluate()
    assert 0.0 <= rep.pckh <= 0.1


def test_metrics_csv(tmp_path):
    train(tiny(iterations=2, eval_every=1), str(tmp_path))
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert [EvalReport.from_csv_row(l)[0] for l in lines[1:]] == [0, 1, 2]
    assert all(len(l.split(",")) == 6 for l in lines)


def test_checkpoint_byte_identical_at_every_save(tmp_path):
    res = train(tiny(iterations=4, checkpoint_every=2), str(tmp_path))
    assert [os.path.basename(p) for p in res.checkpoints] == ["ckpt_000002.xgck", "ckpt_000004.xgck"]
    for path in res.checkpoints:
        raw = open(path, "rb").read()
        assert Trainer.load(path).checkpoint_bytes() == raw


def test_rerun_and_resume_bit_identical(tmp_path):
    a = train(tiny(iterations=4), str(tmp_path / "a"))
    b = train(tiny(iterations=4), str(tmp_path / "b"))
    final = open(a.checkpoints[-1], "rb").read()
    assert final == open(b.checkpoints[-1], "rb").read()
    half = train(tiny(iterations=2), str(tmp_path / "c"))
    tr = Trainer.load(half.checkpoints[-1])
    tr.config.iterations = 4
    resumed = train(tr.config, str(tmp_path / "d"), tr)
    assert open(resumed.checkpoints[-1], "rb").read() == final


def test_divergence_keeps_last_good_checkpoint(tmp_path):
    cfg = tiny(iterations=4, checkpoint_every=1)
    tr = Trainer(cfg)
    real_step = tr.step

    def poisoned():
        if tr.iteration == 2:
            tr.G.image_encoder.conv1.weight.data[:] = np.nan
        return real_step()

    tr.step = poisoned
    with pytest.raises(TrainingDiverged, match="iteration 2") as info:
        train(cfg, str(tmp_path), tr)
    assert info.value.iteration == 2
    assert sorted(os.listdir(tmp_path))[:2] == ["ckpt_000001.xgck", "ckpt_000002.xgck"]
    Trainer.load(tmp_path / "ckpt_000002.xgck")
    assert not (tmp_path / "ckpt_000003.xgck").exists()
