import numpy as np
import pytest
from skimage.metrics import structural_similarity

from xinggan.metrics import (CSV_HEADER, EvalReport, detect_joints, mask_ssim, pckh, pose_mask, ssim,
                             ssim_unit)
from xinggan.rng import SplitMix64
from xinggan.synth import (LIMBS, N_JOINTS, PALETTE_LATTICE, Identity, Skeleton, limb_mask,
                           make_identity, render_person, sample_skeleton)

from oracles import ssim_direct


def _img(rng, h=24, w=16):
    return rng.uniform(-1, 1, (3, h, w))


# -- SSIM ---------------------------------------------------------------------------


def test_ssim_identical_is_one(rng):
    x = _img(rng)
    assert ssim(x, x) == 1.0


def test_ssim_anticorrelated_negative():
    x = -np.ones((3, 16, 16))
    x[:, :, 8:] = 1.0
    assert ssim(x, -x) < 0


def test_ssim_matches_direct_formula(rng):
    for _ in range(3):
        a, b = rng.uniform(0, 1, (3, 14, 12)), rng.uniform(0, 1, (3, 14, 12))
        assert abs(ssim_unit(a, b) - ssim_direct(a, b)) <= 1e-8


def test_ssim_matches_skimage(rng):
    a, b = rng.uniform(0, 1, (3, 32, 20)), rng.uniform(0, 1, (3, 32, 20))
    ref = structural_similarity(a, b, channel_axis=0, data_range=1.0, gaussian_weights=True,
                                sigma=1.5, use_sample_covariance=False)
    # skimage averages over a cropped 'same' map; agreement is approximate
    assert abs(ssim_unit(a, b) - ref) < 0.02


def test_ssim_symmetric(rng):
    a, b = _img(rng), _img(rng)
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-9


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((3, 10, 20)), np.zeros((3, 10, 20)))
    with pytest.raises(ValueError):
        ssim(np.zeros((3, 16, 16)), np.zeros((3, 16, 17)))


# -- masks ----------------------------------------------------------------------------


def _sample(seed=0, ident=0):
    idt = make_identity(ident, 42)
    sk = sample_skeleton(idt, SplitMix64(seed))
    return idt, sk


def test_mask_covers_limbs_and_grows():
    _, sk = _sample(1)
    limbs = limb_mask(sk, 64, 32)
    areas = []
    for r in range(1, 6):
        m = pose_mask(sk, r)
        assert set(np.unique(m)) <= {0, 1}
        assert np.all(m[limbs] == 1)
        areas.append(int(m.sum()))
    assert areas == sorted(areas)


def test_empty_edge_list_gives_empty_mask():
    _, sk = _sample(2)
    assert pose_mask(sk, 3, limbs=()).sum() == 0
    with pytest.raises(ValueError):
        pose_mask(sk, 0)


def test_mask_ssim_properties(rng):
    a, b = _img(rng), _img(rng)
    full = np.ones((24, 16))
    assert mask_ssim(a, b, full) == pytest.approx(ssim(a, b), abs=1e-15)
    m = np.zeros((24, 16))
    m[4:20, 3:12] = 1
    assert mask_ssim(a, a, m) == 1.0
    with pytest.raises(ValueError, match="empty"):
        mask_ssim(a, b, np.zeros((24, 16)))


def test_mask_ssim_ignores_outside_differences(rng):
    a = _img(rng)
    b = a.copy()
    b[:, :6] = rng.uniform(-1, 1, (3, 6, 16))
    m = np.zeros((24, 16))
    m[12:, :] = 1
    assert mask_ssim(a, b, m) == 1.0
    assert ssim(a, b) < 1.0


# -- joint detection / PCKh --------------------------------------------------------------


def test_uniform_gray_detects_nothing():
    assert detect_joints(np.full((3, 64, 32), -0.5)) == [None] * N_JOINTS


def test_clean_render_detection():
    idt, sk = _sample(3)
    pred = detect_joints(render_person(sk, idt))
    assert all(p is not None for p in pred)
    err = [np.hypot(p[0] - g[0], p[1] - g[1]) for p, g in zip(pred, sk.joints)]
    assert np.mean(err) <= 1.0


def test_detection_independent_of_palette():
    idt, sk = _sample(4)
    other = Identity(99, PALETTE_LATTICE[::-1][:len(LIMBS)], idt.bone_lengths, idt.torso_width)
    assert detect_joints(render_person(sk, idt)) == detect_joints(render_person(sk, other))


def test_detection_mean_error_thousand_samples():
    idts = [make_identity(i, 42) for i in range(40)]
    rng = SplitMix64(77)
    errs = []
    for k in range(1000):
        idt = idts[k % 40]
        sk = sample_skeleton(idt, rng)
        for p, g in zip(detect_joints(render_person(sk, idt)), sk.joints):
            assert p is not None
            errs.append(np.hypot(p[0] - g[0], p[1] - g[1]))
    assert np.mean(errs) <= 1.0


def test_pckh_cases():
    _, sk = _sample(5)
    pts = [tuple(map(float, j)) for j in sk.joints]
    assert pckh(pts, sk) == 1.0
    assert pckh([None] * N_JOINTS, sk) == 0.0
    canon = sample_skeleton(make_identity(0, 42), SplitMix64(0), noise=0.0)
    assert canon.head_length() == 8.0
    shifted = [(x + 10.0, y) for x, y in canon.joints]
    assert pckh(shifted, canon) == 0.0


def test_pckh_is_multiple_of_eighteenth():
    _, sk = _sample(6)
    pts = [tuple(map(float, j)) for j in sk.joints]
    for k in range(N_JOINTS + 1):
        pred = pts[:k] + [None] * (N_JOINTS - k)
        assert pckh(pred, sk) == k / N_JOINTS


def test_pckh_degenerate_head_skipped():
    joints = np.zeros((N_JOINTS, 2), dtype=np.int64)
    assert pckh([(0.0, 0.0)] * N_JOINTS, Skeleton(joints)) is None


# -- report ------------------------------------------------------------------------------


def test_report_csv_round_trip():
    rep = EvalReport(0.5, 0.6, 0.75, 0.1, 80)
    row = rep.csv_row(500)
    assert len(row.split(",")) == len(CSV_HEADER.split(",")) == 6
    step, back = EvalReport.from_csv_row(row)
    assert step == 500 and back == rep
    with pytest.raises(ValueError):
        EvalReport.from_csv_row("1,2,3")
