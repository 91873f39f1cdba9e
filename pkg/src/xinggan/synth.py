"""Procedural stick-person pose-transfer data.

A person is an 18-joint skeleton (OpenPose ordering) drawn as colored limb
segments on a gray background, with a universal colored marker disk on
every joint. Limb colors identify the person; marker colors identify the
joint, which lets :func:`xinggan.metrics.detect_joints` read poses back off
generated images.

Everything is regenerated from seeds; nothing is stored on disk except the
text manifest.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .rng import SplitMix64, derive_seed

N_JOINTS = 18
JOINT_NAMES = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow",
    "l_wrist", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear",
)
# parent of each joint in the kinematic tree; the neck is the root
PARENT = (1, -1, 1, 2, 3, 1, 5, 6, 1, 8, 9, 1, 11, 12, 0, 0, 14, 15)
# limbs are exactly the tree edges, drawn in this order
LIMBS = tuple((PARENT[j], j) for j in
              (0, 14, 15, 16, 17, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13))
HEAD_SEGMENT = (0, 1)  # nose-neck, the PCKh normalizer

# canonical joint positions at 64x32, as (dx from the vertical center line, y)
_CANONICAL_64x32 = np.array([
    (0, 9), (0, 17), (-6, 17), (-8, 27), (-9, 36), (6, 17), (8, 27), (9, 36),
    (-4, 37), (-5, 48), (-5, 58), (4, 37), (5, 48), (5, 58),
    (-3, 6), (3, 6), (-7, 8), (7, 8),
], dtype=np.float64)

# angular noise scale (radians) per joint, relative to its parent bone
_ANGLE_STD = np.array([
    0.08, 0.0, 0.10, 0.45, 0.45, 0.10, 0.45, 0.45,
    0.08, 0.25, 0.20, 0.08, 0.25, 0.20,
    0.05, 0.05, 0.05, 0.05,
])
_FACE = {0, 14, 15, 16, 17}

BACKGROUND = -0.5
LIMB_HALF_WIDTH = 1.0
MARKER_RADIUS = 2.0
MARGIN = 2


def _marker_table() -> np.ndarray:
    """18 joint marker colors in [0,1] RGB from the saturated lattice
    {0, .5, 1}^3 (every color has a channel at 0 or 1)."""
    cands = [c for c in product((0.0, 0.5, 1.0), repeat=3) if c != (0.5, 0.5, 0.5)]
    cands.sort(key=lambda c: (-sum(v in (0.0, 1.0) for v in c), c))
    return np.array(cands[:N_JOINTS])


MARKER_COLORS = _marker_table()
# identity limb colors live on a 4-level lattice inside [0.3, 0.7]^3, at least
# 0.3 away from every marker color in some channel
_PALETTE_LEVELS = np.linspace(0.3, 0.7, 4)
PALETTE_LATTICE = np.array(list(product(_PALETTE_LEVELS, repeat=3)))


@dataclass
class Skeleton:
    joints: np.ndarray  # (18, 2) integer pixel coords (x, y)

    def head_length(self) -> float:
        a, b = HEAD_SEGMENT
        return float(np.hypot(*(self.joints[a] - self.joints[b])))


@dataclass
class Identity:
    id: int
    limb_palette: np.ndarray  # (17, 3) RGB in [0, 1]
    bone_lengths: np.ndarray  # (18,) length of the bone ending at each joint
    torso_width: float


@dataclass
class Pair:
    source: np.ndarray  # (3, H, W) in [-1, 1]
    pose_s: np.ndarray  # (18, H, W)
    target: np.ndarray
    pose_t: np.ndarray
    skeleton_t: Skeleton
    skeleton_s: Skeleton


def canonical_offsets(height: int = 64, width: int = 32) -> np.ndarray:
    return _CANONICAL_64x32 * np.array([width / 32.0, height / 64.0])


def make_identity(identity_id: int, master_seed: int, height: int = 64, width: int = 32) -> Identity:
    rng = SplitMix64(derive_seed(master_seed, "identity", identity_id))
    palette = PALETTE_LATTICE[rng.permutation(len(PALETTE_LATTICE))[:len(LIMBS)]]
    torso = float(rng.uniform(0.85, 1.15))
    canon = canonical_offsets(height, width)
    canon[[2, 5, 8, 11], 0] *= torso
    lengths = np.zeros(N_JOINTS)
    jitter = rng.uniform(0.92, 1.08, N_JOINTS)
    for j, p in enumerate(PARENT):
        if p < 0:
            continue
        base = np.hypot(*(canon[j] - canon[p]))
        lengths[j] = base if j in _FACE else base * jitter[j]
    return Identity(identity_id, palette, lengths, torso)


def _canonical_directions(identity: Identity, height: int, width: int) -> np.ndarray:
    canon = canonical_offsets(height, width)
    canon[[2, 5, 8, 11], 0] *= identity.torso_width
    dirs = np.zeros((N_JOINTS, 2))
    for j, p in enumerate(PARENT):
        if p >= 0:
            v = canon[j] - canon[p]
            dirs[j] = v / np.hypot(*v)
    return dirs


def _order() -> list[int]:
    order, frontier = [], [1]
    while frontier:
        j = frontier.pop(0)
        order.append(j)
        frontier.extend(c for c, p in enumerate(PARENT) if p == j)
    return order


_FK_ORDER = _order()


def pose_from_angles(identity: Identity, angles: np.ndarray, height: int = 64, width: int = 32) -> Skeleton:
    """Forward kinematics: per-joint rotations accumulate down the tree."""
    dirs = _canonical_directions(identity, height, width)
    root = np.array([width / 2.0, canonical_offsets(height, width)[1, 1]])
    pos = np.zeros((N_JOINTS, 2))
    total = np.zeros(N_JOINTS)
    for j in _FK_ORDER:
        p = PARENT[j]
        if p < 0:
            pos[j] = root
            continue
        total[j] = total[p] + angles[j]
        c, s = np.cos(total[j]), np.sin(total[j])
        d = dirs[j]
        pos[j] = pos[p] + identity.bone_lengths[j] * np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])
    return Skeleton(np.rint(pos).astype(np.int64))


def in_bounds(sk: Skeleton, height: int, width: int, margin: int = MARGIN) -> bool:
    x, y = sk.joints[:, 0], sk.joints[:, 1]
    return bool(np.all((x >= margin) & (x <= width - 1 - margin) & (y >= margin) & (y <= height - 1 - margin)))


def distinct_joints(sk: Skeleton) -> bool:
    """No two joints share a pixel, so every marker stays visible."""
    return len({tuple(j) for j in sk.joints.tolist()}) == N_JOINTS


def sample_skeleton(identity: Identity, rng: SplitMix64, height: int = 64, width: int = 32,
                    noise: float = 1.0) -> Skeleton:
    """Canonical upright pose with per-joint angular noise, resampled until
    every joint sits at least ``MARGIN`` px inside the image on its own pixel."""
    for _ in range(100):
        angles = rng.normal(N_JOINTS) * _ANGLE_STD * noise
        sk = pose_from_angles(identity, angles, height, width)
        if in_bounds(sk, height, width) and distinct_joints(sk):
            return sk
    raise RuntimeError(f"no in-bounds skeleton for identity {identity.id} after 100 tries")


def _grid(height: int, width: int):
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def segment_distance(xs, ys, a, b) -> np.ndarray:
    """Distance from every pixel center to the segment a-b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.hypot(xs - a[0], ys - a[1])
    t = np.clip(((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(xs - (a[0] + t * d[0]), ys - (a[1] + t * d[1]))


def limb_mask(sk: Skeleton, height: int, width: int, limbs=LIMBS) -> np.ndarray:
    """Boolean map of every pixel covered by a drawn limb."""
    xs, ys = _grid(height, width)
    mask = np.zeros((height, width), dtype=bool)
    for a, b in limbs:
        mask |= segment_distance(xs, ys, sk.joints[a], sk.joints[b]) <= LIMB_HALF_WIDTH
    return mask


def render_person(sk: Skeleton, identity: Identity, height: int = 64, width: int = 32) -> np.ndarray:
    """(3, H, W) image in [-1, 1]: gray background, identity-colored limbs,
    universal per-joint marker disks on top."""
    xs, ys = _grid(height, width)
    img = np.full((height, width, 3), 0.5 * (BACKGROUND + 1.0))
    for (a, b), color in zip(LIMBS, identity.limb_palette):
        img[segment_distance(xs, ys, sk.joints[a], sk.joints[b]) <= LIMB_HALF_WIDTH] = color
    # overlapping disks: each pixel takes the nearest joint's marker (lowest index on ties)
    d = np.hypot(xs[None] - sk.joints[:, 0, None, None], ys[None] - sk.joints[:, 1, None, None])
    nearest = np.argmin(d, axis=0)
    covered = d.min(axis=0) <= MARKER_RADIUS
    img[covered] = MARKER_COLORS[nearest[covered]]
    return (img * 2.0 - 1.0).transpose(2, 0, 1).astype(np.float32)


def render_pose_heatmaps(sk: Skeleton, sigma: float = 1.5, height: int = 64, width: int = 32) -> np.ndarray:
    """(18, H, W) Gaussian bumps with peak 1 at each joint pixel."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    xs, ys = _grid(height, width)
    jx = sk.joints[:, 0].astype(np.float64)[:, None, None]
    jy = sk.joints[:, 1].astype(np.float64)[:, None, None]
    d2 = (xs[None] - jx) ** 2 + (ys[None] - jy) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma)).astype(np.float32)


def make_pair(identity: Identity, rng: SplitMix64, height: int = 64, width: int = 32,
              sigma: float = 1.5, noise: float = 1.0) -> Pair:
    sk_s = sample_skeleton(identity, rng, height, width, noise)
    sk_t = sample_skeleton(identity, rng, height, width, noise)
    return Pair(
        source=render_person(sk_s, identity, height, width),
        pose_s=render_pose_heatmaps(sk_s, sigma, height, width),
        target=render_person(sk_t, identity, height, width),
        pose_t=render_pose_heatmaps(sk_t, sigma, height, width),
        skeleton_t=sk_t,
        skeleton_s=sk_s,
    )


@dataclass
class Record:
    identity: int
    pair: int
    seed: int


class SynthDataset:
    """Pairs for identities ``first_id .. first_id + n_identities - 1``.

    Each record (identity, pair index, sample seed) is a pure function of the
    master seed, so samples are re-rendered on demand.
    """

    def __init__(self, master_seed: int, n_identities: int, pairs_per_identity: int = 20,
                 first_id: int = 0, height: int = 64, width: int = 32, sigma: float = 1.5):
        self.master_seed = master_seed
        self.height, self.width, self.sigma = height, width, sigma
        self.identity_ids = list(range(first_id, first_id + n_identities))
        self._identities = {i: make_identity(i, master_seed, height, width) for i in self.identity_ids}
        self.records = [Record(i, k, derive_seed(master_seed, "pair", i, k))
                        for i in self.identity_ids for k in range(pairs_per_identity)]

    def __len__(self) -> int:
        return len(self.records)

    def identity(self, identity_id: int) -> Identity:
        return self._identities[identity_id]

    def __getitem__(self, index: int) -> Pair:
        rec = self.records[index]
        return make_pair(self._identities[rec.identity], SplitMix64(rec.seed),
                         self.height, self.width, self.sigma)

    def batch(self, indices) -> dict:
        pairs = [self[int(i)] for i in indices]
        return {
            "source": np.stack([p.source for p in pairs]),
            "pose_s": np.stack([p.pose_s for p in pairs]),
            "target": np.stack([p.target for p in pairs]),
            "pose_t": np.stack([p.pose_t for p in pairs]),
            "skeleton_t": [p.skeleton_t for p in pairs],
        }

    def manifest(self) -> str:
        """One ``identity pair seed`` line per sample."""
        return "".join(f"{r.identity} {r.pair} {r.seed}\n" for r in self.records)


def train_test_split(master_seed: int, n_train: int = 200, n_test: int = 40, pairs_per_identity: int = 20,
                     height: int = 64, width: int = 32, sigma: float = 1.5,
                     test_pairs_per_identity: int | None = None):
    """Disjoint identity ranges: train ids [0, n_train), test ids after them."""
    train = SynthDataset(master_seed, n_train, pairs_per_identity, 0, height, width, sigma)
    test = SynthDataset(master_seed, n_test, test_pairs_per_identity or pairs_per_identity,
                        n_train, height, width, sigma)
    return train, test
