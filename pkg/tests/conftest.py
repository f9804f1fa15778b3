"""Shared fixtures: the 12-image selection corpus and desk-scale pools.

The corpus has 8 images that each trip exactly one selection filter (2 too
small, 2 busy borders, 2 soft mattes, 2 concave mattes) and 4 clean images.
Mattes are canned RGBA files standing in for a matting stage, so every
score is fully controlled.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from synthset.matting import Cutout
from synthset.selection import CandidateRecord, SelectionInputs

MIN_BYTES = 80 * 1024


def noise(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def white(h, w):
    return np.full((h, w, 3), 255, dtype=np.uint8)


def plus_region(size, arm):
    """Boolean plus shape: 3x3 arm blocks minus the four corners."""
    mask = np.zeros((size, size), dtype=bool)
    mask[:, arm : 2 * arm] = True
    mask[arm : 2 * arm, :] = True
    return mask


@dataclass
class Corpus:
    store: Path
    mattes: Path
    ids: dict
    byte_lengths: dict
    candidates: list
    inputs: SelectionInputs
    expected_reject: dict = field(default_factory=dict)  # id -> filter name

    def image_path(self, cid):
        return self.store / f"{cid}.png"


def _save(store, cid, image):
    Image.fromarray(image, mode="RGB").save(store / f"{cid}.png")


def _save_matte(mattes, cid, rgb, alpha):
    rgba = np.dstack([rgb, alpha.astype(np.uint8)])
    Image.fromarray(rgba, mode="RGBA").save(mattes / f"{cid}.png")


def build_corpus(root: Path) -> Corpus:
    store = root / "store"
    mattes = root / "mattes"
    store.mkdir(parents=True)
    mattes.mkdir(parents=True)
    rng = np.random.default_rng(2024)
    ids = {"tiny": [], "busy": [], "transparent": [], "concave": [], "clean": []}
    expected_reject = {}

    # clean: white border, centered incompressible noise block, opaque matte
    for i in range(4):
        cid = f"clean-{i}"
        img = white(256, 256)
        img[43:213, 43:213] = noise(rng, 170, 170)
        _save(store, cid, img)
        alpha = np.zeros((256, 256), dtype=np.uint8)
        alpha[43:213, 43:213] = 255
        _save_matte(mattes, cid, img, alpha)
        ids["clean"].append(cid)

    # tiny: same recipe at 32x32; trips the size filter only
    for i in range(2):
        cid = f"tiny-{i}"
        img = white(32, 32)
        img[8:24, 8:24] = noise(rng, 16, 16)
        _save(store, cid, img)
        alpha = np.zeros((32, 32), dtype=np.uint8)
        alpha[8:24, 8:24] = 255
        _save_matte(mattes, cid, img, alpha)
        ids["tiny"].append(cid)
        expected_reject[cid] = "size"

    # busy: noise everywhere, frame variance far above the cap
    for i in range(2):
        cid = f"busy-{i}"
        img = noise(rng, 256, 256)
        _save(store, cid, img)
        alpha = np.full((256, 256), 255, dtype=np.uint8)
        _save_matte(mattes, cid, img, alpha)
        ids["busy"].append(cid)
        expected_reject[cid] = "border_variance"

    # transparent: clean image, but 20% of the matte support is soft
    for i in range(2):
        cid = f"transparent-{i}"
        img = white(256, 256)
        img[43:213, 43:213] = noise(rng, 170, 170)
        _save(store, cid, img)
        alpha = np.zeros((256, 256), dtype=np.uint8)
        alpha[43:213, 43:213] = 255
        alpha[43:77, 43:213] = 200  # 34 of 170 rows: score 0.2
        _save_matte(mattes, cid, img, alpha)
        ids["transparent"].append(cid)
        expected_reject[cid] = "transparency"

    # concave: plus-shaped object; convexity 5/7 < 0.95
    for i in range(2):
        cid = f"concave-{i}"
        img = white(256, 256)
        region = plus_region(240, 80)
        block = noise(rng, 240, 240)
        sub = img[8:248, 8:248]
        sub[region] = block[region]
        _save(store, cid, img)
        alpha = np.zeros((256, 256), dtype=np.uint8)
        alpha[8:248, 8:248][region] = 255
        _save_matte(mattes, cid, img, alpha)
        ids["concave"].append(cid)
        expected_reject[cid] = "convexity"

    byte_lengths = {}
    for kind, kind_ids in ids.items():
        for cid in kind_ids:
            size = (store / f"{cid}.png").stat().st_size
            byte_lengths[cid] = size
            if kind == "tiny":
                assert size < MIN_BYTES, f"{cid} unexpectedly large ({size})"
            else:
                assert size >= MIN_BYTES, f"{cid} unexpectedly small ({size})"

    candidates = [
        CandidateRecord(id=cid, role="object", byte_length=byte_lengths[cid])
        for kind_ids in ids.values()
        for cid in kind_ids
    ]

    def image_loader(cid):
        with Image.open(store / f"{cid}.png") as img:
            return np.asarray(img.convert("RGB"))

    def matte_provider(cid):
        with Image.open(mattes / f"{cid}.png") as img:
            return Cutout(pixels=np.asarray(img.convert("RGBA")), source_id=cid)

    inputs = SelectionInputs(image_loader=image_loader, matte_provider=matte_provider)
    return Corpus(
        store=store,
        mattes=mattes,
        ids=ids,
        byte_lengths=byte_lengths,
        candidates=candidates,
        inputs=inputs,
        expected_reject=expected_reject,
    )


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    return build_corpus(tmp_path_factory.mktemp("corpus"))


def make_cutout(rng, kind: str, h: int, w: int, source_id: str, role: str) -> Cutout:
    """Synthetic textured cutout with a binary alpha shape."""
    rgb = rng.integers(30, 226, size=(h, w, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "box":
        mask = np.ones((h, w), dtype=bool)
    elif kind == "ellipse":
        mask = ((yy - h / 2) / (h / 2)) ** 2 + ((xx - w / 2) / (w / 2)) ** 2 <= 1.0
    else:  # wedge
        mask = xx + yy >= min(h, w) // 2
    alpha = np.where(mask, 255, 0).astype(np.uint8)
    return Cutout(pixels=np.dstack([rgb, alpha]), role=role, source_id=source_id)


@pytest.fixture(scope="session")
def cutout_pools():
    rng = np.random.default_rng(99)
    objects = [
        make_cutout(rng, "box", 50, 64, "obj-box-0", "object"),
        make_cutout(rng, "box", 66, 44, "obj-box-1", "object"),
        make_cutout(rng, "ellipse", 56, 56, "obj-ellipse-0", "object"),
    ]
    distractors = [
        make_cutout(rng, "ellipse", 48, 60, "dis-ellipse-0", "distractor"),
        make_cutout(rng, "wedge", 52, 52, "dis-wedge-0", "distractor"),
        make_cutout(rng, "box", 40, 58, "dis-box-0", "distractor"),
    ]
    return objects, distractors


def build_background_tree(root: Path, categories=None, per_category=3, size=(160, 120)):
    """Deterministic gradient backgrounds organized as <category>/<image>."""
    categories = categories or ["beach", "kitchen", "office", "park", "street", "warehouse"]
    w, h = size
    rng = np.random.default_rng(7)
    for cat in categories:
        cat_dir = root / cat
        cat_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_category):
            base = rng.integers(40, 200, size=3)
            gradient = np.linspace(0, 55, w)[None, :, None]
            img = np.clip(base[None, None, :] + gradient, 0, 255).astype(np.uint8)
            img = np.repeat(img, h, axis=0)
            Image.fromarray(img, mode="RGB").save(cat_dir / f"{cat}_{i}.jpg", quality=92)
    return root


@pytest.fixture(scope="session")
def background_tree(tmp_path_factory):
    return build_background_tree(tmp_path_factory.mktemp("backgrounds"))
