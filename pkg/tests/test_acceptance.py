"""Acceptance suite: one test per acceptance criterion, at stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.  Headline model-training metrics are out of scope; everything
here is property-based or exact pipeline arithmetic.
"""

import json
import time

import numpy as np
import pytest
from PIL import Image

from synthset.blending import BlendConfig
from synthset.composition import LayoutConfig, check_layout, sample_layout
from synthset.dataset_io import BackgroundPool, generate_dataset, validate_tree
from synthset.errors import DataError
from synthset.geometry import (
    convex_hull,
    largest_contour,
    polygon_area,
    rasterize_polygons_union,
)
from synthset.matting import Cutout
from synthset.poisson import PoissonSystem, poisson_solve, residual_max_norm
from synthset.seeding import substream
from synthset.selection import (
    FilterConfig,
    apply_strategy,
    border_variance,
    convexity_score,
    transparency_score,
)

from coco_schema import check_coco, referential_integrity_errors
from conftest import plus_region
from oracles import (
    border_variance_naive,
    dense_poisson_solve,
    gift_wrap_hull,
    shoelace_naive,
    transparency_naive,
)

DESK_COUNTS = {"train": 20, "val": 5, "test": 5}
DESK_SEED = 20240817


def ok(name):
    print(f"\n[ACCEPTANCE] {name}: PASS")


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory, cutout_pools, background_tree):
    """Desk-scale generation at counts (20, 5, 5) with all four methods."""
    objects, distractors = cutout_pools
    out = tmp_path_factory.mktemp("accept-desk")
    result = generate_dataset(
        objects,
        distractors,
        BackgroundPool.from_directory(background_tree),
        out,
        master_seed=DESK_SEED,
        sample_counts=DESK_COUNTS,
        layout_config=LayoutConfig(),
        blend=BlendConfig(),
        jobs=2,
        resolved_config={"run": "acceptance"},
    )
    return out, result


def test_threshold_fidelity(corpus):
    """12-image corpus: exactly the 8 designed rejections, right reasons."""
    started = time.monotonic()
    result = apply_strategy(corpus.candidates, "plain", FilterConfig(), corpus.inputs)
    rejected = {r.id: r.failed_filter for r in result.reports if r.decision == "rejected"}
    assert result.selected == sorted(corpus.ids["clean"])
    assert len(rejected) == 8
    assert rejected == corpus.expected_reject
    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    ok(f"threshold fidelity (8 exact rejections, 4 clean kept, {elapsed:.2f}s)")


def test_score_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(505)
    rasters = 0
    while rasters < 50:
        h = int(rng.integers(8, 65))
        w = int(rng.integers(8, 65))
        image = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        alpha = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        mask = np.zeros((h, w), dtype=bool)
        r0, c0 = int(rng.integers(0, h - 4)), int(rng.integers(0, w - 4))
        bh, bw = int(rng.integers(3, h - r0 + 1)), int(rng.integers(3, w - c0 + 1))
        mask[r0 : r0 + bh, c0 : c0 + bw] = rng.random((bh, bw)) < 0.7
        if not mask.any() or not (alpha > 0).any():
            continue
        rasters += 1

        assert border_variance(image, 0.02) == pytest.approx(
            border_variance_naive(image, 0.02), rel=1e-9
        )

        cut = Cutout(pixels=np.dstack([image, alpha]))
        assert transparency_score(cut, 243) == transparency_naive(alpha, 243)

        contour = largest_contour(mask)
        assert polygon_area(contour) == shoelace_naive(contour)
        try:
            hull = convex_hull(contour)
        except DataError:
            continue
        assert set(hull) == set(gift_wrap_hull(contour))
        assert polygon_area(hull) == pytest.approx(shoelace_naive(hull), rel=1e-12)
        expected = polygon_area(contour) / polygon_area(hull)
        assert convexity_score(mask) == pytest.approx(expected, rel=1e-9)
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    ok(f"score-oracle equivalence on {rasters} rasters ({elapsed:.2f}s)")


def test_convexity_worked_examples():
    plus = plus_region(240, 80)
    assert convexity_score(plus) == pytest.approx(5 / 7, abs=1e-9)
    l_shape = np.zeros((2, 2), dtype=bool)
    l_shape[0, 0] = l_shape[1, 0] = l_shape[1, 1] = True
    assert convexity_score(l_shape) == pytest.approx(6 / 7, abs=1e-9)
    ok("convexity worked examples (plus 5/7, L 6/7 within 1e-9)")


def test_layout_constraints(cutout_pools):
    started = time.monotonic()
    objects, distractors = cutout_pools
    config = LayoutConfig()
    bg = np.zeros((120, 160, 3), dtype=np.uint8)
    checked = 0
    for index in range(500):
        layout, _ = sample_layout(
            bg, "c/b", objects, distractors, config,
            substream(DESK_SEED, "acceptance-layouts", index),
            sample_index=index, seed=index,
        )
        problems = check_layout(layout, config)
        assert problems == [], problems
        for p in layout.placements:
            realized = p.scale * p.source_longer / 160
            assert (0.15 - 1e-9 <= realized <= 0.40 + 1e-9) or p.scale == config.max_upscale
        checked += len(layout.placements)
    elapsed = time.monotonic() - started
    assert elapsed < 120.0
    ok(f"layout constraints over 500 layouts / {checked} placements ({elapsed:.2f}s)")


def test_blending_quartet_arithmetic(desk_run):
    started = time.monotonic()
    out, result = desk_run
    for split, count in DESK_COUNTS.items():
        images = sorted((out / split / "images").glob("*.jpg"))
        assert len(images) == count * 4, f"{split}: {len(images)} != {count * 4}"
        with open(out / split / "variants.json") as fh:
            variants = json.load(fh)
        assert len(variants) == count
        for entries in variants.values():
            assert [e["method"] for e in entries] == ["none", "gaussian", "motion", "poisson"]

    # one shared annotation set per layout: byte-identical across variants
    with open(out / "train" / "annotations.coco.json") as fh:
        coco = json.load(fh)
    anns_by_image = {}
    for ann in coco["annotations"]:
        payload = json.dumps(
            {k: ann[k] for k in ("segmentation", "bbox", "area", "category_id")},
            sort_keys=True,
        )
        anns_by_image.setdefault(ann["image_id"], []).append(payload)
    by_stem = {}
    for img in coco["images"]:
        by_stem.setdefault(img["file_name"].rsplit("_", 1)[0], []).append(img["id"])
    for stem, ids in by_stem.items():
        assert len(ids) == 4
        reference = anns_by_image.get(ids[0], [])
        for other in ids[1:]:
            assert anns_by_image.get(other, []) == reference, f"{stem}: annotation drift"
    elapsed = time.monotonic() - started
    ok(f"blending quartet arithmetic: 80/20/20 images, shared annotations ({elapsed:.2f}s)")


def test_poisson_solver(desk_run):
    started = time.monotonic()
    rng = np.random.default_rng(1907)
    solved = 0
    while solved < 100:
        h = int(rng.integers(3, 11))
        w = int(rng.integers(3, 11))
        omega = np.zeros((h, w), dtype=bool)
        omega[1:-1, 1:-1] = rng.random((h - 2, w - 2)) < 0.75
        if not omega.any():
            continue
        solved += 1
        values = rng.random((h, w, 3))
        rhs = rng.uniform(-1, 1, size=(h, w, 3))
        system = PoissonSystem(omega=omega, rhs=rhs, values=values)
        mine, _ = poisson_solve(system, tolerance=1e-10, max_iters=100_000)
        for ch in range(3):
            oracle = dense_poisson_solve(omega, rhs[:, :, ch], values[:, :, ch])
            assert np.abs(mine[:, :, ch] - oracle)[omega].max() < 1e-6

    # constant boundary, zero guidance -> the constant, within tolerance
    omega = np.zeros((9, 9), dtype=bool)
    omega[1:-1, 1:-1] = True
    values = np.full((9, 9, 3), 0.37)
    values[omega] = 0.9
    system = PoissonSystem(omega=omega, rhs=np.zeros((9, 9, 3)), values=values)
    out, stats = poisson_solve(system, tolerance=1e-4)
    assert stats["converged"]
    assert np.allclose(out[omega], 0.37, atol=1e-3)

    # post-hoc residual bound on every placement of the desk-scale run
    _, result = desk_run
    total_solves = 0
    for split, split_stats in result.report["splits"].items():
        assert split_stats["poisson_nonconverged"] == 0
        assert split_stats["poisson_max_residual"] <= 1e-4, split
        total_solves += split_stats["poisson_solves"]
    assert total_solves > 0
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    ok(
        f"poisson solver: 100 oracle matches, constant case, residual<=1e-4 on "
        f"{total_solves} placements ({elapsed:.2f}s)"
    )


def test_determinism(desk_run, tmp_path_factory, cutout_pools, background_tree):
    started = time.monotonic()
    out, _ = desk_run
    objects, distractors = cutout_pools
    again = tmp_path_factory.mktemp("accept-desk-again")
    generate_dataset(
        objects,
        distractors,
        BackgroundPool.from_directory(background_tree),
        again,
        master_seed=DESK_SEED,
        sample_counts=DESK_COUNTS,
        layout_config=LayoutConfig(),
        blend=BlendConfig(),
        jobs=1,  # different worker count must not matter
        resolved_config={"run": "acceptance"},
    )
    for split in DESK_COUNTS:
        for name in ("layouts.jsonl", "annotations.coco.json"):
            a = (out / split / name).read_bytes()
            b = (again / split / name).read_bytes()
            assert a == b, f"{split}/{name} not byte-identical"
    elapsed = time.monotonic() - started
    ok(f"determinism: byte-identical layouts and COCO across reruns ({elapsed:.2f}s)")


def test_split_hygiene(desk_run):
    out, result = desk_run
    seen = {}
    for split in DESK_COUNTS:
        with open(out / split / "layouts.jsonl") as fh:
            for line in fh:
                if line.strip():
                    category = json.loads(line)["background_ref"].split("/", 1)[0]
                    if category in seen and seen[category] != split:
                        pytest.fail(f"category {category} in both {seen[category]} and {split}")
                    seen[category] = split
    planned = result.report["split_plan"]
    for category, split in seen.items():
        assert category in planned[split]
    ok(f"split hygiene across {len(seen)} categories")


def test_coco_validity(desk_run):
    started = time.monotonic()
    out, _ = desk_run
    for split in DESK_COUNTS:
        with open(out / split / "annotations.coco.json") as fh:
            coco = json.load(fh)
        check_coco(coco)
        assert referential_integrity_errors(coco) == []
        dims = {i["id"]: (i["height"], i["width"]) for i in coco["images"]}
        files = {i["id"]: i["file_name"] for i in coco["images"]}
        per_image = {}
        for ann in coco["annotations"]:
            per_image.setdefault(ann["image_id"], []).append(ann)
        done = set()
        for image_id, anns in per_image.items():
            stem = files[image_id].rsplit("_", 1)[0]
            if stem in done:
                continue
            done.add(stem)
            for k, ann in enumerate(anns):
                with Image.open(out / split / "masks" / f"{stem}_{k}.png") as img:
                    stored = np.asarray(img) > 127
                polys = [list(zip(s[0::2], s[1::2])) for s in ann["segmentation"]]
                rast = rasterize_polygons_union(polys, *dims[image_id])
                iou = (rast & stored).sum() / (rast | stored).sum()
                assert iou >= 0.98, f"{stem}_{k}: IoU {iou:.4f}"
    assert validate_tree(out) == []
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    ok(f"COCO validity: schema + polygon/mask IoU >= 0.98 ({elapsed:.2f}s)")


def test_ablation_mode(tmp_path_factory, cutout_pools, background_tree):
    """--no-blend reproduces the ablation data shape: 1 image per layout."""
    import json as json_mod

    from synthset.cli import main

    started = time.monotonic()
    objects, distractors = cutout_pools
    root = tmp_path_factory.mktemp("accept-ablation")
    ws = root / "ws"
    cutout_dir = ws / "cutouts"
    cutout_dir.mkdir(parents=True)
    for cut in objects + distractors:
        Image.fromarray(cut.pixels, mode="RGBA").save(cutout_dir / f"{cut.source_id}.png")
    sel_dir = ws / "selection"
    sel_dir.mkdir()
    (sel_dir / "selected.json").write_text(
        json_mod.dumps(
            {
                "strategy": "plain",
                "objects": [c.source_id for c in objects],
                "distractors": [c.source_id for c in distractors],
            }
        )
    )
    config = {
        "backgrounds_dir": str(background_tree),
        "train_samples": DESK_COUNTS["train"],
        "val_samples": DESK_COUNTS["val"],
        "test_samples": DESK_COUNTS["test"],
    }
    cfg = root / "config.json"
    cfg.write_text(json_mod.dumps(config))
    out = root / "out"
    code = main(["compose", "--config", str(cfg), "--workspace", str(ws),
                 "--out", str(out), "--no-blend", "--seed", str(DESK_SEED), "--jobs", "2"])
    assert code == 0
    for split, count in DESK_COUNTS.items():
        images = list((out / split / "images").glob("*.jpg"))
        assert len(images) == count, f"{split}: {len(images)} != {count}"
        assert all(p.name.endswith("_none.jpg") for p in images)
    report = json_mod.loads((out / "report.json").read_text())
    assert report["methods"] == ["none"]
    elapsed = time.monotonic() - started
    assert elapsed < 120.0
    ok(f"ablation mode: one direct-paste image per layout ({elapsed:.2f}s)")
