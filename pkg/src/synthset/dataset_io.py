"""Background splits, dataset generation at scale, and COCO export.

Backgrounds are split across scene categories (never across image instances
of one category) so no background information leaks between train, val and
test.  Generation fans out per sample index; all output files are written
in deterministic order so a rerun with the same master seed is
byte-identical.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .blending import BlendConfig, render_variants
from .composition import Layout, LayoutConfig, check_layout, sample_layout
from .errors import ConfigError, DataError
from .geometry import rasterize_polygons_union, trace_boundaries
from .matting import Cutout
from .seeding import substream, substream_seed

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
IMAGE_EXTS = {".jpg", ".jpeg", ".png", ".webp"}
DEFAULT_EXCLUDED_CATEGORIES = ("archive",)


@dataclass
class BackgroundPool:
    """Background images grouped by scene category."""

    entries: list  # (path, scene_category)
    excluded_categories: tuple = DEFAULT_EXCLUDED_CATEGORIES

    @classmethod
    def from_directory(cls, root, excluded_categories=DEFAULT_EXCLUDED_CATEGORIES):
        """Scan a `<category>/<image>` tree, skipping excluded categories."""
        root = Path(root)
        if not root.is_dir():
            raise ConfigError(f"backgrounds directory not found: {root}")
        excluded = set(excluded_categories)
        entries = []
        for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            if cat_dir.name in excluded:
                log.info("excluding background category %r", cat_dir.name)
                continue
            for img in sorted(cat_dir.iterdir()):
                if img.suffix.lower() in IMAGE_EXTS:
                    entries.append((img, cat_dir.name))
        if not entries:
            raise DataError(f"no background images under {root}")
        return cls(entries=entries, excluded_categories=tuple(excluded))

    def categories(self) -> list:
        return sorted({cat for _, cat in self.entries})

    def by_category(self) -> dict:
        out: dict = {}
        for path, cat in self.entries:
            out.setdefault(cat, []).append(path)
        return out


@dataclass
class SplitPlan:
    categories: dict  # split name -> sorted list of categories
    counts: dict  # split name -> image count

    def split_of(self, category: str) -> str:
        for split, cats in self.categories.items():
            if category in cats:
                return split
        raise DataError(f"category {category!r} not in any split")


def split_backgrounds(pool: BackgroundPool, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitPlan:
    """Assign whole categories to train/val/test, greedily matching ratios.

    Categories are shuffled by the seed, then each goes to the split with
    the largest remaining image-count deficit (ties broken in split order).
    When only as many categories remain as there are empty splits, those
    splits are served first so none ends up empty.
    """
    if len(ratios) != len(SPLITS) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("ratios must be three values summing to 1")
    by_cat = pool.by_category()
    categories = sorted(by_cat)
    if len(categories) < 3:
        raise DataError(f"need at least 3 background categories, got {len(categories)}")

    rng = substream(seed, "background-split")
    order = [categories[i] for i in rng.permutation(len(categories))]
    total = sum(len(v) for v in by_cat.values())

    assigned = {s: [] for s in SPLITS}
    counts = {s: 0 for s in SPLITS}
    for i, cat in enumerate(order):
        remaining = len(order) - i
        empty = [s for s in SPLITS if not assigned[s]]
        if remaining <= len(empty):
            candidates = empty
        else:
            candidates = list(SPLITS)
        deficits = {s: ratios[SPLITS.index(s)] * total - counts[s] for s in candidates}
        target = max(candidates, key=lambda s: (deficits[s], -SPLITS.index(s)))
        assigned[target].append(cat)
        counts[target] += len(by_cat[cat])
    return SplitPlan(
        categories={s: sorted(assigned[s]) for s in SPLITS},
        counts=counts,
    )


@dataclass
class GenerationResult:
    report: dict
    timings: dict = field(default_factory=dict)


def _load_rgb(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _json_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def mask_to_coco_polygons(mask: np.ndarray):
    """Trace a visible mask into COCO polygon lists, dropping holes.

    Returns (polygons, dropped_holes, dropped_degenerate); each polygon is a
    flat [x1, y1, x2, y2, ...] list with at least 6 coordinates.
    """
    outer, holes = trace_boundaries(mask)
    polygons = []
    degenerate = 0
    for poly in outer:
        if len(poly) < 3:
            degenerate += 1
            continue
        flat = []
        for x, y in poly:
            flat.extend((int(x), int(y)))
        polygons.append(flat)
    return polygons, len(holes), degenerate


def export_coco(samples, category_name: str = "parcel") -> dict:
    """Assemble a COCO object-detection document for one split.

    Every blending variant is its own image entry; the variants of a sample
    share geometry-equal annotations.  Segmentations are pixel-boundary
    polygons, so the shoelace area of each polygon equals its pixel count.
    """
    images = []
    annotations = []
    dropped = {"holes": 0, "degenerate": 0}
    image_id = 0
    ann_id = 0
    for sample in samples:
        image_id += 1
        h, w = sample.image.shape[:2]
        images.append(
            {
                "id": image_id,
                "file_name": sample.file_name,
                "width": int(w),
                "height": int(h),
            }
        )
        for ann in sample.annotations:
            polygons, holes, degenerate = mask_to_coco_polygons(ann.visible_mask)
            dropped["holes"] += holes
            dropped["degenerate"] += degenerate
            if holes or degenerate:
                log.info(
                    "%s: dropped %d hole(s) and %d degenerate polygon(s)",
                    sample.file_name,
                    holes,
                    degenerate,
                )
            if not polygons:
                log.info("%s: annotation without usable polygon dropped", sample.file_name)
                continue
            ann_id += 1
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": 1,
                    "segmentation": polygons,
                    "area": int(ann.area),
                    "bbox": [int(v) for v in ann.bbox],
                    "iscrowd": 0,
                }
            )
    return {
        "info": {"description": "synthset composite dataset", "version": "1.0"},
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": category_name, "supercategory": "object"}],
    }


def _render_one(
    split: str,
    index: int,
    master_seed: int,
    split_backgrounds_list,
    object_pool,
    distractor_pool,
    layout_config: LayoutConfig,
    blend: BlendConfig,
    methods,
    category_name: str,
    bg_cache: dict,
):
    seed = substream_seed(master_seed, split, index)
    rng = substream(master_seed, split, index)
    bg_path, bg_cat = split_backgrounds_list[int(rng.integers(len(split_backgrounds_list)))]
    key = str(bg_path)
    if key not in bg_cache:
        bg_cache[key] = _load_rgb(bg_path)
    bg = bg_cache[key]
    background_ref = f"{bg_cat}/{Path(bg_path).name}"

    layout, layout_stats = sample_layout(
        bg,
        background_ref,
        object_pool,
        distractor_pool,
        layout_config,
        rng,
        sample_index=index,
        seed=seed,
    )
    cutouts_by_id = {c.source_id: c for c in list(object_pool) + list(distractor_pool)}
    samples, render_stats = render_variants(
        bg,
        layout,
        cutouts_by_id,
        blend,
        split,
        category=category_name,
        min_visible_fraction=layout_config.min_visible_fraction,
        methods=methods,
    )
    return layout, layout_stats, samples, render_stats


def generate_dataset(
    object_pool: Sequence[Cutout],
    distractor_pool: Sequence[Cutout],
    pool: BackgroundPool,
    out_dir,
    master_seed: int = 0,
    sample_counts: dict = None,
    split_ratios=(0.8, 0.1, 0.1),
    layout_config: Optional[LayoutConfig] = None,
    blend: Optional[BlendConfig] = None,
    methods: Optional[Sequence[str]] = None,
    category_name: str = "parcel",
    jpeg_quality: int = 95,
    jobs: int = 1,
    resolved_config: Optional[dict] = None,
) -> GenerationResult:
    """Generate the full dataset tree: images, layouts, COCO files, report.

    Output layout: ``out/{split}/images/*.jpg``, ``out/{split}/layouts.jsonl``,
    ``out/{split}/annotations.coco.json``, ``out/{split}/variants.json``,
    ``out/{split}/masks/*.png`` (debug masks), and ``out/report.json``.
    """
    if not object_pool:
        raise DataError("empty object cutout pool; nothing to compose")
    if not distractor_pool:
        raise DataError("empty distractor cutout pool; nothing to compose")
    sample_counts = sample_counts or {"train": 2000, "val": 500, "test": 500}
    layout_config = layout_config or LayoutConfig()
    blend = blend or BlendConfig()
    methods = tuple(methods) if methods is not None else tuple(blend.methods)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = split_backgrounds(pool, ratios=split_ratios, seed=master_seed)
    by_cat = pool.by_category()

    report = {
        "master_seed": master_seed,
        "methods": list(methods),
        "split_plan": {s: plan.categories[s] for s in SPLITS},
        "splits": {},
    }
    if resolved_config is not None:
        report["config"] = resolved_config
    timings = {}

    for split in SPLITS:
        started = time.monotonic()
        count = sample_counts.get(split, 0)
        split_dir = out_dir / split
        (split_dir / "images").mkdir(parents=True, exist_ok=True)
        (split_dir / "masks").mkdir(parents=True, exist_ok=True)

        backgrounds = [
            (path, cat) for cat in plan.categories[split] for path in by_cat[cat]
        ]
        if count > 0 and not backgrounds:
            raise DataError(f"split {split!r} has no backgrounds")

        bg_cache: dict = {}

        def work(index, _split=split, _bgs=backgrounds, _cache=bg_cache):
            return _render_one(
                _split,
                index,
                master_seed,
                _bgs,
                object_pool,
                distractor_pool,
                layout_config,
                blend,
                methods,
                category_name,
                _cache,
            )

        if jobs > 1 and count > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
                results = list(pool_exec.map(work, range(count)))
        else:
            results = [work(i) for i in range(count)]

        layouts_path = split_dir / "layouts.jsonl"
        variants: dict = {}
        all_samples = []
        split_stats = {
            "samples": count,
            "images": 0,
            "dropped_items": 0,
            "dropped_annotations": 0,
            "layout_retries": 0,
            "poisson_fallbacks": 0,
            "poisson_nonconverged": 0,
            "poisson_max_residual": 0.0,
            "poisson_solves": 0,
        }
        with open(layouts_path, "w", encoding="utf-8") as fh:
            for layout, layout_stats, samples, render_stats in results:
                fh.write(_json_dumps(layout.to_record()) + "\n")
                split_stats["dropped_items"] += len(layout_stats["dropped"])
                split_stats["layout_retries"] += layout_stats["layout_retries"]
                split_stats["dropped_annotations"] += render_stats.dropped_annotations
                split_stats["poisson_fallbacks"] += render_stats.poisson_fallbacks
                for rec in render_stats.poisson:
                    split_stats["poisson_solves"] += 1
                    split_stats["poisson_max_residual"] = max(
                        split_stats["poisson_max_residual"], rec["residual"]
                    )
                    if not rec["converged"]:
                        split_stats["poisson_nonconverged"] += 1
                variants[str(layout.sample_index)] = [
                    {"method": s.method, "file": s.file_name} for s in samples
                ]
                for sample in samples:
                    Image.fromarray(sample.image).save(
                        split_dir / "images" / sample.file_name, quality=jpeg_quality
                    )
                    split_stats["images"] += 1
                first = samples[0]
                for k, ann in enumerate(first.annotations):
                    mask_img = Image.fromarray(
                        np.where(ann.visible_mask, 255, 0).astype(np.uint8)
                    )
                    mask_img.save(
                        split_dir / "masks" / f"{split}_{layout.sample_index:05d}_{k}.png"
                    )
                all_samples.extend(samples)

        with open(split_dir / "variants.json", "w", encoding="utf-8") as fh:
            fh.write(_json_dumps(variants))
        coco = export_coco(all_samples, category_name=category_name)
        with open(split_dir / "annotations.coco.json", "w", encoding="utf-8") as fh:
            fh.write(_json_dumps(coco))
        report["splits"][split] = split_stats
        timings[split] = round(time.monotonic() - started, 3)

    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2))
    # Wall-clock timings are run-dependent; kept out of report.json so
    # identical invocations produce identical reports.
    with open(out_dir / "timings.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(timings, sort_keys=True, indent=2))
    return GenerationResult(report=report, timings=timings)


def _check_coco_semantics(coco: dict, problems: list, where: str):
    image_ids = {img["id"] for img in coco.get("images", [])}
    if len(image_ids) != len(coco.get("images", [])):
        problems.append(f"{where}: duplicate image ids")
    category_ids = {c["id"] for c in coco.get("categories", [])}
    dims = {img["id"]: (img["width"], img["height"]) for img in coco.get("images", [])}
    seen_ann = set()
    for ann in coco.get("annotations", []):
        if ann["id"] in seen_ann:
            problems.append(f"{where}: duplicate annotation id {ann['id']}")
        seen_ann.add(ann["id"])
        if ann["image_id"] not in image_ids:
            problems.append(f"{where}: annotation {ann['id']} references missing image")
            continue
        if ann["category_id"] not in category_ids:
            problems.append(f"{where}: annotation {ann['id']} references missing category")
        if ann.get("iscrowd", 0) != 0:
            problems.append(f"{where}: annotation {ann['id']} has iscrowd != 0")
        if ann["area"] <= 0:
            problems.append(f"{where}: annotation {ann['id']} has non-positive area")
        x, y, w, h = ann["bbox"]
        img_w, img_h = dims[ann["image_id"]]
        if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > img_w or y + h > img_h:
            problems.append(f"{where}: annotation {ann['id']} bbox outside image")
        for seg in ann["segmentation"]:
            if len(seg) < 6:
                problems.append(f"{where}: annotation {ann['id']} polygon under 6 coords")


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def validate_tree(
    out_dir,
    layout_config: Optional[LayoutConfig] = None,
    polygon_iou_threshold: float = 0.98,
) -> list:
    """Re-check all invariants of an existing output tree.

    Returns a list of problem strings (empty when the tree is sound):
    split hygiene, per-layout geometric constraints, image counts, COCO
    referential integrity, and polygon/mask round-trip IoU.
    """
    out_dir = Path(out_dir)
    layout_config = layout_config or LayoutConfig()
    problems: list = []

    report_path = out_dir / "report.json"
    methods = None
    if report_path.exists():
        with open(report_path, "r", encoding="utf-8") as fh:
            methods = json.load(fh).get("methods")

    categories_by_split: dict = {}
    for split in SPLITS:
        split_dir = out_dir / split
        layouts_path = split_dir / "layouts.jsonl"
        if not layouts_path.exists():
            continue
        layouts = []
        with open(layouts_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    layouts.append(Layout.from_record(json.loads(line)))
        categories_by_split[split] = {l.background_ref.split("/", 1)[0] for l in layouts}

        for layout in layouts:
            for problem in check_layout(layout, layout_config):
                problems.append(f"{split} sample {layout.sample_index}: {problem}")

        variants_path = split_dir / "variants.json"
        if variants_path.exists():
            with open(variants_path, "r", encoding="utf-8") as fh:
                variants = json.load(fh)
            n_images = 0
            for entries in variants.values():
                for entry in entries:
                    n_images += 1
                    if not (split_dir / "images" / entry["file"]).exists():
                        problems.append(f"{split}: missing image file {entry['file']}")
            if methods is not None and n_images != len(layouts) * len(methods):
                problems.append(
                    f"{split}: image count {n_images} != samples {len(layouts)} x "
                    f"methods {len(methods)}"
                )

        coco_path = split_dir / "annotations.coco.json"
        if coco_path.exists():
            with open(coco_path, "r", encoding="utf-8") as fh:
                coco = json.load(fh)
            _check_coco_semantics(coco, problems, split)
            problems.extend(
                _check_polygon_fidelity(split_dir, coco, polygon_iou_threshold, split)
            )

    for i, a in enumerate(SPLITS):
        for b in SPLITS[i + 1 :]:
            overlap = categories_by_split.get(a, set()) & categories_by_split.get(b, set())
            if overlap:
                problems.append(
                    f"background categories shared by {a} and {b}: {sorted(overlap)}"
                )
    return problems


def _check_polygon_fidelity(split_dir: Path, coco: dict, threshold: float, split: str) -> list:
    """Re-rasterize each unique annotation's polygons against its stored mask."""
    problems = []
    file_by_image = {img["id"]: img["file_name"] for img in coco.get("images", [])}
    dims = {img["id"]: (img["height"], img["width"]) for img in coco.get("images", [])}
    ann_index: dict = {}
    for ann in coco.get("annotations", []):
        # dangling image references are already reported by the semantic check
        if ann["image_id"] in file_by_image:
            ann_index.setdefault(ann["image_id"], []).append(ann)

    checked = set()
    for image_id, anns in ann_index.items():
        # One sample's variants share masks; check each sample once.
        stem = file_by_image[image_id].rsplit("_", 1)[0]  # "<split>_<idx>"
        if stem in checked:
            continue
        checked.add(stem)
        h, w = dims[image_id]
        for k, ann in enumerate(anns):
            mask_path = split_dir / "masks" / f"{stem}_{k}.png"
            if not mask_path.exists():
                problems.append(f"{split}: missing mask {mask_path.name}")
                continue
            with Image.open(mask_path) as img:
                stored = np.asarray(img) > 127
            polys = [
                list(zip(seg[0::2], seg[1::2])) for seg in ann["segmentation"]
            ]
            rast = rasterize_polygons_union(polys, h, w)
            iou = _mask_iou(rast, stored)
            if iou < threshold:
                problems.append(
                    f"{split}: polygon/mask IoU {iou:.4f} below {threshold} for {mask_path.name}"
                )
    return problems
