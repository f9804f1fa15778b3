"""Subcommand front-end: scrape, mat, select, review, compose, all, validate.

One config file plus a master seed drive every stage; flags override config
keys, which override defaults.  Exit codes: 0 success, 1 configuration
error, 2 data error.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import acquisition, dataset_io
from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, MattingError, SynthsetError
from .matting import Cutout, flood_fill_matte, remove_background_external
from .selection import (
    CandidateRecord,
    DetectionSidecar,
    SelectionInputs,
    apply_strategy,
    border_variance,
    load_decisions,
    pre_chain_reports,
    write_reasons_report,
)

log = logging.getLogger(__name__)

SUBCOMMANDS = ("scrape", "mat", "select", "review", "compose", "all", "validate")


class _Parser(argparse.ArgumentParser):
    # Usage problems are configuration errors: exit 1, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _workspace(args) -> Path:
    ws = args.workspace or os.environ.get("SYNTHSET_WORKSPACE") or "workspace"
    path = Path(ws)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args) -> PipelineConfig:
    overrides = {"master_seed": args.seed}
    return load_config(args.config, overrides=overrides)


def _write_run_report(ws: Path, subcommand: str, config: PipelineConfig) -> None:
    # Fully resolved config + seed; deterministic across identical invocations.
    report = {
        "subcommand": subcommand,
        "master_seed": config.master_seed,
        "config": config.resolved(),
    }
    with open(ws / "report.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2))


def _manifest(ws: Path) -> acquisition.Manifest:
    return acquisition.Manifest(ws / "manifest.jsonl", ws / "images")


def _load_rgb(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _selection_inputs(ws: Path, manifest, config: PipelineConfig, args) -> SelectionInputs:
    cutout_dir = ws / "cutouts"

    def image_loader(candidate_id: str) -> np.ndarray:
        return _load_rgb(manifest.image_path(manifest.records[candidate_id]))

    def matte_provider(candidate_id: str) -> Cutout:
        path = cutout_dir / f"{candidate_id}.png"
        record = manifest.records[candidate_id]
        if not path.exists():
            if record.status == "rejected" and (record.reject_reason or "").startswith("matting"):
                raise MattingError(record.reject_reason)
            raise MattingError("not matted (run `synthset mat` first)")
        with Image.open(path) as img:
            rgba = np.asarray(img.convert("RGBA"))
        return Cutout(pixels=rgba, role=record.role, source_id=candidate_id)

    sidecar = DetectionSidecar.load(args.sidecar) if getattr(args, "sidecar", None) else None
    decisions = load_decisions(args.decisions) if getattr(args, "decisions", None) else None
    return SelectionInputs(
        image_loader=image_loader,
        matte_provider=matte_provider,
        sidecar=sidecar,
        decisions=decisions,
    )


def cmd_scrape(args) -> int:
    ws = _workspace(args)
    config = _config(args)
    _write_run_report(ws, "scrape", config)
    if not config.result_page_template:
        raise ConfigError(
            "scrape needs the `result_page_template` config key "
            "(URL of a result-page endpoint returning a JSON array of image URLs)"
        )
    distractor_queries = list(config.distractor_queries)
    if config.distractor_category_file:
        names = acquisition.load_category_file(config.distractor_category_file)
        distractor_queries += acquisition.sample_distractor_categories(
            names, min(config.distractor_category_count, len(names)), config.master_seed
        )
    tasks = acquisition.expand_queries(config.object_queries, distractor_queries)
    fetcher = acquisition.JsonResultPageFetcher(config.result_page_template)
    limiter = acquisition.HostRateLimiter(config.rate_limit_per_host)
    manifest = _manifest(ws)

    def run_task(task):
        return task, acquisition.fetch_task(
            task,
            fetcher,
            limit=config.result_limit,
            rate_limiter=limiter,
            retries=config.download_retries,
            backoff=config.retry_backoff,
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(run_task, tasks))
    else:
        outcomes = [run_task(t) for t in tasks]

    new = skipped = 0
    for task, outcome in outcomes:
        new += acquisition.dedupe_and_record(outcome.downloads, manifest, task)
        skipped += len(outcome.skipped)
    print(f"scrape: {len(tasks)} tasks, {new} new records, {skipped} skipped, "
          f"{len(manifest)} total in manifest")
    return 0


def cmd_mat(args) -> int:
    ws = _workspace(args)
    config = _config(args)
    _write_run_report(ws, "mat", config)
    manifest = _manifest(ws)
    cutout_dir = ws / "cutouts"
    cutout_dir.mkdir(exist_ok=True)
    raw = sorted(manifest.by_status("raw"), key=lambda r: r.id)
    filter_config = config.filter_config()

    def mat_one(record):
        # Images the selection chain will reject on size or border variance
        # anyway are not worth matting; leave them raw.
        if record.byte_length < filter_config.min_bytes:
            return record.id, None, None
        image = _load_rgb(manifest.image_path(record))
        try:
            if border_variance(image, filter_config.border_margin_fraction) >= \
                    filter_config.max_border_variance:
                return record.id, None, None
            if config.matting_command:
                cutout = remove_background_external(
                    image, config.matting_command, timeout=config.matting_timeout
                )
            else:
                cutout = flood_fill_matte(image, config.flood_tolerance)
        except (MattingError, DataError) as exc:
            return record.id, "rejected", f"matting: {exc}"
        Image.fromarray(cutout.pixels, mode="RGBA").save(cutout_dir / f"{record.id}.png")
        return record.id, "matted", None

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(mat_one, raw))
    else:
        results = [mat_one(r) for r in raw]

    updates = {cid: (status, reason) for cid, status, reason in results if status}
    if updates:
        manifest.update_statuses(updates)
    matted = sum(1 for _, s, _ in results if s == "matted")
    failed = sum(1 for _, s, _ in results if s == "rejected")
    print(f"mat: {matted} matted, {failed} failed, {len(raw) - matted - failed} skipped")
    return 0


def cmd_select(args) -> int:
    ws = _workspace(args)
    config = _config(args)
    _write_run_report(ws, "select", config)
    strategy = args.strategy or "plain"
    if strategy == "cnn" and not args.sidecar:
        raise ConfigError("select --strategy cnn requires --sidecar PATH (detection sidecar)")
    if strategy == "manual" and not args.decisions:
        raise ConfigError("select --strategy manual requires --decisions PATH (decisions file)")
    manifest = _manifest(ws)
    if not manifest.records:
        print("select: manifest is empty; nothing to do")
        return 0
    candidates = [
        CandidateRecord(id=r.id, role=r.role, byte_length=r.byte_length)
        for r in manifest.records.values()
    ]
    inputs = _selection_inputs(ws, manifest, config, args)
    result = apply_strategy(candidates, strategy, config.filter_config(), inputs, jobs=args.jobs)

    sel_dir = ws / "selection"
    sel_dir.mkdir(exist_ok=True)
    write_reasons_report(result.reports, sel_dir / "reasons.jsonl")
    selected = {
        "strategy": strategy,
        "objects": result.selected_by_role(candidates, "object"),
        "distractors": result.selected_by_role(candidates, "distractor"),
    }
    with open(sel_dir / "selected.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(selected, sort_keys=True, indent=2))

    updates = {}
    for report in result.reports:
        if report.decision == "selected":
            updates[report.id] = ("selected", None)
        else:
            updates[report.id] = ("rejected", report.failed_filter)
    manifest.update_statuses(updates)
    print(
        f"select[{strategy}]: {len(selected['objects'])} objects, "
        f"{len(selected['distractors'])} distractors selected of {len(candidates)} candidates"
    )
    return 0


def _load_cutout_pools(ws: Path, manifest) -> tuple:
    sel_path = ws / "selection" / "selected.json"
    if not sel_path.exists():
        raise DataError("no selection found; run `synthset select` first")
    with open(sel_path, "r", encoding="utf-8") as fh:
        selected = json.load(fh)
    cutout_dir = ws / "cutouts"

    def load_pool(ids, role):
        pool = []
        for cid in ids:
            path = cutout_dir / f"{cid}.png"
            if not path.exists():
                raise DataError(f"cutout file missing for selected candidate {cid}")
            with Image.open(path) as img:
                pool.append(Cutout(pixels=np.asarray(img.convert("RGBA")), role=role, source_id=cid))
        return pool

    return load_pool(selected["objects"], "object"), load_pool(
        selected["distractors"], "distractor"
    )


def cmd_compose(args) -> int:
    ws = _workspace(args)
    config = _config(args)
    _write_run_report(ws, "compose", config)
    if not config.backgrounds_dir:
        raise ConfigError("compose needs the `backgrounds_dir` config key")
    manifest = _manifest(ws)
    object_pool, distractor_pool = _load_cutout_pools(ws, manifest)
    pool = dataset_io.BackgroundPool.from_directory(
        config.backgrounds_dir, config.excluded_categories
    )
    methods = ["none"] if args.no_blend else list(config.methods)
    out_dir = Path(args.out) if args.out else ws / "out"
    result = dataset_io.generate_dataset(
        object_pool,
        distractor_pool,
        pool,
        out_dir,
        master_seed=config.master_seed,
        sample_counts=config.sample_counts(),
        split_ratios=tuple(config.split_ratios),
        layout_config=config.layout_config(),
        blend=config.blend_config(),
        methods=methods,
        category_name=config.category_name,
        jpeg_quality=config.jpeg_quality,
        jobs=args.jobs,
        resolved_config=config.resolved(),
    )
    totals = {s: result.report["splits"][s]["images"] for s in dataset_io.SPLITS}
    print(f"compose: images per split {totals} -> {out_dir}")
    return 0


def cmd_all(args) -> int:
    for step in (cmd_scrape, cmd_mat, cmd_select, cmd_compose):
        code = step(args)
        if code != 0:
            return code
    return 0


def cmd_validate(args) -> int:
    ws = _workspace(args)
    config = _config(args)
    out_dir = Path(args.out) if args.out else ws / "out"
    if not out_dir.is_dir():
        raise DataError(f"output tree not found: {out_dir}")
    problems = dataset_io.validate_tree(out_dir, layout_config=config.layout_config())
    if problems:
        for problem in problems:
            print(f"INVALID: {problem}", file=sys.stderr)
        raise DataError(f"{len(problems)} invariant violation(s) in {out_dir}")
    print(f"validate: {out_dir} passed all invariant checks")
    return 0


def cmd_review(args) -> int:
    import uvicorn

    from .review_api import ReviewCandidate, ReviewStore, create_app

    ws = _workspace(args)
    config = _config(args)
    _write_run_report(ws, "review", config)
    manifest = _manifest(ws)
    objects = [
        CandidateRecord(id=r.id, role=r.role, byte_length=r.byte_length)
        for r in manifest.records.values()
        if r.role == "object"
    ]
    inputs = _selection_inputs(ws, manifest, config, args)
    reports = pre_chain_reports(objects, config.filter_config(), inputs, jobs=args.jobs)
    candidates = [
        ReviewCandidate(
            id=r.id,
            image_path=manifest.image_path(manifest.records[r.id]),
            scores=r.scores,
        )
        for r in reports
        if r.decision == "selected"
    ]
    print(f"review: serving {len(candidates)} pre-chain survivors of {len(objects)} objects")
    frontend = args.frontend or os.environ.get("SYNTHSET_FRONTEND")
    store = ReviewStore(candidates, ws / "decisions.jsonl", ws / "thumbnails")
    app = create_app(store, frontend_dir=frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="synthset", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="pipeline config JSON (flat keys)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker budget for parallel stages")
    common.add_argument("--workspace", default=None,
                        help="workspace directory (default $SYNTHSET_WORKSPACE or ./workspace)")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("scrape", parents=[common], help="expand queries and fetch images")

    sub.add_parser("mat", parents=[common], help="matte raw candidates into RGBA cutouts")

    p_select = sub.add_parser("select", parents=[common], help="run a selection strategy")
    p_select.add_argument("--strategy", choices=["plain", "cnn", "manual"], default="plain")
    p_select.add_argument("--sidecar", default=None, help="detection sidecar JSON (cnn strategy)")
    p_select.add_argument("--decisions", default=None, help="decisions JSONL (manual strategy)")

    p_review = sub.add_parser("review", parents=[common], help="serve the review API/UI")
    p_review.add_argument("--host", default="127.0.0.1")
    p_review.add_argument("--port", type=int, default=8400)
    p_review.add_argument("--frontend", default=None, help="built frontend directory to serve")

    p_compose = sub.add_parser("compose", parents=[common],
                               help="generate the composite dataset")
    p_compose.add_argument("--out", default=None, help="output directory (default ws/out)")
    p_compose.add_argument("--no-blend", action="store_true",
                           help="ablation mode: direct paste only")

    p_all = sub.add_parser("all", parents=[common], help="scrape, mat, select, compose")
    p_all.add_argument("--strategy", choices=["plain", "cnn", "manual"], default="plain")
    p_all.add_argument("--sidecar", default=None)
    p_all.add_argument("--decisions", default=None)
    p_all.add_argument("--out", default=None)
    p_all.add_argument("--no-blend", action="store_true")

    p_validate = sub.add_parser("validate", parents=[common],
                                help="re-check invariants on an output tree")
    p_validate.add_argument("--out", default=None, help="output directory (default ws/out)")
    return parser


_HANDLERS = {
    "scrape": cmd_scrape,
    "mat": cmd_mat,
    "select": cmd_select,
    "review": cmd_review,
    "compose": cmd_compose,
    "all": cmd_all,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.subcommand](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SynthsetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
