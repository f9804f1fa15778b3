"""Object-agnostic quality scores and the three selection strategies.

The filter chain runs in a fixed order (size, border variance, matting,
transparency, then strategy-specific steps) and records the first failed
filter per image, so a reasons report is reproducible byte for byte.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, MattingError
from .geometry import convex_hull, largest_contour, signed_area
from .matting import Cutout

log = logging.getLogger(__name__)

STRATEGIES = ("plain", "cnn", "manual")

# Chain order is fixed; reports name the first stage that failed.
FILTER_SIZE = "size"
FILTER_BORDER_VARIANCE = "border_variance"
FILTER_MATTING = "matting"
FILTER_TRANSPARENCY = "transparency"
FILTER_CONVEXITY = "convexity"
FILTER_DETECTOR = "detector"
FILTER_MANUAL = "manual"


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for the selection chain (defaults follow the reference setup)."""

    min_bytes: int = 80 * 1024
    border_margin_fraction: float = 0.02
    max_border_variance: float = 50.0
    opacity_cutoff_alpha: int = 243  # ceil(0.95 * 255)
    max_transparency_score: float = 0.1
    min_convexity: float = 0.95
    detector_score_threshold: float = 0.95

    def __post_init__(self):
        if not (0.0 < self.border_margin_fraction < 1.0):
            raise ConfigError("border_margin_fraction must be in (0, 1)")
        if not (0.0 < self.max_transparency_score < 1.0):
            raise ConfigError("max_transparency_score must be in (0, 1)")
        if not (0.0 < self.min_convexity <= 1.0):
            raise ConfigError("min_convexity must be in (0, 1]")
        if not (1 <= self.opacity_cutoff_alpha <= 255):
            raise ConfigError("opacity_cutoff_alpha must be in [1, 255]")


def size_filter(byte_length: int, config: FilterConfig) -> bool:
    """Keep images at or above the minimum stored size."""
    if byte_length <= 0:
        raise DataError("byte_length must be positive")
    return byte_length >= config.min_bytes


def _margin(fraction: float, dim: int) -> int:
    return max(1, int(math.floor(fraction * dim + 0.5)))


def border_variance(image: np.ndarray, margin_fraction: float = 0.02) -> float:
    """Mean over channels of the population variance of the outer frame.

    The frame is the image minus an inner rectangle; its thickness per side
    is max(1, round(margin_fraction * dimension)).  If the margins swallow
    the whole image, the variance is taken over all pixels.
    """
    h, w = image.shape[:2]
    if h < 3 or w < 3:
        raise DataError("image too small for border variance (need 3x3)")
    my, mx = _margin(margin_fraction, h), _margin(margin_fraction, w)
    frame = np.ones((h, w), dtype=bool)
    if h - 2 * my > 0 and w - 2 * mx > 0:
        frame[my : h - my, mx : w - mx] = False
    pixels = image[frame].astype(np.float64)  # (N, 3)
    return float(np.mean(np.var(pixels, axis=0)))


def transparency_score(cutout: Cutout, opacity_cutoff_alpha: int = 243) -> float:
    """Fraction of non-zero-alpha pixels that are not fully opaque.

    A pixel counts as opaque at alpha >= the cutoff; the score is the share
    of the matte's support that falls below it.
    """
    alpha = cutout.alpha
    support = alpha > 0
    n = int(support.sum())
    if n == 0:
        raise DataError("empty matte")
    soft = int((support & (alpha < opacity_cutoff_alpha)).sum())
    return soft / n


def opaque_mask(cutout: Cutout, opacity_cutoff_alpha: int = 243) -> np.ndarray:
    """Binary mask used for all contour work: alpha at or above the cutoff."""
    return cutout.alpha >= opacity_cutoff_alpha


def convexity_score(mask: np.ndarray) -> float:
    """Area of the biggest contour divided by the area of its convex hull.

    Raises DataError when the mask is empty or the contour is degenerate
    (all hull points collinear); callers treat that as a rejection.
    """
    contour = largest_contour(mask)
    hull = convex_hull(contour)
    hull_area = abs(signed_area(hull))
    if hull_area <= 0:
        raise DataError("degenerate contour")
    return abs(signed_area(contour)) / hull_area


@dataclass(frozen=True)
class Detection:
    score: float
    bbox: tuple  # (x, y, w, h) pixels


class DetectionSidecar:
    """Externally produced detections keyed by candidate id."""

    def __init__(self, detections: Mapping[str, Sequence[Detection]]):
        self._detections = {k: list(v) for k, v in detections.items()}

    @classmethod
    def load(cls, path) -> "DetectionSidecar":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        out = {}
        for cid, dets in raw.items():
            parsed = []
            for d in dets:
                score = float(d["score"])
                if not (0.0 <= score <= 1.0):
                    raise DataError(f"sidecar score out of range for {cid}: {score}")
                parsed.append(Detection(score=score, bbox=tuple(d["bbox"])))
            out[cid] = parsed
        return cls(out)

    def get(self, source_id: str) -> list:
        return self._detections.get(source_id, [])


def cnn_selection_filter(
    sidecar: DetectionSidecar, source_id: str, config: FilterConfig
) -> bool:
    """Keep only images where the detector found exactly one confident object."""
    hits = [d for d in sidecar.get(source_id) if d.score >= config.detector_score_threshold]
    return len(hits) == 1


@dataclass
class CandidateRecord:
    """One candidate as seen by the selection stage."""

    id: str
    role: str = "object"
    byte_length: int = 0


@dataclass
class SelectionInputs:
    """Everything the chain needs to score a candidate lazily."""

    image_loader: Callable[[str], np.ndarray]
    matte_provider: Callable[[str], Cutout]
    sidecar: Optional[DetectionSidecar] = None
    decisions: Optional[Mapping[str, str]] = None  # id -> "accept" | "reject"


@dataclass
class CandidateReport:
    id: str
    decision: str  # "selected" | "rejected"
    failed_filter: Optional[str]
    scores: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"id": self.id, "decision": self.decision, "scores": self.scores}
        if self.failed_filter is not None:
            doc["failed_filter"] = self.failed_filter
        return json.dumps(doc, sort_keys=True)


@dataclass
class SelectionResult:
    selected: list  # candidate ids, sorted
    reports: list  # CandidateReport, sorted by id

    def selected_by_role(self, candidates: Sequence[CandidateRecord], role: str) -> list:
        roles = {c.id: c.role for c in candidates}
        return [cid for cid in self.selected if roles.get(cid) == role]


def _score_candidate(
    candidate: CandidateRecord,
    strategy: str,
    config: FilterConfig,
    inputs: SelectionInputs,
) -> CandidateReport:
    scores: dict = {"byte_length": candidate.byte_length}

    def rejected(stage):
        return CandidateReport(candidate.id, "rejected", stage, scores)

    if not size_filter(candidate.byte_length, config):
        return rejected(FILTER_SIZE)

    image = inputs.image_loader(candidate.id)
    variance = border_variance(image, config.border_margin_fraction)
    scores["border_variance"] = variance
    if not variance < config.max_border_variance:
        return rejected(FILTER_BORDER_VARIANCE)

    try:
        cutout = inputs.matte_provider(candidate.id)
    except MattingError as exc:
        scores["matting_error"] = str(exc)
        return rejected(FILTER_MATTING)

    transparency = transparency_score(cutout, config.opacity_cutoff_alpha)
    scores["transparency_score"] = transparency
    if not transparency < config.max_transparency_score:
        return rejected(FILTER_TRANSPARENCY)

    # Distractors only pass the common pre-chain; the remaining steps are
    # object-dataset specific.
    if candidate.role != "object":
        return CandidateReport(candidate.id, "selected", None, scores)

    if strategy in ("plain", "cnn"):
        try:
            convexity = convexity_score(opaque_mask(cutout, config.opacity_cutoff_alpha))
        except DataError:
            scores["convexity_score"] = None
            return rejected(FILTER_CONVEXITY)
        scores["convexity_score"] = convexity
        if convexity < config.min_convexity:
            return rejected(FILTER_CONVEXITY)

    if strategy == "cnn":
        if not cnn_selection_filter(inputs.sidecar, candidate.id, config):
            return rejected(FILTER_DETECTOR)

    if strategy == "manual":
        if inputs.decisions.get(candidate.id) != "accept":
            return rejected(FILTER_MANUAL)

    return CandidateReport(candidate.id, "selected", None, scores)


def apply_strategy(
    candidates: Sequence[CandidateRecord],
    strategy: str,
    config: FilterConfig,
    inputs: SelectionInputs,
    jobs: int = 1,
) -> SelectionResult:
    """Run the filter chain for one strategy over a set of candidates.

    Candidates are scored independently (optionally in parallel) and the
    result is assembled in candidate-id order, so identical inputs always
    produce identical output.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; use one of {STRATEGIES}")
    if strategy == "cnn" and inputs.sidecar is None:
        raise ConfigError("cnn strategy requires a detection sidecar")
    if strategy == "manual" and inputs.decisions is None:
        raise ConfigError("manual strategy requires a decisions file")

    ordered = sorted(candidates, key=lambda c: c.id)
    seen = set()
    for c in ordered:
        if c.id in seen:
            raise DataError(f"duplicate candidate id {c.id}")
        seen.add(c.id)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(
                pool.map(lambda c: _score_candidate(c, strategy, config, inputs), ordered)
            )
    else:
        reports = [_score_candidate(c, strategy, config, inputs) for c in ordered]

    selected = [r.id for r in reports if r.decision == "selected"]
    return SelectionResult(selected=selected, reports=reports)


def pre_chain_reports(
    candidates: Sequence[CandidateRecord],
    config: FilterConfig,
    inputs: SelectionInputs,
    jobs: int = 1,
) -> list:
    """Run only the common pre-chain (size, border variance, matting,
    transparency) and report survivors.

    Convexity is still computed for survivors so a review UI can display it,
    but it does not filter here.  Reports come back sorted by id.
    """

    def score(candidate: CandidateRecord) -> CandidateReport:
        # The pre-chain is exactly the manual chain minus the decisions step.
        report = _score_candidate(
            candidate, "manual", config, replace_decisions(inputs, {candidate.id: "accept"})
        )
        if report.decision == "selected" and "convexity_score" not in report.scores:
            try:
                cutout = inputs.matte_provider(candidate.id)
                report.scores["convexity_score"] = convexity_score(
                    opaque_mask(cutout, config.opacity_cutoff_alpha)
                )
            except (DataError, MattingError):
                report.scores["convexity_score"] = None
        return report

    ordered = sorted(candidates, key=lambda c: c.id)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(score, ordered))
    return [score(c) for c in ordered]


def replace_decisions(inputs: SelectionInputs, decisions: Mapping[str, str]) -> SelectionInputs:
    return SelectionInputs(
        image_loader=inputs.image_loader,
        matte_provider=inputs.matte_provider,
        sidecar=inputs.sidecar,
        decisions=decisions,
    )


def write_reasons_report(reports, path) -> None:
    """JSON Lines reasons report: {id, decision, failed_filter?, scores}."""
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(report.to_json() + "\n")


def load_decisions(path) -> dict:
    """Effective verdict per candidate from a decisions JSONL (last one wins)."""
    effective: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            effective[rec["candidate_id"]] = rec["verdict"]
    return effective
