"""HTTP review service for the manual selection strategy.

Serves pre-chain survivors with their quality scores, persists human
accept/reject verdicts into an append-only log (full history kept, last
write wins), and exports the effective decisions for
``select --strategy manual``.
"""

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

log = logging.getLogger(__name__)

MAX_PAGE_SIZE = 200
VERDICTS = ("accept", "reject")

REVIEW_GUIDANCE = (
    "Keep photos of a single object of interest on a homogeneous background."
)


@dataclass
class ReviewCandidate:
    id: str
    image_path: Path
    scores: dict


class ReviewStore:
    """Candidates plus the append-only decisions log.

    Effective state is a pure fold over the log: replaying it after a
    restart reproduces the same verdicts.
    """

    def __init__(self, candidates, decisions_path, thumbnail_dir):
        self.candidates = {c.id: c for c in candidates}
        self.decisions_path = Path(decisions_path)
        self.thumbnail_dir = Path(thumbnail_dir)
        self.thumbnail_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._effective: dict = {}
        if self.decisions_path.exists():
            with open(self.decisions_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._effective[rec["candidate_id"]] = rec

    def verdict(self, candidate_id: str) -> Optional[str]:
        rec = self._effective.get(candidate_id)
        return rec["verdict"] if rec else None

    def record(self, candidate_id: str, verdict: str, reviewer: str = "") -> dict:
        rec = {
            "candidate_id": candidate_id,
            "verdict": verdict,
            "decided_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "reviewer": reviewer,
        }
        with self._lock:
            with open(self.decisions_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._effective[candidate_id] = rec
        return rec

    def effective_decisions(self) -> list:
        return [self._effective[cid] for cid in sorted(self._effective)]

    def page(self, status: str, page: int, page_size: int) -> dict:
        ids = sorted(self.candidates)
        if status == "undecided":
            ids = [i for i in ids if self.verdict(i) is None]
        elif status in VERDICTS:
            ids = [i for i in ids if self.verdict(i) == status]
        total_undecided = sum(1 for i in sorted(self.candidates) if self.verdict(i) is None)
        start = (page - 1) * page_size
        items = []
        for cid in ids[start : start + page_size]:
            cand = self.candidates[cid]
            items.append(
                {
                    "id": cid,
                    "thumbnail_url": f"/api/candidates/{cid}/thumbnail",
                    "scores": cand.scores,
                    "verdict": self.verdict(cid),
                }
            )
        return {
            "items": items,
            "page": page,
            "page_size": page_size,
            "total": len(ids),
            "total_candidates": len(self.candidates),
            "undecided": total_undecided,
            "guidance": REVIEW_GUIDANCE,
        }

    def thumbnail(self, candidate_id: str) -> Path:
        cached = self.thumbnail_dir / f"{candidate_id}.png"
        if not cached.exists():
            with Image.open(self.candidates[candidate_id].image_path) as img:
                thumb = img.convert("RGB")
                thumb.thumbnail((256, 256))
                thumb.save(cached)
        return cached


def create_app(store: ReviewStore, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="synthset review")

    @app.get("/api/candidates")
    def list_candidates(status: str = "", page: int = 1, page_size: int = 50):
        page = max(1, page)
        page_size = max(1, min(page_size, MAX_PAGE_SIZE))
        return store.page(status, page, page_size)

    @app.get("/api/candidates/{candidate_id}/thumbnail")
    def thumbnail(candidate_id: str):
        if candidate_id not in store.candidates:
            return JSONResponse({"error": f"unknown candidate {candidate_id}"}, status_code=404)
        return FileResponse(store.thumbnail(candidate_id), media_type="image/png")

    @app.post("/api/decisions")
    async def record_decision(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        candidate_id = body.get("candidate_id")
        verdict = body.get("verdict")
        reviewer = body.get("reviewer", "")
        if not isinstance(candidate_id, str) or not candidate_id:
            return JSONResponse({"error": "candidate_id is required"}, status_code=400)
        if verdict not in VERDICTS:
            return JSONResponse(
                {"error": f"verdict must be one of {list(VERDICTS)}"}, status_code=400
            )
        if candidate_id not in store.candidates:
            return JSONResponse({"error": f"unknown candidate {candidate_id}"}, status_code=404)
        rec = store.record(candidate_id, verdict, str(reviewer))
        return {"ok": True, "decision": rec}

    @app.get("/api/export")
    def export():
        lines = [json.dumps(rec, sort_keys=True) for rec in store.effective_decisions()]
        body = "\n".join(lines)
        if body:
            body += "\n"
        return PlainTextResponse(body, media_type="application/x-ndjson")

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
