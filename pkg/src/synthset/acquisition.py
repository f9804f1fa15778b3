"""Search-query expansion, polite fetching, and a deduplicated manifest.

Engine result parsing stays behind a small fetcher interface so the rest of
the pipeline never depends on any live search engine.  The bundled HTTP
fetcher speaks to any server whose result pages are JSON arrays of image
URLs, which is also what the test fixture server serves.
"""

import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Protocol, Sequence
from urllib.parse import quote, urlparse

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

ENGINES = ("google", "bing", "yahoo", "baidu")
LANGUAGES = ("en", "de", "zh")
ROLES = ("object", "distractor")
STATUSES = ("raw", "matted", "selected", "rejected")
_STATUS_RANK = {"raw": 0, "matted": 1, "selected": 2, "rejected": 2}

DEFAULT_OBJECT_QUERIES = (
    "parcel",
    "parcel package",
    "parcel amazon",
    "packet post",
    "packing carton",
    "packing box",
    "carton box",
    "shipping box",
    "pallet carton",
)

# Objects are searched in English and German on Google, Bing and Yahoo, and
# in Chinese on Baidu; distractors only on Google in English and German.
DEFAULT_OBJECT_POLICY = (
    ("google", ("en", "de")),
    ("bing", ("en", "de")),
    ("yahoo", ("en", "de")),
    ("baidu", ("zh",)),
)
DEFAULT_DISTRACTOR_POLICY = (("google", ("en", "de")),)

# Static phrase translations, authored once and frozen.  Unknown phrases
# pass through unchanged with a warning.
TRANSLATIONS = {
    "de": {
        "parcel": "Paket",
        "parcel package": "Paket Sendung",
        "parcel amazon": "Paket Amazon",
        "packet post": "Päckchen Post",
        "packing carton": "Verpackungskarton",
        "packing box": "Verpackungsbox",
        "carton box": "Karton Box",
        "shipping box": "Versandkarton",
        "pallet carton": "Palettenkarton",
    },
    "zh": {
        "parcel": "包裹",
        "parcel package": "包裹 快递",
        "parcel amazon": "亚马逊包裹",
        "packet post": "邮政小包",
        "packing carton": "包装纸箱",
        "packing box": "包装盒",
        "carton box": "纸箱",
        "shipping box": "快递箱",
        "pallet carton": "托盘纸箱",
    },
}


@dataclass(frozen=True)
class QueryTask:
    engine: str
    query: str
    language: str
    role: str

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.language not in LANGUAGES:
            raise ConfigError(f"unknown language {self.language!r}")
        if self.role not in ROLES:
            raise ConfigError(f"unknown role {self.role!r}")
        if not self.query:
            raise ConfigError("query must be non-empty")
        if self.engine == "baidu" and self.role == "object" and self.language != "zh":
            raise ConfigError("baidu object queries must be Chinese")


def translate_queries(queries: Sequence[str], target_language: str) -> list:
    """Pure table lookup; unknown phrases pass through with a warning."""
    if target_language == "en":
        return list(queries)
    table = TRANSLATIONS.get(target_language)
    if table is None:
        raise ConfigError(f"unknown language {target_language!r}")
    out = []
    for query in queries:
        if query in table:
            out.append(table[query])
        else:
            log.warning("no %s translation for %r; passing through", target_language, query)
            out.append(query)
    return out


def expand_queries(
    object_queries: Optional[Sequence[str]] = None,
    distractor_queries: Sequence[str] = (),
    object_policy=DEFAULT_OBJECT_POLICY,
    distractor_policy=DEFAULT_DISTRACTOR_POLICY,
) -> list:
    """One QueryTask per (query x engine x language) cell of the policy.

    Order is deterministic: engine, then language, then query index.  The
    query text is localized for the task's language.
    """
    if object_queries is None:
        object_queries = DEFAULT_OBJECT_QUERIES
    if not object_queries and not distractor_queries:
        raise ConfigError("no queries")
    tasks = []
    for role, queries, policy in (
        ("object", object_queries, object_policy),
        ("distractor", distractor_queries, distractor_policy),
    ):
        for engine, languages in policy:
            for language in languages:
                for query in translate_queries(list(queries), language):
                    tasks.append(QueryTask(engine=engine, query=query, language=language, role=role))
    return tasks


def sample_distractor_categories(category_list: Sequence[str], k: int, seed: int) -> list:
    """Sample k category names without replacement, deterministic in the seed."""
    if k > len(category_list):
        raise DataError(f"cannot sample {k} from {len(category_list)} categories")
    return random.Random(seed).sample(list(category_list), k)


def load_category_file(path) -> list:
    """Plain text category list, one name per line, blanks skipped."""
    names = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            name = line.strip()
            if name:
                names.append(name)
    if not names:
        raise DataError(f"no category names in {path}")
    return names


class ResultFetcher(Protocol):
    """What a live or fixture search adapter must provide."""

    def search(self, task: QueryTask, limit: int) -> list:
        """Result image URLs for a task, best first, at most ``limit``."""
        ...

    def download(self, url: str) -> bytes:
        """Raw bytes of one result; raises on failure."""
        ...


class JsonResultPageFetcher:
    """Fetcher for servers whose result pages are JSON arrays of URLs.

    ``template`` must contain {engine}, {language} and {query} placeholders.
    This is the documented adapter contract: a live adapter implements the
    same two methods against a real engine.
    """

    def __init__(self, template: str, timeout: float = 30.0):
        if not all(k in template for k in ("{engine}", "{language}", "{query}")):
            raise ConfigError("result page template needs {engine}/{language}/{query}")
        self.template = template
        self.timeout = timeout

    def _result_page_url(self, task: QueryTask) -> str:
        return self.template.format(
            engine=task.engine, language=task.language, query=quote(task.query, safe="")
        )

    def search(self, task: QueryTask, limit: int) -> list:
        import requests

        response = requests.get(self._result_page_url(task), timeout=self.timeout)
        response.raise_for_status()
        urls = response.json()
        if not isinstance(urls, list):
            raise DataError("result page is not a JSON array of URLs")
        return [str(u) for u in urls[:limit]]

    def download(self, url: str) -> bytes:
        import requests

        response = requests.get(url, timeout=self.timeout)
        response.raise_for_status()
        return response.content


class HostRateLimiter:
    """Minimum spacing between requests to the same host; thread-safe."""

    def __init__(self, min_interval: float = 1.0):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._next_ok: dict = {}

    def wait(self, url: str) -> None:
        if self.min_interval <= 0:
            return
        host = urlparse(url).netloc or "local"
        while True:
            with self._lock:
                now = time.monotonic()
                ready = self._next_ok.get(host, now)
                if ready <= now:
                    self._next_ok[host] = now + self.min_interval
                    return
                delay = ready - now
            time.sleep(delay)


@dataclass
class FetchOutcome:
    downloads: list  # (url, bytes)
    skipped: list  # (url, reason)


def fetch_task(
    task: QueryTask,
    fetcher: ResultFetcher,
    limit: int = 500,
    rate_limiter: Optional[HostRateLimiter] = None,
    retries: int = 2,
    backoff: float = 0.5,
) -> FetchOutcome:
    """Download up to ``limit`` results for one task.

    Each download is retried up to ``retries`` extra times with exponential
    backoff; a URL that keeps failing is recorded as skipped and never
    aborts the batch.
    """
    if limit < 1:
        raise ConfigError("limit must be >= 1")
    limiter = rate_limiter or HostRateLimiter(0.0)
    page_url = getattr(fetcher, "_result_page_url", None)
    limiter.wait(page_url(task) if page_url else f"search://{task.engine}")
    try:
        urls = fetcher.search(task, limit)
    except Exception as exc:
        log.warning("search failed for %s/%s %r: %s", task.engine, task.language, task.query, exc)
        return FetchOutcome(downloads=[], skipped=[("<search>", str(exc))])

    downloads = []
    skipped = []
    for url in urls:
        last_error = None
        for attempt in range(retries + 1):
            limiter.wait(url)
            try:
                downloads.append((url, fetcher.download(url)))
                last_error = None
                break
            except Exception as exc:
                last_error = exc
                if attempt < retries:
                    time.sleep(backoff * (2**attempt))
        if last_error is not None:
            log.warning("giving up on %s after %d attempts: %s", url, retries + 1, last_error)
            skipped.append((url, str(last_error)))
    return FetchOutcome(downloads=downloads, skipped=skipped)


def content_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sniff_extension(data: bytes) -> Optional[str]:
    if data[:3] == b"\xff\xd8\xff":
        return "jpg"
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:4] == b"RIFF" and data[8:12] == b"WEBP":
        return "webp"
    return None


@dataclass
class CandidateImage:
    id: str
    source_url: str
    engine: str
    query: str
    language: str
    role: str
    byte_length: int
    fetched_at: str  # UTC ISO-8601
    status: str = "raw"
    reject_reason: Optional[str] = None

    def to_json(self) -> str:
        doc = {
            "id": self.id,
            "source_url": self.source_url,
            "engine": self.engine,
            "query": self.query,
            "language": self.language,
            "role": self.role,
            "byte_length": self.byte_length,
            "fetched_at": self.fetched_at,
            "status": self.status,
        }
        if self.reject_reason is not None:
            doc["reject_reason"] = self.reject_reason
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "CandidateImage":
        doc = json.loads(line)
        return cls(
            id=doc["id"],
            source_url=doc["source_url"],
            engine=doc["engine"],
            query=doc["query"],
            language=doc["language"],
            role=doc["role"],
            byte_length=doc["byte_length"],
            fetched_at=doc["fetched_at"],
            status=doc.get("status", "raw"),
            reject_reason=doc.get("reject_reason"),
        )


class Manifest:
    """Append-only JSONL manifest plus content-addressed image store.

    One record per content hash; the first provenance wins.  Status updates
    rewrite the file but must move forward (raw -> matted -> selected or
    rejected).
    """

    def __init__(self, manifest_path, store_dir):
        self.path = Path(manifest_path)
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.records: dict = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = CandidateImage.from_json(line)
                        if record.id in self.records:
                            raise DataError(f"duplicate manifest id {record.id}")
                        self.records[record.id] = record

    def __len__(self) -> int:
        return len(self.records)

    def image_path(self, record: CandidateImage) -> Path:
        matches = list(self.store_dir.glob(f"{record.id}.*"))
        if not matches:
            raise DataError(f"stored file missing for {record.id}")
        return matches[0]

    def append(self, record: CandidateImage, data: bytes) -> bool:
        """Record new bytes; returns False for duplicates (first wins)."""
        with self._lock:
            if record.id in self.records:
                return False
            ext = sniff_extension(data)
            if ext is None:
                raise DataError("unsupported image format")
            (self.store_dir / f"{record.id}.{ext}").write_bytes(data)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
            self.records[record.id] = record
            return True

    def update_status(self, candidate_id: str, status: str, reject_reason=None) -> None:
        if status not in STATUSES:
            raise DataError(f"unknown status {status!r}")
        with self._lock:
            record = self.records.get(candidate_id)
            if record is None:
                raise DataError(f"unknown candidate {candidate_id}")
            if _STATUS_RANK[status] < _STATUS_RANK[record.status]:
                raise DataError(
                    f"status may not move backwards: {record.status} -> {status}"
                )
            record.status = status
            record.reject_reason = reject_reason if status == "rejected" else None
            self._rewrite()

    def update_statuses(self, updates: dict) -> None:
        """Bulk form of update_status: {id: (status, reject_reason)}."""
        with self._lock:
            for candidate_id, (status, reason) in updates.items():
                record = self.records.get(candidate_id)
                if record is None:
                    raise DataError(f"unknown candidate {candidate_id}")
                if _STATUS_RANK[status] < _STATUS_RANK[record.status]:
                    raise DataError(
                        f"status may not move backwards: {record.status} -> {status}"
                    )
                record.status = status
                record.reject_reason = reason if status == "rejected" else None
            self._rewrite()

    def _rewrite(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for record in self.records.values():
                fh.write(record.to_json() + "\n")
        tmp.replace(self.path)

    def by_status(self, status: str) -> list:
        return [r for r in self.records.values() if r.status == status]


def dedupe_and_record(
    downloads: Sequence[tuple],
    manifest: Manifest,
    task: QueryTask,
    fetched_at: Optional[str] = None,
) -> int:
    """Record downloads keyed by content hash; returns the new-record count.

    Duplicate bytes are recorded once even when they came from different
    URLs; zero-length or unrecognized payloads are skipped with a reason.
    """
    fetched_at = fetched_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    new = 0
    for url, data in downloads:
        if not data:
            log.warning("skipping %s: empty payload", url)
            continue
        if sniff_extension(data) is None:
            log.warning("skipping %s: not a jpg/png/webp payload", url)
            continue
        record = CandidateImage(
            id=content_id(data),
            source_url=url,
            engine=task.engine,
            query=task.query,
            language=task.language,
            role=task.role,
            byte_length=len(data),
            fetched_at=fetched_at,
        )
        if manifest.append(record, data):
            new += 1
    return new
