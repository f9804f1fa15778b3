"""End-to-end desk-scale run of every stage through the CLI.

Stands up a local fixture "search engine" (result pages are JSON arrays of
image URLs), then drives scrape -> mat -> select -> compose -> validate in
demos/output/pipeline/. Takes under a minute.

    python3 demos/03_full_pipeline.py
"""

import io
import json
import shutil
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote

import numpy as np
from PIL import Image

from synthset.cli import main

ROOT = Path(__file__).parent / "output" / "pipeline"
if ROOT.exists():
    shutil.rmtree(ROOT)
ROOT.mkdir(parents=True)

rng = np.random.default_rng(3)


def product_photo(seed, size=256, pad=33):
    r = np.random.default_rng(seed)
    img = np.full((size, size, 3), 255, dtype=np.uint8)
    inner = size - 2 * pad
    img[pad : pad + inner, pad : pad + inner] = r.integers(
        0, 200, size=(inner, inner, 3), dtype=np.uint8
    )
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


IMAGES = {f"parcel{k}.png": product_photo(k) for k in range(4)}
IMAGES.update({f"thing{k}.png": product_photo(100 + k, size=240, pad=20) for k in range(3)})
RESULTS = {
    # every parcel query variant returns the parcel photos
    "parcel": [f"parcel{k}.png" for k in range(4)],
    "Paket": [f"parcel{k}.png" for k in range(4)],
    "包裹": [f"parcel{k}.png" for k in range(2)],
    # one distractor category
    "mug": [f"thing{k}.png" for k in range(3)],
}


class Fixture(BaseHTTPRequestHandler):
    def do_GET(self):
        if self.path.startswith("/results/"):
            query = unquote(self.path.rsplit("/", 1)[-1]).removesuffix(".json")
            urls = [f"http://{self.headers['Host']}/img/{n}" for n in RESULTS.get(query, [])]
            self.send_response(200)
            self.end_headers()
            self.wfile.write(json.dumps(urls).encode())
        elif self.path.startswith("/img/"):
            data = IMAGES.get(self.path.removeprefix("/img/"))
            self.send_response(200 if data else 404)
            self.end_headers()
            if data:
                self.wfile.write(data)

    def log_message(self, *args):
        pass


server = ThreadingHTTPServer(("127.0.0.1", 0), Fixture)
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_port}"
print(f"fixture engine at {base}")

# deterministic gradient backgrounds, one directory per scene category
bgroot = ROOT / "backgrounds"
for cat in ("kitchen", "office", "street", "park", "warehouse", "archive"):
    (bgroot / cat).mkdir(parents=True)
    for i in range(3):
        base_color = rng.integers(50, 190, size=3)
        img = np.clip(
            base_color[None, None, :] + np.linspace(0, 50, 200)[None, :, None], 0, 255
        ).astype(np.uint8)
        img = np.repeat(img, 150, axis=0)
        Image.fromarray(img).save(bgroot / cat / f"{cat}_{i}.jpg", quality=92)

config = {
    "object_queries": ["parcel"],
    "distractor_queries": ["mug"],
    "result_page_template": base + "/results/{engine}/{language}/{query}.json",
    "result_limit": 10,
    "rate_limit_per_host": 0.0,
    "backgrounds_dir": str(bgroot),
    "train_samples": 8,
    "val_samples": 2,
    "test_samples": 2,
}
cfg = ROOT / "config.json"
cfg.write_text(json.dumps(config, indent=2))
ws = ROOT / "workspace"
out = ROOT / "dataset"

steps = [
    ["scrape", "--config", str(cfg), "--workspace", str(ws), "--seed", "7"],
    ["mat", "--config", str(cfg), "--workspace", str(ws), "--seed", "7"],
    ["select", "--config", str(cfg), "--workspace", str(ws), "--strategy", "plain", "--seed", "7"],
    ["compose", "--config", str(cfg), "--workspace", str(ws), "--out", str(out), "--seed", "7"],
    ["validate", "--config", str(cfg), "--workspace", str(ws), "--out", str(out)],
]
for argv in steps:
    print(f"\n$ synthset {' '.join(argv[:1] + [a for a in argv[1:] if not a.startswith('/')])}")
    code = main(argv)
    assert code == 0, f"step {argv[0]} failed with exit {code}"

server.shutdown()
report = json.loads((out / "report.json").read_text())
print("\nimages per split:", {s: report["splits"][s]["images"] for s in ("train", "val", "test")})
print(f"dataset written to {out}")
