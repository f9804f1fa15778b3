import io
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from synthset.cli import main

from fixture_server import serve


def parcel_png(seed):
    """Scrapeable parcel photo: white border, incompressible dark interior."""
    rng = np.random.default_rng(seed)
    img = np.full((256, 256, 3), 255, dtype=np.uint8)
    img[33:223, 33:223] = rng.integers(0, 200, size=(190, 190, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    data = buf.getvalue()
    assert len(data) >= 80 * 1024
    return data


def distractor_png(seed):
    rng = np.random.default_rng(seed + 1000)
    img = np.full((240, 240, 3), 250, dtype=np.uint8)
    img[20:220, 30:210] = rng.integers(0, 190, size=(200, 180, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    data = buf.getvalue()
    assert len(data) >= 80 * 1024
    return data


@pytest.fixture(scope="module")
def pipeline_ws(tmp_path_factory, background_tree):
    """Full scrape -> mat -> select(plain) workspace, built once."""
    root = tmp_path_factory.mktemp("cli")
    ws = root / "ws"
    images = {f"parcel{k}.png": parcel_png(k) for k in range(3)}
    images.update({f"mug{k}.png": distractor_png(k) for k in range(2)})
    results = {
        "parcel": ["parcel0.png", "parcel1.png", "parcel2.png"],
        "Paket": ["parcel0.png", "parcel1.png", "parcel2.png"],
        "包裹": ["parcel0.png", "parcel1.png"],
        "mug": ["mug0.png", "mug1.png"],
    }
    with serve(results, images) as base:
        config = {
            "object_queries": ["parcel"],
            "distractor_queries": ["mug"],
            "result_page_template": base + "/results/{engine}/{language}/{query}.json",
            "result_limit": 10,
            "rate_limit_per_host": 0.0,
            "retry_backoff": 0.01,
            "backgrounds_dir": str(background_tree),
            "train_samples": 3,
            "val_samples": 1,
            "test_samples": 1,
        }
        cfg = root / "config.json"
        cfg.write_text(json.dumps(config))
        assert main(["scrape", "--config", str(cfg), "--workspace", str(ws),
                     "--jobs", "2", "--seed", "11"]) == 0
        assert main(["mat", "--config", str(cfg), "--workspace", str(ws),
                     "--jobs", "2", "--seed", "11"]) == 0
        assert main(["select", "--config", str(cfg), "--workspace", str(ws),
                     "--strategy", "plain", "--seed", "11", "--jobs", "1"]) == 0
    return ws, cfg


class TestPipelineFlow:
    def test_scrape_recorded_five_unique_images(self, pipeline_ws):
        ws, _ = pipeline_ws
        lines = (ws / "manifest.jsonl").read_text().strip().splitlines()
        records = [json.loads(l) for l in lines]
        assert len(records) == 5
        roles = sorted(r["role"] for r in records)
        assert roles == ["distractor", "distractor", "object", "object", "object"]
        for record in records:
            assert (ws / "images" / f"{record['id']}.png").exists()

    def test_mat_produced_cutouts(self, pipeline_ws):
        ws, _ = pipeline_ws
        assert len(list((ws / "cutouts").glob("*.png"))) == 5

    def test_select_plain_keeps_everything_clean(self, pipeline_ws):
        ws, _ = pipeline_ws
        selected = json.loads((ws / "selection" / "selected.json").read_text())
        assert len(selected["objects"]) == 3
        assert len(selected["distractors"]) == 2
        reasons = (ws / "selection" / "reasons.jsonl").read_text().strip().splitlines()
        assert len(reasons) == 5
        for line in reasons:
            doc = json.loads(line)
            assert doc["decision"] == "selected"
            assert set(doc) == {"id", "decision", "scores"}

    def test_compose_and_validate(self, pipeline_ws, tmp_path):
        ws, cfg = pipeline_ws
        out = tmp_path / "out"
        assert main(["compose", "--config", str(cfg), "--workspace", str(ws),
                     "--out", str(out), "--seed", "11", "--jobs", "2"]) == 0
        assert len(list((out / "train" / "images").glob("*.jpg"))) == 12
        assert len(list((out / "val" / "images").glob("*.jpg"))) == 4
        assert len(list((out / "test" / "images").glob("*.jpg"))) == 4
        report = json.loads((out / "report.json").read_text())
        assert report["master_seed"] == 11
        assert main(["validate", "--config", str(cfg), "--workspace", str(ws),
                     "--out", str(out)]) == 0

    def test_no_blend_ablation_single_variant(self, pipeline_ws, tmp_path):
        ws, cfg = pipeline_ws
        out = tmp_path / "ablate"
        assert main(["compose", "--config", str(cfg), "--workspace", str(ws),
                     "--out", str(out), "--no-blend", "--seed", "11"]) == 0
        assert len(list((out / "train" / "images").glob("*.jpg"))) == 3
        names = [p.name for p in (out / "train" / "images").glob("*.jpg")]
        assert all(n.endswith("_none.jpg") for n in names)

    def test_manual_strategy_via_decisions_file(self, pipeline_ws, tmp_path):
        ws, cfg = pipeline_ws
        manifest = [json.loads(l) for l in (ws / "manifest.jsonl").read_text().splitlines()]
        object_ids = sorted(r["id"] for r in manifest if r["role"] == "object")
        decisions = tmp_path / "decisions.jsonl"
        with open(decisions, "w") as fh:
            for cid in object_ids[:2]:
                fh.write(json.dumps({"candidate_id": cid, "verdict": "accept"}) + "\n")
            fh.write(json.dumps({"candidate_id": object_ids[2], "verdict": "reject"}) + "\n")
        assert main(["select", "--config", str(cfg), "--workspace", str(ws),
                     "--strategy", "manual", "--decisions", str(decisions),
                     "--seed", "11"]) == 0
        selected = json.loads((ws / "selection" / "selected.json").read_text())
        assert selected["objects"] == object_ids[:2]

    def test_run_report_written_and_deterministic(self, pipeline_ws):
        ws, cfg = pipeline_ws
        report = json.loads((ws / "report.json").read_text())
        assert report["master_seed"] == 11
        assert report["config"]["train_samples"] == 3
        before = (ws / "report.json").read_bytes()
        assert main(["select", "--config", str(cfg), "--workspace", str(ws),
                     "--strategy", "plain", "--seed", "11"]) == 0
        assert (ws / "report.json").read_bytes() == before


class TestExitCodes:
    def test_cnn_without_sidecar_exits_1_naming_input(self, pipeline_ws, capsys):
        ws, cfg = pipeline_ws
        code = main(["select", "--config", str(cfg), "--workspace", str(ws),
                     "--strategy", "cnn"])
        assert code == 1
        assert "sidecar" in capsys.readouterr().err

    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag_exits_1(self, capsys):
        assert main(["validate", "--bogus"]) == 1

    def test_unknown_config_key_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"not_a_key": 1}))
        code = main(["validate", "--config", str(cfg), "--workspace", str(tmp_path)])
        assert code == 1
        assert "not_a_key" in capsys.readouterr().err

    def test_validate_missing_tree_exits_2(self, tmp_path):
        assert main(["validate", "--workspace", str(tmp_path)]) == 2

    def test_validate_tampered_tree_exits_2(self, pipeline_ws, tmp_path):
        import shutil

        ws, cfg = pipeline_ws
        out = tmp_path / "out"
        assert main(["compose", "--config", str(cfg), "--workspace", str(ws),
                     "--out", str(out), "--seed", "11"]) == 0
        coco_path = out / "train" / "annotations.coco.json"
        coco = json.loads(coco_path.read_text())
        if coco["annotations"]:
            coco["annotations"][0]["bbox"] = [-5, -5, 10, 10]
            coco_path.write_text(json.dumps(coco))
            assert main(["validate", "--config", str(cfg), "--workspace", str(ws),
                         "--out", str(out)]) == 2

    def test_compose_without_selection_exits_2(self, tmp_path, background_tree):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"backgrounds_dir": str(background_tree)}))
        ws = tmp_path / "emptyws"
        assert main(["compose", "--config", str(cfg), "--workspace", str(ws)]) == 2

    def test_compose_without_backgrounds_exits_1(self, pipeline_ws, tmp_path):
        ws, _ = pipeline_ws
        cfg = tmp_path / "nobg.json"
        cfg.write_text(json.dumps({}))
        assert main(["compose", "--config", str(cfg), "--workspace", str(ws)]) == 1
