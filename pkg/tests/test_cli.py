import csv
import json
import time

import pytest

from geoflow.cli import main

SMALL_NET = ["--hidden", "16,16", "--time-dim", "4", "--train-steps", "60"]
FAST = ["--steps", "4", "--draws", "3"]


@pytest.fixture
def world(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["gen-data", "--pairs", "12", "--distractors", "2", "--dim", "8", "--seed", "1"]) == 0
    return tmp_path / "geoflow_data"


def test_no_args_and_usage_errors(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["bogus"]) == 1
    assert main(["train", "--lr", "abc"]) == 1


def test_gen_data_deterministic(world, tmp_path):
    first = {p.name: p.read_bytes() for p in world.iterdir()}
    assert set(first) == {"train.ndjson", "test.ndjson", "gallery.ndjson", "truth.csv"}
    assert main(["gen-data", "--pairs", "12", "--distractors", "2", "--dim", "8", "--seed", "1",
                 "--out", str(tmp_path / "again")]) == 0
    assert {p.name: p.read_bytes() for p in (tmp_path / "again").iterdir()} == first
    assert main(["gen-data", "--test-fraction", "0.25", "--out", str(tmp_path / "x")]) == 1


def test_full_chain_small(world, tmp_path):
    assert main(["train", *SMALL_NET]) == 0
    ck = (world / "model.ckpt").read_bytes()
    assert main(["train", *SMALL_NET, "--out", "b.ckpt"]) == 0
    assert (tmp_path / "b.ckpt").read_bytes() == ck
    assert main(["train-retrieval", "--steps", "30", "--dim", "8"]) == 0
    assert main(["infer", *FAST, "--out", "pred.csv"]) == 0
    assert main(["eval", "--pred", "pred.csv", "--truth", str(world / "truth.csv"), "--out", "ev.json"]) == 0
    ev = json.loads((tmp_path / "ev.json").read_text())
    assert set(ev) >= {"Acc@1km", "Acc@25km", "Acc@50km", "Acc@200km", "Mean Dist", "Median Dist"}
    assert main(["density", "--n-lat", "4", "--n-lon", "8", "--steps", "3", "--geojson", "d.geojson"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "density.csv")))
    assert len(rows) == 32 and set(rows[0]) == {"lat", "lon", "log_density", "solid_angle"}
    assert json.loads((tmp_path / "d.geojson").read_text())["type"] == "FeatureCollection"
    assert main(["localizability", "--samples", "10", "--steps", "3", "--density-steps", "3",
                 "--out", "loc.json"]) == 0
    assert "bits" in json.loads((tmp_path / "loc.json").read_text())
    assert main(["retrieve", "--k", "3", "--center", "40,-100", "--radius-km", "2000",
                 "--out", "ret.json"]) == 0
    assert main(["pipeline", *FAST, "--r-km", "200", "--predictions", "pp.csv"]) == 0
    rep = json.loads((tmp_path / "pipeline_report.json").read_text())
    assert rep["fused"]["n"] == len(list(csv.DictReader(open(tmp_path / "pp.csv"))))
    assert main(["sweep", *FAST, "--radii", "25,200,inf"]) == 0
    again = tmp_path / "pipeline2.json"
    assert main(["pipeline", *FAST, "--r-km", "200", "--out", str(again)]) == 0
    assert json.loads(again.read_text()) == rep


@pytest.mark.parametrize("method", ["ddpm", "fm"])
def test_other_methods(world, method):
    assert main(["train", "--method", method, *SMALL_NET, "--out", f"{method}.ckpt"]) == 0
    assert main(["infer", "--checkpoint", f"{method}.ckpt", *FAST, "--out", f"{method}.csv"]) == 0
    assert main(["infer", "--checkpoint", f"{method}.ckpt", "--method", "rfm"]) == 1
    assert main(["density", "--checkpoint", f"{method}.ckpt"]) == 1


def test_eval_identical_files(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "t.csv").write_text("id,lat,lon\na,10,20\nb,-30,140.5\n")
    assert main(["eval", "--pred", "t.csv", "--truth", "t.csv", "--out", "r.json"]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["Acc@1km"] == 1.0 and rep["Median Dist"] == 0.0


def test_exit_codes(world, tmp_path):
    assert main(["train", "--data", "missing.ndjson"]) == 2
    (tmp_path / "bad.ndjson").write_text('{"id": "a", "lat": 91, "lon": 0, "modality": "vgi", "vec": [1]}\n')
    assert main(["train", "--data", "bad.ndjson"]) == 2
    (tmp_path / "bad.cfg").write_text("unknown_key = 1\n")
    assert main(["train", "--config", "bad.cfg"]) == 1
    assert main(["pipeline", "--checkpoint", "nope.ckpt"]) == 2
    (tmp_path / "junk.ckpt").write_bytes(b"junk")
    assert main(["infer", "--checkpoint", "junk.ckpt"]) == 2
    assert main(["train", *SMALL_NET, "--lr", "1e300", "--out", "nan.ckpt"]) == 3


@pytest.mark.slow
def test_defaults_smoke_under_five_minutes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    t0 = time.perf_counter()
    assert main(["gen-data"]) == 0
    assert main(["train", "--method", "rfm"]) == 0
    assert main(["pipeline"]) == 0
    assert time.perf_counter() - t0 < 300
    assert json.loads((tmp_path / "pipeline_report.json").read_text())["fused"]["n"] > 0
