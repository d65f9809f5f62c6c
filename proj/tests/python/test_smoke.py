import filecmp
import json
import math
import os
import subprocess

import numpy as np
import pytest

import fcncd

SMALL_SIM = {
    "participants": 12,
    "dimensions": 4,
    "items": 24,
    "blocks": 6,
    "block_size": 4,
    "seed": 3,
}
SMALL_NET = {"embedding_dim": 4, "mapping_dim": 8, "head_dim": 4}


def cli():
    path = os.environ.get("FCNCD_CLI")
    if not path:
        pytest.skip("FCNCD_CLI not set")
    return path


def test_simulate_shapes():
    ds, theta = fcncd.simulate(SMALL_SIM)
    assert ds.num_participants == 12
    assert ds.num_records == 12 * 6
    assert ds.block_type == "MOLE"
    assert theta.shape == (12, 4)
    assert ds.violations() == []
    for _, _, ranks in ds.records():
        assert sorted(ranks) == [1, 2, 2, 3]


def test_simulation_config_rejects_unknown_keys():
    with pytest.raises(fcncd.ValidationError):
        fcncd.simulate({"participant": 3})


def test_encode_and_rank():
    assert fcncd.encode_response("MOLE", 4, most=2, least=0) == [1, 2, 3, 2]
    assert fcncd.encode_response("RANK", 3, order=[1, 2, 0]) == [1, 3, 2]
    assert fcncd.encode_response("PICK", 3, chosen=1) == [1, 3, 1]
    assert fcncd.rank_scores([0.1, 0.9, 0.5], "RANK") == [1, 3, 2]
    with pytest.raises(fcncd.ValidationError):
        fcncd.encode_response("MOLE", 4, most=1, least=1)


def test_losses_match_closed_forms():
    assert fcncd.weighted_bpr_pair(1.0, 0.0, 2, 1, 1.0) == pytest.approx(math.log1p(math.exp(-1.0)), abs=1e-12)
    assert fcncd.original_bpr_pair(2.0, 0.0, 3, 1) == pytest.approx(math.log1p(math.exp(-2.0)), abs=1e-12)
    assert fcncd.block_loss([0.2] * 4, [3, 2, 2, 1]) == pytest.approx(math.log(2.0), abs=1e-12)
    assert fcncd.block_loss([0.1] * 3, [1, 3, 2], "RANK", "list") == pytest.approx(
        (math.log(3.0) + math.log(2.0)) / 3.0, abs=1e-12
    )


def test_metrics():
    assert fcncd.pra([[0.9, 0.1, 0.5]], [[3, 2, 1]], "RANK") == pytest.approx(2 / 3)
    assert fcncd.lra([[3, 2, 2, 1]], [[3, 2, 2, 1]]) == 1.0
    ds, theta = fcncd.simulate(SMALL_SIM)
    sums = ds.rank_sums() / 100.0
    assert fcncd.doa(sums, ds) == 1.0
    assert 0.0 <= fcncd.doa(theta, ds) <= 1.0
    with pytest.raises(fcncd.ShapeError):
        fcncd.doa(np.zeros((2, 2)), ds)


def test_train_is_deterministic(tmp_path):
    ds, _ = fcncd.simulate(SMALL_SIM)
    runs = [fcncd.train(ds, "fcncd", "bfi", SMALL_NET, seed=5, max_epochs=3) for _ in range(2)]
    (m1, r1), (m2, r2) = runs
    assert r1 == r2
    assert 0.0 <= r1["pra"] <= 1.0
    assert len(r1["training"]["history"]) == 3
    assert np.array_equal(m1.abilities(), m2.abilities())
    assert m1.abilities().shape == (12, 4)

    path = tmp_path / "model.ckpt"
    m1.save(str(path))
    back = fcncd.Model.load(str(path))
    assert back.kind == "fcncd"
    assert back.metadata["model"] == "fcncd"
    items = ds.block_items(0)
    assert back.score_block(0, items) == m1.score_block(0, items)

    with pytest.raises(fcncd.ValidationError):
        fcncd.train(ds, "fcncd", None, None, no_such_option=1)
    with pytest.raises(fcncd.ValidationError):
        fcncd.train(ds, "transformer")


def test_dataset_round_trip(tmp_path):
    ds, _ = fcncd.simulate(SMALL_SIM)
    manifest = ds.save(str(tmp_path), "small")
    back = fcncd.Dataset.load(str(manifest))
    assert back.records() == ds.records()
    with pytest.raises(fcncd.ParseError):
        fcncd.Dataset.load(str(tmp_path / "missing.json"))


def run_cli(*args):
    return subprocess.run([cli(), *args], capture_output=True, text=True)


def test_cli_exit_codes(tmp_path):
    assert run_cli("--help").returncode == 0
    assert run_cli("frobnicate").returncode == 2
    assert run_cli("train", "--data", str(tmp_path / "nope.json"), "--out", str(tmp_path)).returncode == 2
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"participants": 0}))
    res = run_cli("simulate", "--config", str(config), "--out", str(tmp_path / "sim"))
    assert res.returncode == 2
    assert "participants" in res.stderr


def test_cli_pipeline_is_reproducible(tmp_path):
    config = tmp_path / "sim.json"
    config.write_text(json.dumps(SMALL_SIM))
    outputs = []
    for tag in ("a", "b"):
        root = tmp_path / tag
        assert run_cli("simulate", "--config", str(config), "--out", str(root / "sim")).returncode == 0
        manifest = str(root / "sim" / "manifest.json")
        res = run_cli(
            "train", "--data", manifest, "--profile", "bfi", "--max-epochs", "2", "--seed", "1",
            "--model-config", json.dumps(SMALL_NET), "--quiet", "--out", str(root / "train"),
        )
        assert res.returncode == 0, res.stderr
        res = run_cli(
            "bench", "--data", manifest, "--models", "random,mupp-2pl", "--repeats", "2",
            "--max-epochs", "2", "--quiet", "--out", str(root / "bench.csv"),
        )
        assert res.returncode == 0, res.stderr
        outputs.append(root)
    a, b = outputs
    for rel in ("train/model.ckpt", "train/history.csv", "train/report.json", "bench.csv", "sim/responses.csv"):
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
    header = (a / "bench.csv").read_text().splitlines()[0]
    assert header == "model,pra,lra,doa,seed_count"
