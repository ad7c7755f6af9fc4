import json

import numpy as np
import pytest

from arwlab import harness as H


def test_derive_seed_is_pure():
    assert H.derive_seed(3, 5, "x") == H.derive_seed(3, 5, "x")
    assert H.derive_seed(3, 5, "x") != H.derive_seed(3, 5, "y")
    assert 0 <= H.derive_seed(2**64 - 1, 0, 0) < 2**64


def test_derive_seed_no_collisions():
    seeds = {H.derive_seed(42, r, t) for r in range(250_000) for t in range(4)}
    assert len(seeds) == 1_000_000


def test_derive_seed_avalanche():
    rng = np.random.default_rng(0)
    flipped = 0
    trials = 10_000
    for _ in range(trials):
        m = int(rng.integers(0, 2**63))
        bit = int(rng.integers(0, 64))
        a = H.derive_seed(m, 1, 0)
        b = H.derive_seed(m ^ (1 << bit), 1, 0)
        flipped += bin(a ^ b).count("1")
    assert flipped / (64 * trials) > 0.49


def test_unknown_keys_rejected():
    with pytest.raises(H.ConfigError, match="bogus"):
        H.ExperimentConfig.from_dict({"experiment": "aggregate", "bogus": 1})


@pytest.mark.parametrize("bad", [
    {"lambda": 0}, {"lambda": -1.0}, {"lambda": float("inf")}, {"replicas": 0},
    {"mode": "fast"}, {"zeta": 1.5}, {"dim": 0}, {"experiment": "nope"},
])
def test_invalid_config_writes_nothing(tmp_path, bad):
    out = tmp_path / "run"
    data = {"experiment": "aggregate", "n": 10, "out": str(out), **bad}
    with pytest.raises(H.ConfigError):
        H.run_experiment(data)
    assert not out.exists()


def test_torus_experiments_need_L():
    with pytest.raises(H.ConfigError, match="--L"):
        H.ExperimentConfig.from_dict({"experiment": "free"})


def test_json_round_trip(tmp_path):
    cfg = H.ExperimentConfig(experiment="hyperuniformity", L=10, lam=2.0, boxes=[2, 5], seed=9)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert H.ExperimentConfig.from_json(p) == cfg


def _bytes(out, name):
    return (out / name).read_bytes()


def test_aggregate_manifest(tmp_path):
    out = tmp_path / "agg"
    man = H.run_experiment({"experiment": "aggregate", "n": 10_000, "lambda": 1.0,
                            "seed": 7, "out": str(out)})
    assert set(man.outputs) == {"metrics.csv", "snapshots/aggregate_r0.pgm"}
    assert H.verify_manifest(out)
    on_disk = json.loads(_bytes(out, "manifest.json"))
    assert on_disk["config"]["lambda"] == 1.0 and on_disk["replica_seeds"] == man.replica_seeds
    assert 0.6 < float(man.summary["zeta_hat"]) < 0.75
    (out / "metrics.csv").write_text("tampered\n")
    assert not H.verify_manifest(out)


@pytest.mark.parametrize("cfg", [
    {"experiment": "aggregate", "n": 300},
    {"experiment": "free", "L": 8, "lambda": 2.0, "steps": 40},
    {"experiment": "wake", "L": 9, "zeta": 0.3, "steps": 3},
    {"experiment": "hyperuniformity", "L": 10, "lambda": 2.0, "zeta": 0.4},
], ids=lambda c: c["experiment"])
def test_thread_count_does_not_change_outputs(tmp_path, cfg):
    runs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        man = H.run_experiment({**cfg, "replicas": 8, "threads": threads, "seed": 5,
                                "out": str(out)})
        runs.append(man.outputs)
    assert runs[0] == runs[1]


def test_replica_rows_do_not_depend_on_replica_count(tmp_path):
    rows = []
    for reps in (1, 8):
        out = tmp_path / f"r{reps}"
        H.run_experiment({"experiment": "aggregate", "n": 300, "replicas": reps, "seed": 5,
                          "out": str(out)})
        rows.append(_bytes(out, "metrics.csv").decode().splitlines())
    assert rows[1][:2] == rows[0]
    assert len(rows[1]) == 9


def test_rerun_reproduces_checksums(tmp_path):
    cfg = {"experiment": "wired-sample", "L": 12, "lambda": 1.0, "replicas": 3, "seed": 11}
    a = H.run_experiment({**cfg, "out": str(tmp_path / "a")})
    b = H.run_experiment({**cfg, "out": str(tmp_path / "b")})
    assert a.outputs == b.outputs and a.replica_seeds == b.replica_seeds


def test_budget_events_are_recorded(tmp_path):
    man = H.run_experiment({"experiment": "aggregate", "n": 100, "budget": 50,
                            "replicas": 2, "out": str(tmp_path / "b")})
    assert len(man.budget_events) == 2
    assert (tmp_path / "b" / "manifest.json").exists()


def test_every_experiment_runs(tmp_path):
    small = {
        "aggregate": {"n": 50},
        "region": {"eps": 0.25},
        "sprinkle": {"L": 8, "t": 0.2},
        "wired-sample": {"L": 6},
        "hockey": {"L": 8, "lambda": 2.0, "tstep": 0.2},
        "free": {"L": 6, "lambda": 2.0, "steps": 20},
        "wake": {"L": 7, "zeta": 0.3, "steps": 2},
        "correlations": {"L": 8, "lambda": 2.0, "zeta": 0.3, "r_max": 2},
        "hyperuniformity": {"L": 8, "lambda": 2.0, "zeta": 0.3},
        "quadrature": {"eps": 0.2, "x0_samples": 3},
        "coupling": {"L": 4, "max_steps": 200},
    }
    assert set(small) == set(H.EXPERIMENTS)
    for name, extra in small.items():
        out = tmp_path / name
        man = H.run_experiment({"experiment": name, "replicas": 2, "out": str(out), **extra})
        assert man.outputs and H.verify_manifest(out), name
