import json
import re

import pytest

from arwlab import cli
from arwlab.harness import EXPERIMENT_KEYS, EXPERIMENTS, ExperimentConfig


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_aggregate_prints_summary(tmp_path, capsys):
    code, out, _ = _run(capsys, "aggregate", "--n", 2000, "--lambda", 1, "--dim", 2,
                        "--seed", 7, "--replicas", 2, "--out", tmp_path)
    assert code == 0
    pairs = dict(line.split("=", 1) for line in out.splitlines())
    assert re.fullmatch(r"0\.\d{4}±0\.\d{4}", pairs["zeta_hat"])
    assert pairs["budget_events"] == "0"


def test_hockey_writes_curve(tmp_path, capsys):
    code, _, _ = _run(capsys, "hockey", "--L", 8, "--lambda", 2, "--tmax", 0.4,
                      "--tstep", 0.2, "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "hockey.csv").read_text().splitlines()
    assert lines[0] == "t,global_density,bulk_density" and len(lines) == 4


@pytest.mark.parametrize("argv", [
    ["aggregate", "--lambda", "-1"],
    ["aggregate", "--lambda", "nan"],
    ["aggregate", "--nonsense"],
    ["free"],
    ["nosuch"],
    [],
])
def test_usage_errors_exit_2(tmp_path, capsys, argv):
    code, _, err = _run(capsys, *argv, *(["--out", tmp_path / "x"] if len(argv) > 1 else []))
    assert code == 2 and err
    assert not (tmp_path / "x").exists()


def test_budget_exit_3(tmp_path, capsys):
    code, out, _ = _run(capsys, "aggregate", "--n", 100, "--budget", 50, "--out", tmp_path)
    assert code == 3 and "budget_events=1" in out
    assert (tmp_path / "manifest.json").exists()


def test_io_error_exit_4(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = _run(capsys, "aggregate", "--n", 10, "--out", blocker / "sub")
    assert code == 4 and "io error" in err


def test_help_lists_every_flag(capsys):
    shared = ["--dim", "--L", "--lambda", "--seed", "--replicas", "--threads", "--mode",
              "--budget", "--out", "--config"]
    for name in EXPERIMENTS:
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args([name, "--help"])
        text = capsys.readouterr().out
        extra = ["--" + k.replace("_", "-") for k in EXPERIMENT_KEYS[name]]
        for flag in shared + extra:
            assert re.search(re.escape(flag) + r"\b", text), (name, flag)


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "aggregate", "n": 50, "lambda": 4.0, "seed": 3}))
    out = tmp_path / "o"
    assert _run(capsys, "aggregate", "--config", cfg, "--seed", 9, "--out", out)[0] == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["seed"] == 9 and man["config"]["lambda"] == 4.0
    assert man["config"]["n"] == 50


def test_config_for_other_experiment_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "free", "L": 5}))
    assert _run(capsys, "aggregate", "--config", cfg)[0] == 2


def test_manifest_replay_via_flags(tmp_path, capsys):
    first = tmp_path / "a"
    _run(capsys, "correlations", "--L", 8, "--lambda", 2, "--zeta", 0.3, "--r-max", 2,
         "--replicas", 3, "--seed", 4, "--out", first)
    man = json.loads((first / "manifest.json").read_text())
    cfg = ExperimentConfig.from_dict({**man["config"], "out": str(tmp_path / "b")})
    assert _run(capsys, *cfg.to_argv())[0] == 0
    again = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert again["outputs"] == man["outputs"]
