import csv
import json
from pathlib import Path

import jsonschema
import pytest

from nimp.cli import main
from nimp.config import SCHEMA, ConfigError, build_task, config_from_dict, parse_config
from nimp.lattice import exact_correlation

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def minimal(**protocol):
    return {
        "model": {"name": "tfim", "N": 2},
        "task": {"O1": {"kind": "spin", "site": 0, "axis": "z"}, "O2": {"kind": "spin", "site": 1, "axis": "z"}, "t1": 0.1, "t2": 0.4},
        "protocol": {"name": "oracle", **protocol},
    }


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def test_minimal_config_defaults_and_round_trip():
    cfg = config_from_dict(minimal())
    assert cfg.protocol.lam == 1e-3
    assert cfg.task.initial_state == {"kind": "all_up"}
    assert cfg.output.result == "result.json"
    again = parse_config(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_schema_is_valid_draft_2020_12():
    jsonschema.Draft202012Validator.check_schema(SCHEMA)


def test_lambda_zero_rejected():
    data = minimal(name="nimp", **{"lambda": 0})
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.violations[0]["message"] == "λ must be nonzero"
    assert info.value.violations[0]["path"] == "protocol.lambda"


def test_site_out_of_range_names_field():
    data = minimal()
    data["model"]["N"] = 4
    data["task"]["O1"]["site"] = 5
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.kind == "dimension"
    assert info.value.violations == [{"path": "task.O1.site", "message": "site index 5 out of range for N=4 lattice"}]


def test_all_schema_violations_reported():
    data = minimal()
    data["model"]["N"] = 0
    data["protocol"]["name"] = "teleport"
    data["extra"] = 1
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    paths = {v["path"] for v in info.value.violations}
    assert {"<root>", "model.N", "protocol.name"} <= paths


def test_syntax_error_has_position():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "model": {,\n}')
    v = info.value.violations[0]
    assert info.value.kind == "syntax"
    assert (v["line"], v["column"]) == (2, 13)


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d["model"].update(params={"h": 1.0}), "model.params.h"),
        (lambda d: d["task"].update(t1=0.9), "task.t1"),
        (lambda d: d["protocol"].update(name="ancilla-free-im", theta=0.0), "protocol.theta"),
        (lambda d: d["protocol"].update(name="lambda-scan", grid=[0.1, 0.01]), "protocol.grid"),
        (lambda d: d["protocol"].update(name="simul", axis="x"), "protocol.axis"),
        (lambda d: d["model"].update(N=14), "model.N"),
    ],
)
def test_semantic_violations(mutate, path):
    data = minimal(name="nimp")
    mutate(data)
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert path in {v["path"] for v in info.value.violations}


def test_oracle_config_accepts_reversed_times():
    data = minimal()
    data["task"].update(t1=0.9, t2=0.1)
    cfg = config_from_dict(data)
    task = build_task(cfg)
    assert abs(exact_correlation(task) - exact_correlation(task.swapped()).conjugate()) < 1e-12


def test_validate_command(tmp_path, capsys):
    assert main(["validate", write(tmp_path, minimal())]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["protocol"]["lambda"] == 1e-3
    assert main(["validate", write(tmp_path, "{bad json")]) == 2
    err = json.loads(capsys.readouterr().out)["error"]
    assert err["type"] == "config-syntax"
    assert main(["validate", str(tmp_path / "missing.json")]) == 1


def test_run_oracle_n4(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "oracle_tfim4.json"), "--output-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["result"]["C"]["re"] == pytest.approx(0.18478632379705007, abs=1e-12)
    assert doc["result"]["C"]["im"] == pytest.approx(0.0, abs=1e-10)
    assert set(doc["metadata"]) >= {"seed", "lambda", "n", "version"}
    assert "wall_time_s" in doc["timing"]


def test_run_povm_check(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "povm_check.json"), "--output-dir", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "result.json").read_text())["result"]
    assert res["completeness_residual"] < 1e-11
    assert res["equivalence_residual"] < 1e-11
    assert res["passed"]


def test_run_lambda_scan_csv(tmp_path, capsys):
    data = json.loads((CONFIGS / "lambda_scan.json").read_text())
    data["protocol"].update(grid=[0.01, 0.1, 1.0], n=1000)
    assert main(["run", write(tmp_path, data), "--output-dir", str(tmp_path)]) == 0
    with open(tmp_path / "lambda_scan.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda", "abs_error", "std_error", "n", "seed"]
    assert len(rows) == 4
    assert (tmp_path / "lambda_scan.csv").read_text().splitlines()[0] == "lambda,abs_error,std_error,n,seed"


def _payload(path):
    doc = json.loads(Path(path).read_text())
    doc.pop("timing")
    return json.dumps(doc, sort_keys=True)


@pytest.mark.parametrize("name", ["nimp_tfim3.json", "simul_tfim3.json", "ancilla_free_re.json"])
def test_byte_identical_payload(tmp_path, capsys, name):
    cfg = str(CONFIGS / name)
    assert main(["run", cfg, "--output-dir", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["run", cfg, "--output-dir", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert _payload(tmp_path / "a" / "result.json") == _payload(tmp_path / "b" / "result.json")
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_seed_override_changes_sampled_values(tmp_path, capsys):
    cfg = str(CONFIGS / "nimp_tfim3.json")
    main(["run", cfg, "--output-dir", str(tmp_path / "a")])
    main(["run", cfg, "--output-dir", str(tmp_path / "b"), "--seed", "99"])
    a = json.loads((tmp_path / "a" / "result.json").read_text())
    b = json.loads((tmp_path / "b" / "result.json").read_text())
    assert b["metadata"]["seed"] == 99
    assert a["result"]["C_lambda"] == b["result"]["C_lambda"]
    assert a["result"]["C_lambda_sampled"] != b["result"]["C_lambda_sampled"]


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_example_configs_embed_oracle(tmp_path, capsys, path):
    assert main(["run", str(path), "--output-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "result.json").read_text())
    C = exact_correlation(build_task(parse_config(path.read_text())))
    ref = doc["result"]["C"] if doc["protocol"] == "oracle" else doc["oracle"]
    assert complex(ref["re"], ref["im"]) == pytest.approx(C, abs=1e-14)


def test_runtime_error_is_machine_readable(tmp_path, capsys):
    data = minimal(name="ancilla-free-re")
    data["task"]["O1"] = {"kind": "sum", "axis": "z"}
    assert main(["run", write(tmp_path, data), "--output-dir", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().out)["error"]
    assert err["type"] == "ValueError"
    assert "two distinct eigenvalues" in err["message"] or "form" in err["message"]
