import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from nonlocal_design import ConfigurationError, ExperimentRecord, SolverOptions, emit_records, parse_config
from nonlocal_design.cli import main
from nonlocal_design.records import HEADER, design_checksum, read_csv, render

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = {
    "domain": {"kind": "interval", "bounds": [[0, 1]]},
    "cells": 48, "s": 0.5, "p": 2, "alpha": 0.25,
}


def _record(**kw):
    base = dict(command="optimize-hard", s=0.5, p=2.0, alpha=0.3, sigma=None, N=10,
                lambda_=2.1704009387424184, seminorm_term=1 / 3, penalty_term=0.0, iterations=4,
                el_residual=1.5e-13, design_checksum=design_checksum(np.arange(3.0)), seed=7,
                wall_time_ms=12.25)
    base.update(kw)
    return ExperimentRecord(**base)


def _strip_time(text):
    rows = list(csv.reader(text.splitlines()))
    col = rows[0].index("wall_time_ms")
    return [r[:col] + r[col + 1:] for r in rows]


# ---------------------------------------------------------------- config


def test_minimal_config_fills_defaults():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.cells == (48,) and cfg.s == 0.5 and cfg.alpha == 0.25
    assert cfg.solver == SolverOptions()
    assert cfg.format == "csv"


@pytest.mark.parametrize("key, value, message", [
    ("s", 1.2, "s must satisfy 0 < s < 1"),
    ("s", 0.0, "s must satisfy 0 < s < 1"),
    ("p", 1.0, "p must satisfy 1 < p"),
    ("alpha", 1.0, "alpha must satisfy 0 < alpha < 1"),
    ("sigma", -1, "sigma must satisfy sigma >= 0"),
    ("cells", 1, "cells must be integers >= 2"),
    ("cells", 2.5, "cells must be an integer"),
    ("s_values", [0.5, 1.0], "every entry of s_values"),
    ("sigma_values", [10, 1], "strictly increasing"),
    ("quadrature", "simpson", "quadrature must be one of"),
    ("s", "half", "s must be a number"),
    ("p", True, "p must be a number"),
])
def test_range_errors(key, value, message):
    doc = dict(MINIMAL, **{key: value})
    with pytest.raises(ConfigurationError, match=message):
        parse_config(json.dumps(doc))


def test_duplicate_key():
    with pytest.raises(ConfigurationError, match="duplicate key 's'"):
        parse_config('{"s": 0.5, "s": 0.6}')


def test_unknown_keys_named():
    with pytest.raises(ConfigurationError, match="'tolerance'"):
        parse_config(json.dumps(dict(MINIMAL, tolerance=1e-3)))
    with pytest.raises(ConfigurationError, match="'tol'.*solver"):
        parse_config(json.dumps(dict(MINIMAL, solver={"tol": 1})))


def test_not_an_object():
    with pytest.raises(ConfigurationError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        parse_config("{s: 0.5}")


def test_solver_section():
    cfg = parse_config(json.dumps(dict(MINIMAL, solver={"tol_lambda": 1e-11, "seed": 9, "p2_mode": "iterative"})))
    assert cfg.solver.tol_lambda == 1e-11 and cfg.solver.seed == 9 and cfg.solver.p2_mode == "iterative"
    with pytest.raises(ConfigurationError, match="solver"):
        parse_config(json.dumps(dict(MINIMAL, solver={"max_iterations": 0})))


def test_rectangle_domain_and_cells():
    doc = dict(MINIMAL, domain={"kind": "rectangle", "bounds": [[0, 2], [0, 1]]}, cells=[8, 4])
    cfg = parse_config(json.dumps(doc))
    assert cfg.domain.dim == 2 and cfg.cells == (8, 4)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_reference_configs_parse(path):
    assert parse_config(path.read_text()).command is not None


# ---------------------------------------------------------------- records


def test_header_matches_record_fields():
    assert HEADER == ("command", "s", "p", "alpha", "sigma", "N", "lambda", "seminorm_term",
                      "penalty_term", "iterations", "el_residual", "design_checksum", "seed",
                      "wall_time_ms")


def test_empty_csv_is_header_only(tmp_path):
    out = tmp_path / "r.csv"
    emit_records([], out)
    assert out.read_text() == ",".join(HEADER) + "\n"


def test_csv_round_trip_bit_exact(tmp_path):
    rec = _record(sigma=1e-300, seminorm_term=math.pi, el_residual=5e-324)
    out = tmp_path / "r.csv"
    emit_records([rec], out)
    assert len(out.read_text().splitlines()) == 2
    assert read_csv(out) == [rec]


def test_seventeen_digits():
    line = render([_record(lambda_=0.1)]).splitlines()[1]
    assert "0.10000000000000001" in line


def test_jsonlines(tmp_path):
    out = tmp_path / "r.jsonl"
    emit_records([_record(), _record(seed=8)], out, "jsonlines")
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    obj = json.loads(lines[0])
    assert tuple(obj) == HEADER
    assert obj["lambda"] == 2.1704009387424184 and obj["sigma"] is None


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_records([], tmp_path / "missing" / "r.csv")


def test_checksum_rounding():
    a = np.array([0.0, 1.0, 0.5])
    assert design_checksum(a) == design_checksum(a + 1e-14)
    assert design_checksum(a) == design_checksum(np.array([-0.0, 1.0, 0.5]))
    assert design_checksum(a) != design_checksum(np.array([1.0, 0.0, 0.5]))


# ---------------------------------------------------------------- cli


def test_constant_k_gamma(capsys):
    assert main(["constant-k", "--n", "1", "--p", "2", "--method", "gamma"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.0, abs=1e-12)


def test_constant_k_both(capsys):
    assert main(["constant-k", "--n", "2", "--p", "3", "--method", "both"]) == 0
    out = capsys.readouterr().out.split()
    assert out[0] == "gamma" and out[2] == "sphere" and out[4] == "difference"
    assert float(out[5]) <= 1e-10


def test_constant_k_sphere_unsupported(capsys):
    assert main(["constant-k", "--n", "5", "--p", "3", "--method", "sphere"]) == 1
    assert "use method='gamma'" in capsys.readouterr().err


def test_oracle_over_budget(capsys):
    code = main(["oracle", "--s", "0.5", "--cells", "40", "--alpha", "0.5"])
    assert code == 1
    assert str(math.comb(40, 20)) in capsys.readouterr().err


def test_optimize_hard_matches_oracle(tmp_path):
    cfg = CONFIGS / "hard_n10.json"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["optimize-hard", "--config", str(cfg), "--out", str(a)]) == 0
    oracle_cfg = tmp_path / "oracle.json"
    doc = json.loads(cfg.read_text())
    doc["command"] = "oracle"
    oracle_cfg.write_text(json.dumps(doc))
    assert main(["oracle", "--config", str(oracle_cfg), "--out", str(b)]) == 0
    ra, rb = read_csv(a)[0], read_csv(b)[0]
    assert ra.lambda_ == pytest.approx(rb.lambda_, abs=1e-8)
    assert ra.design_checksum == rb.design_checksum


def test_validation_exit_code(capsys):
    assert main(["solve-hard", "--s", "1.2", "--obstacle", "0"]) == 1
    assert "s must satisfy 0 < s < 1" in capsys.readouterr().err


def test_missing_required_flag(capsys):
    assert main(["optimize-hard", "--s", "0.5"]) == 1
    assert "--alpha" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 1


def test_missing_config_is_io_error(tmp_path):
    assert main(["optimize-hard", "--config", str(tmp_path / "none.json")]) == 3


def test_unwritable_output_is_io_error(tmp_path):
    out = tmp_path / "missing" / "r.csv"
    assert main(["solve-hard", "--s", "0.5", "--cells", "4", "--obstacle", "0", "--out", str(out)]) == 3


def test_nonconvergence_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cells": 12, "s": 0.5, "p": 3, "obstacle": [0, 1, 2],
                               "solver": {"max_iterations": 2}}))
    assert main(["solve-hard", "--config", str(cfg)]) == 2


def test_command_mismatch(tmp_path, capsys):
    assert main(["oracle", "--config", str(CONFIGS / "hard_n10.json")]) == 1
    assert "optimize-hard" in capsys.readouterr().err


def test_bad_obstacle_index(capsys):
    assert main(["solve-hard", "--s", "0.5", "--cells", "4", "--obstacle", "9"]) == 1


def test_solve_hard_two_cells(capsys):
    assert main(["solve-hard", "--s", "0.5", "--cells", "2", "--obstacle", "0", "--format", "jsonlines"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["lambda"] == pytest.approx(2.0, abs=1e-12)
    assert obj["N"] == 2 and obj["sigma"] is None


def test_solve_soft_with_potential(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cells": 4, "s": 0.5, "p": 2, "sigma": 7, "potential": [1, 1, 1, 1]}))
    assert main(["solve-soft", "--config", str(cfg), "--format", "jsonlines"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["lambda"] == pytest.approx(7.0, rel=1e-10)
    assert obj["penalty_term"] == pytest.approx(7.0, rel=1e-10)


def test_seed_override_recorded(capsys):
    assert main(["optimize-soft", "--s", "0.5", "--cells", "8", "--alpha", "0.25", "--sigma", "20",
                 "--seed", "42", "--format", "jsonlines"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 42


def test_continuation_rows(capsys):
    assert main(["continuation", "--s", "0.5", "--cells", "12", "--alpha", "0.25",
                 "--sigma-values", "1,100,10000"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [float(r["sigma"]) for r in rows] == [1.0, 100.0, 10000.0]
    lams = [float(r["lambda"]) for r in rows]
    assert lams == sorted(lams)


def test_bbm_check_rows(capsys):
    assert main(["bbm-check", "--cells", "64", "--s-values", "0.5,0.9"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 2 and float(rows[1]["lambda"]) > float(rows[0]["lambda"])


@pytest.mark.parametrize("name", ["hard_n10.json", "soft_n10.json", "continuation_n24.json"])
def test_deterministic_output(name, tmp_path):
    cfg = CONFIGS / name
    command = json.loads(cfg.read_text())["command"]
    texts = []
    for k in range(2):
        out = tmp_path / f"{k}.csv"
        assert main([command, "--config", str(cfg), "--threads", "1", "--out", str(out)]) == 0
        texts.append(out.read_text())
    assert _strip_time(texts[0]) == _strip_time(texts[1])
