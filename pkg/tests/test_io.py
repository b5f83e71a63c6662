import json

import numpy as np
import pytest

from budget_ewm import ConfigError, InvalidInputError, enumerate_grid, moment_table
from budget_ewm.config import grid_from_config, load_config
from budget_ewm.io import (
    curves_csv,
    dumps_json,
    moment_table_dict,
    read_moment_table,
    read_raw_csv,
    read_scores_csv,
    scores_csv,
)
from budget_ewm.scoring import ScoredSample

HEADER = "y,c,m,d,income,group"


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_read_raw_with_confounders(tmp_path):
    p = write(tmp_path, "y,c,m,d,income,group,v_size,v_wave\n1,7000,1,1,80,4,2,a\n0,0,0,0,120,0,1,b\n")
    raw = read_raw_csv(p, n_groups=3)
    assert raw.group.tolist() == [2, 0]  # top bucket
    assert raw.v.tolist() == ["2|a", "1|b"]
    assert raw.c.tolist() == [7000.0, 0.0]


def test_read_raw_without_confounders(tmp_path):
    raw = read_raw_csv(write(tmp_path, HEADER + "\n1,0,0,1,10,0\n"))
    assert raw.v.tolist() == ["0"]


@pytest.mark.parametrize("row,msg", [
    ("1,0,0,2,10,0", "row 3: column 'd'"),
    ("1,,0,1,10,0", "row 3: missing value in column 'c'"),
    ("1,0,1,0,10,0", "row 3: m=1 requires d=1"),
    ("1,5,0,0,10,0", "row 3: c must be 0"),
    ("1,0,0,1,-3,0", "row 3: income"),
    ("1,0,0,1,10,1.5", "row 3: group"),
    ("1,\"1,000\",0,1,10,0", "row 3: column 'c' is not a number"),
    ("1,0,0,1,10", "row 3: wrong number of fields"),
])
def test_raw_row_errors(tmp_path, row, msg):
    p = write(tmp_path, HEADER + "\n1,0,0,1,10,0\n" + row + "\n")
    with pytest.raises(InvalidInputError, match=msg):
        read_raw_csv(p)


def test_raw_missing_columns(tmp_path):
    with pytest.raises(InvalidInputError, match="missing columns"):
        read_raw_csv(write(tmp_path, "y,c,m,d,income\n1,0,0,1,10\n"))
    with pytest.raises(ConfigError):
        read_raw_csv(tmp_path / "absent.csv")


def test_scores_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    s = ScoredSample(rng.normal(size=50), rng.normal(size=50) * 1e4, rng.uniform(0, 500, 50), rng.integers(0, 3, 50))
    p = write(tmp_path, scores_csv(s), "scores.csv")
    back = read_scores_csv(p)
    for col in ("gamma_star", "r_star", "income", "group"):
        assert np.array_equal(getattr(s, col), getattr(back, col))


def test_curves_csv_columns():
    s = ScoredSample([1.0, 2.0], [3.0, 4.0], [10.0, 20.0], [0, 1])
    text = curves_csv(moment_table(s, enumerate_grid([[0, 10], [20]])))
    lines = text.splitlines()
    assert lines[0] == "threshold_0,threshold_1,w_hat,b_hat,sigma_b"
    assert lines[2].startswith("10,20,1.5,3.5,")


def test_json_writer():
    text = dumps_json({"b": 0.1, "a": [1, 2.5, None, True], "c": {"x": np.float64(1 / 3)}})
    data = json.loads(text)
    assert list(data) == ["b", "a", "c"]
    assert data["c"]["x"] == 1 / 3
    assert "0.10000000000000001" in text
    with pytest.raises(InvalidInputError):
        dumps_json({"x": float("nan")})


def test_moment_table_file_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = ScoredSample(rng.normal(size=30), rng.normal(size=30), rng.uniform(0, 10, 30), rng.integers(0, 2, 30))
    t = moment_table(s, enumerate_grid([[0, 3, 7], [0, 5]]))
    p = write(tmp_path, dumps_json(moment_table_dict(t)), "m.json")
    back = read_moment_table(p)
    assert np.array_equal(back.cov_b, t.cov_b)
    assert np.array_equal(back.sigma_b, t.sigma_b)
    assert back.n == 30


def test_config_defaults_and_file(tmp_path):
    cfg = load_config()
    assert len(grid_from_config(cfg)) == 1331
    p = write(tmp_path, '[grid]\nn_groups = 1\ncutoffs = [[0, 1, 2]]\n[rules]\nalpha = 0.1\n', "c.toml")
    cfg = load_config(p, {"rules": {"k": 2.0}})
    assert cfg["rules"]["alpha"] == 0.1 and cfg["rules"]["k"] == 2.0
    assert len(grid_from_config(cfg)) == 3


@pytest.mark.parametrize("text,field", [
    ("[rules]\nalpha = 0.7\n", "rules.alpha"),
    ("[rules]\nbogus = 1\n", "rules.bogus"),
    ("[nope]\n", "nope"),
    ("[scoring]\nmode = 'x'\n", "scoring.mode"),
    ("[scoring]\npropensity = {a = 1.0}\n", "scoring.propensity.a"),
    ("[grid]\nn_groups = 2\ncutoffs = [[0, 1]]\n", "grid.cutoffs"),
    ("[grid]\nn_groups = 1\ncutoffs = [[1, 0]]\n", "grid.cutoffs"),
    ("[paths]\ninput = 'missing.csv'\n", "paths.input"),
    ("[simulate]\nrules = ['foo']\n", "simulate.rules"),
    ("[rules\n", "c.toml"),
])
def test_config_errors_name_field(tmp_path, text, field):
    p = write(tmp_path, text, "c.toml")
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_config(p)
