import csv
import json
import math

import pytest

from pathgibbs import cli, emit
from pathgibbs.interactions import RejectedParameters

MINIMAL = 'subcommand = "spectrum"\nseed = 0\nkernel = "mollifier_product"\n'


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- parsing


def test_minimal_config_parses():
    cfg = cli.parse_config(MINIMAL)
    assert cfg.subcommand == "spectrum" and cfg.kernel == "mollifier_product" and cfg.seed == 0
    assert cfg.grid["N"] == cli.DEFAULTS["grid"]["N"]
    assert cfg.build_kernel().beta > 0


def test_inadmissible_kernel_names_inequality():
    text = 'subcommand = "clt"\nseed = 0\n[kernel]\nkind = "poly_bounded"\ntheta = 1.5\n'
    with pytest.raises(RejectedParameters, match="theta"):
        cli.parse_config(text)


@pytest.mark.parametrize("text, key", [
    (MINIMAL + "seed = 1\n", "seed"),
    (MINIMAL + "[grid]\ndt = 0.1\ndt = 0.2\n", "dt"),
])
def test_duplicate_key_named(text, key):
    with pytest.raises(cli.ConfigError, match=f"duplicate key '{key}'"):
        cli.parse_config(text)


def test_unknown_key_named_with_line():
    with pytest.raises(cli.ConfigError, match=r"line 5: unknown key 'step'"):
        cli.parse_config(MINIMAL + "[grid]\nstep = 0.1\n")


def test_missing_seed_and_kernel():
    with pytest.raises(cli.ConfigError, match="seed"):
        cli.parse_config('subcommand = "spectrum"\nkernel = "mollifier_product"\n')
    with pytest.raises(cli.ConfigError, match="kernel"):
        cli.parse_config('subcommand = "spectrum"\nseed = 0\n')
    with pytest.raises(cli.ConfigError, match="nonempty"):
        cli.parse_config(MINIMAL + "[sweep]\nbeta = []\n")


def test_seed_override_and_simplex_needs_none():
    assert cli.parse_config(MINIMAL, overrides={"seed": 7}).seed == 7
    cfg = cli.parse_config("", "verify", {"verify": {"lemma": "simplex", "a": 0.25, "n": 1}})
    assert cfg.seed is None
    with pytest.raises(cli.ConfigError, match="seed"):
        cli.parse_config("", "verify", {"verify": {"lemma": "pinsker"}})


def test_multiline_array_is_not_a_duplicate():
    cfg = cli.parse_config(MINIMAL + "[sweep]\nbeta = [\n  0.0,\n  1.0,\n]\n")
    assert cfg.sweep["beta"] == [0.0, 1.0]


# -- runs


def test_rejected_kernel_exit_status(tmp_path, capsys):
    p = _write(tmp_path, 'seed = 0\n[kernel]\nkind = "poly_bounded"\ntheta = 1.5\n')
    assert cli.main(["clt", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "theta" in capsys.readouterr().err


def test_missing_seed_exit_status(tmp_path, capsys):
    p = _write(tmp_path, 'kernel = "mollifier_product"\n')
    assert cli.main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err


CLT_ZERO = """
kernel = "poly_bounded"
[grid]
L = 1.0
dt = 0.125
N = 200
T = 4.0
[mcmc]
samples = 2000
thin = 2
burn_in = 50
block_length = 8
[sweep]
beta = [0.0]
"""


@pytest.fixture(scope="module")
def clt_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("clt")
    cfg = base / "clt.toml"
    cfg.write_text(CLT_ZERO)
    status = cli.main(["clt", "--config", str(cfg), "--seed", "3", "--out", str(base / "a")])
    return status, base, cfg


def test_clt_beta_zero(clt_run):
    status, base, _ = clt_run
    assert status == 0
    out = base / "a"
    man = json.loads((out / "manifest.json").read_text())
    assert man["pass"] and man["seed"] == 3 and man["config"]["subcommand"] == "clt"
    assert man["version"] and "endpoints.csv" in man["outputs"]
    with open(out / "endpoints.csv") as f:
        ends = list(csv.DictReader(f))
    assert len(ends) >= 2000
    row = json.loads((out / "clt.json").read_text())["runs"][0]
    assert abs(row["mcmc_variance"] - 1.0) <= 3 * row["mcmc_stderr"]


def test_same_run_is_byte_identical(clt_run):
    _, base, cfg = clt_run
    assert cli.main(["clt", "--config", str(cfg), "--seed", "3", "--out", str(base / "b")]) == 0
    for f in sorted((base / "a").iterdir()):
        assert f.read_bytes() == (base / "b" / f.name).read_bytes(), f.name


def test_csv_column_count(clt_run):
    _, base, _ = clt_run
    with open(base / "a" / "endpoints.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["beta", "index", "w0", "w1", "w2"]
    assert {len(r) for r in rows} == {5}


def test_spectrum_beta_zero(tmp_path):
    text = 'seed = 1\nkernel = "compact_coulomb"\n[grid]\nN = 120\ndt = 0.125\n[sweep]\nbeta = [0.0]\n'
    p = _write(tmp_path, text)
    assert cli.main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    run = json.loads((tmp_path / "o" / "spectrum.json").read_text())["runs"][0]
    assert run["lambda0"] == pytest.approx(1.0, abs=1e-10)


def test_verify_simplex_without_seed(tmp_path):
    assert cli.main(["verify", "simplex", "--a", "0.25", "--n", "1", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "verify_simplex.json").read_text())
    assert rec["pass"] and rec["margin"] <= 1e-10 and rec["seed"] is None


def test_lemma_only_for_verify(tmp_path):
    assert cli.main(["clt", "simplex", "--out", str(tmp_path)]) == 2


# -- emission


def test_json_round_trip_at_twelve_digits():
    vals = [math.pi, -1 / 3, 6.02214076e23, 1e-300, 0.1 + 0.2]
    back = json.loads(emit.dumps_json({"v": vals}))["v"]
    for a, b in zip(vals, back):
        assert float(f"{a:.12g}") == b
        assert b == pytest.approx(a, rel=1e-11)
    assert emit.dumps_json(json.loads(emit.dumps_json({"v": vals}))) == emit.dumps_json({"v": vals})


def test_json_keys_sorted_and_nonfinite():
    text = emit.dumps_json({"b": 1, "a": {"z": 2, "y": float("nan")}})
    assert text.index('"a"') < text.index('"b"') and text.index('"y"') < text.index('"z"')
    assert emit.fmt(float("inf")) == "inf" and emit.fmt(float("nan")) == "nan"


def test_csv_schema_and_booleans():
    text = emit.dumps_csv([{"x": 1.0, "ok": True}, {"x": 1 / 3, "ok": False}], ["x", "ok"])
    lines = text.splitlines()
    assert lines[0] == "x,ok" and lines[1] == "1.0,true" and lines[2] == "0.333333333333,false"


def test_emit_formats(tmp_path):
    paths = emit.emit({"rows": [{"a": 1.5}], "meta": {"k": 2}}, tmp_path, "csv")
    assert sorted(p.name for p in paths) == ["meta.json", "rows.csv"]
