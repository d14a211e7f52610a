import json
from pathlib import Path

import pytest

from nlslab.cli import main, run_experiment
from nlslab.config import DEFAULT_TOLERANCES, SUITES, dump_config, load_config, parse_config
from nlslab.errors import ConfigError
from nlslab.grid import Gaussian, SelfSimilarPower

BASE = """\
params: {n: 1, rho: 1.0, lam: 1.0}
grid: {dim: 1, half_width: 32.0, points_per_axis: 512}
mesh: {T: 1.0, M: 16}
datum: {kind: Gaussian, amplitude: 0.1, width: 1.0}
suites: [local]
"""

FAST_DISPERSIVE = """\
params: {n: 1, rho: 1.0}
grid: {dim: 1, half_width: 512.0, points_per_axis: 4096}
datum: {kind: Gaussian, amplitude: 1.0, width: 1.0}
suites: [dispersive]
options:
  dispersive: {p_list: [1.5], t_list: [1.0, 3.0, 10.0, 20.0], constant_window: [5.0, 20.0]}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_and_round_trip():
    cfg = parse_config(BASE)
    assert cfg.suites == ("local",)
    assert cfg.tolerances == DEFAULT_TOLERANCES
    assert isinstance(cfg.datum, Gaussian) and cfg.mesh.M == 16
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert parse_config(dump_config(again)) == cfg


def test_round_trip_of_singular_datum_and_complex_coupling():
    text = """\
params: {n: 1, rho: 3.0, lam: [1.0, -0.5]}
grid: {dim: 1, half_width: 16.0, points_per_axis: 256, staggered: true}
datum: {kind: SelfSimilarPower, amplitude: 0.02, cell_average: true}
suites: [selfsimilar, global]
tolerances: {selfsimilar_tol: 0.02}
"""
    cfg = parse_config(text)
    assert isinstance(cfg.datum, SelfSimilarPower) and cfg.cell_average
    assert cfg.params.lam == 1.0 - 0.5j
    assert cfg.tolerances["selfsimilar_tol"] == 0.02
    assert parse_config(dump_config(cfg)) == cfg


def test_unknown_suite_names_key_and_line():
    text = BASE.replace("suites: [local]", "suites:\n  - local\n  - blowup")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert "blowup" in str(err.value)
    assert err.value.key == "suites.1"
    assert err.value.line == 7
    assert str(err.value).startswith("line 7:")


def test_unknown_key_and_bad_values_are_anchored():
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("lam: 1.0", "lam: 1.0, mass: 2"))
    assert err.value.line == 1 and "mass" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("points_per_axis: 512", "points_per_axis: 500"))
    assert err.value.line == 2
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("M: 16", "M: -3"))
    assert err.value.line == 3


def test_empty_and_missing():
    with pytest.raises(ConfigError):
        parse_config("")
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("suites: [local]", "suites: []"))
    assert err.value.line == 5
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("suites: [local]\n", ""))
    with pytest.raises(ConfigError):
        parse_config("params: [1, 2")


def test_regime_mismatch_is_rejected_before_compute():
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("suites: [local]", "suites: [global]"))
    assert err.value.line == 5
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("rho: 1.0", "rho: 3.0"))


def test_selfsimilar_needs_homogeneous_datum():
    text = BASE.replace("rho: 1.0", "rho: 3.0").replace("suites: [local]", "suites: [selfsimilar]")
    with pytest.raises(ConfigError):
        parse_config(text)


def test_inadmissible_decay_exponent_rejected():
    text = BASE.replace("rho: 1.0", "rho: 3.0").replace("suites: [local]", "suites: [decay]")
    parse_config(text)
    with pytest.raises(ConfigError) as err:
        parse_config(text + "options:\n  decay: {h_list: [0.0, 0.5]}\n")
    assert "h_list.1" in str(err.value)


def test_validate_and_list_exit_codes(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, BASE))]) == 0
    assert main(["validate", str(_write(tmp_path, BASE.replace("[local]", "[blowup]"), "bad.yaml"))]) == 2
    assert "blowup" in capsys.readouterr().err
    assert main(["list-suites"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in SUITES)


def test_config_error_writes_nothing(tmp_path):
    out = tmp_path / "never"
    text = BASE.replace("suites: [local]", "suites: []") + f"output_dir: {out}\n"
    assert main(["run", str(_write(tmp_path, text))]) == 2
    assert not out.exists()


def test_run_writes_artifacts_and_honours_overrides(tmp_path, monkeypatch):
    path = _write(tmp_path, FAST_DISPERSIVE + f"output_dir: {tmp_path / 'from_config'}\n")
    monkeypatch.setenv("NLSLAB_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert main(["run", str(path)]) == 0
    root = tmp_path / "from_env"
    assert not (tmp_path / "from_config").exists()
    summary = json.loads((root / "summary.json").read_text())
    assert summary["passed"] and summary["failures"] == []
    meta = json.loads((root / "metadata.json").read_text())
    assert "summary.json" in meta["files"]
    assert load_config(root / "config.yaml") == load_config(path)
    csvs = list((root / "series").glob("*.csv"))
    assert csvs and csvs[0].read_text().startswith("t,value,weight_exponent")
    assert main(["run", str(path), "-o", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "summary.json").exists()


def test_partial_failure_keeps_earlier_artifacts(tmp_path):
    # dispersive on a small box wraps and fails; the local suite before it still reports
    text = BASE.replace("suites: [local]", "suites: [local, dispersive]")
    cfg = parse_config(text)
    passed, root = run_experiment(cfg, tmp_path / "out")
    assert not passed
    summary = json.loads((root / "summary.json").read_text())
    assert [f["suite"] for f in summary["failures"]] == ["dispersive"]
    assert summary["failures"][0]["error"] == "InvalidWindowError"
    assert [c["suite"] for c in summary["checks"]] == ["local"]
    assert list((root / "reports").glob("local_*.json"))


@pytest.mark.parametrize("name", ["local", "global", "selfsimilar"])
def test_shipped_configs_validate(name):
    path = Path(__file__).resolve().parents[1] / "configs" / f"{name}.yaml"
    assert main(["validate", str(path)]) == 0
