import json
import os

import pytest
import yaml

from invdp import __version__
from invdp.cli import main, read_csv
from invdp.config import RunConfig, dump_config, load_config
from invdp.errors import ConfigError


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_defaults_and_digest():
    a, b = load_config(), RunConfig()
    assert a.digest() == b.digest()
    assert load_config(overrides={"workers": 4, "paths.output_dir": "x"}).digest() == a.digest()
    assert load_config(overrides={"seed": 1}).digest() != a.digest()


def test_dump_round_trip(tmp_path):
    cfg = load_config(overrides={"seed": 3, "chain.n_stores": 5})
    path = tmp_path / "d.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(str(path)).digest() == cfg.digest()


@pytest.mark.parametrize("data, match", [
    ({"model": {"beta": 1.2}}, "model.beta"),
    ({"model": {"betta": 0.9}}, "model.betta"),
    ({"chain": {"n_stores": "four"}}, "chain.n_stores"),
    ({"solver": {"method": "magic"}}, "solver.method"),
    ({"counterfactual": {"shutdown": ["q"]}}, "counterfactual.shutdown"),
    ({"schema_version": "0"}, "schema_version"),
])
def test_config_errors(tmp_path, data, match):
    with pytest.raises(ConfigError, match=match):
        load_config(_write(tmp_path, data))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.yaml"))


def test_cli_bad_beta_exits_1(tmp_path, capsys):
    code = main(["simulate", "--config", _write(tmp_path, {"model": {"beta": 1.2}}),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert "model.beta" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_unknown_key_exits_1(tmp_path, capsys):
    code = main(["simulate", "--config", _write(tmp_path, {"chain": {"n_shops": 2}})])
    assert code == 1
    assert "chain.n_shops" in capsys.readouterr().err


def test_cli_missing_input_exits_1(tmp_path, capsys):
    assert main(["fit-demand", "--out", str(tmp_path / "empty")]) == 1
    assert "panels.csv" in capsys.readouterr().err


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_cli_simulate_artifacts(tmp_path):
    cfg = _write(tmp_path, {"seed": 2, "chain": {"n_stores": 2, "n_products": 2, "n_days": 60}})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest_simulate.json").read_text())
    assert set(manifest["files"]) <= set(os.listdir(out))
    assert "config_sha256=" in (out / "panels.csv").read_text().splitlines()[0]
    _, cols = read_csv(str(out / "panels.csv"))
    assert len(cols["sales"]) == 2 * 2 * 60
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".invdp-stage")]
