import json

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from rydscramble import cli
from rydscramble.config import (
    PRESETS,
    ConfigError,
    RunConfig,
    config_from_dict,
    load_config,
    preset,
)


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_basis_run(tmp_path, capsys):
    cfg = write(tmp_path, "experiment: basis\ndrive: {rabi_mhz: 2.5}\ngeometry: {n_sites: 13}\n")
    assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    assert "dimension: 610" in capsys.readouterr().out
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["summary"]["dimension"] == 610
    assert man["master_seed"] == 0 and man["code_version"]


def test_missing_rabi_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "experiment: echo-otoc\ndrive: {detuning_mhz: 0.1}\n")
    assert cli.main(["run", str(cfg)]) == 2
    assert "drive.rabi_mhz" in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "experiment: basis\ndrive: {rabi_mhz: 2.5}\ngeometry: {n_site: 5}\n")
    assert cli.main(["run", str(cfg)]) == 2
    assert "geometry.n_site" in capsys.readouterr().err


def test_bad_type_and_kind():
    with pytest.raises(ConfigError) as e:
        config_from_dict({"experiment": "basis", "drive": {"rabi_mhz": "fast"}})
    assert e.value.path == "drive.rabi_mhz"
    with pytest.raises(ConfigError) as e:
        config_from_dict({"experiment": "plot", "drive": {"rabi_mhz": 1.0}})
    assert e.value.path == "experiment"


def test_runtime_error_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, "experiment: basis\ndrive: {rabi_mhz: 2.5}\ngeometry: {n_sites: 30}\n")
    assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "lattice" in err and "basis" in err


def test_unknown_preset(capsys):
    assert cli.main(["preset", "fig99"]) == 2
    err = capsys.readouterr().err
    assert all(name in err for name in PRESETS)


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_resolve(name, capsys):
    assert cli.main(["preset", name, "--emit-config"]) == 0
    text = capsys.readouterr().out
    assert config_from_dict(yaml.safe_load(text)) == preset(name)


def test_preset_values():
    a = preset("sm-fig8")
    assert a.interaction.v_nn_mhz == 120.0 and a.interaction.max_range == 1
    assert a.drive.detuning_mhz == 0.0 and a.drive.rabi_mhz == 2.5
    for name in ("fig3a", "fig3b"):
        c = preset(name)
        assert (c.geometry.n_sites, c.geometry.spacing_um, c.interaction.v_nn_mhz, c.echo.operator_site) == (13, 6.0, 12.0, 7)


def test_manifest_roundtrip_and_determinism(tmp_path):
    text = ("experiment: echo-otoc\ndrive: {rabi_mhz: 2.5}\ngeometry: {n_sites: 7}\n"
            "model: {kind: rydberg}\necho: {operator_site: 4}\ntime: {stop_us: 0.4}\n"
            "noise: {n_trajectories: 4}\nmaster_seed: 5\n")
    cfg = write(tmp_path, text)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["run", str(cfg), "--out-dir", str(out), "--threads", "1"]) == 0
        outs.append(out)
    for name in ("c_grid.csv", "f_grid.csv", "c_stderr.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    man = json.loads((outs[0] / "manifest.json").read_text())
    again = config_from_dict(man["config"])
    assert again == load_config(cfg).__class__(**{**load_config(cfg).__dict__, "output_dir": str(outs[0])})


def test_seed_flag(tmp_path):
    cfg = write(tmp_path, "experiment: basis\ndrive: {rabi_mhz: 2.5}\ngeometry: {n_sites: 4}\n")
    assert cli.main(["run", str(cfg), "--seed", "9", "--out-dir", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["master_seed"] == 9


def test_echo_outputs(tmp_path):
    cfg = write(tmp_path, "experiment: echo-otoc\ndrive: {rabi_mhz: 2.5}\n")
    assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "c_grid.csv").read_text().splitlines()
    assert rows[0].split(",")[:3] == ["site", "0", "0.02"]
    assert len(rows) == 14 and rows[7].startswith("7,")
    assert (tmp_path / "o" / "fit_linear.json").exists()


configs = st.fixed_dictionaries(
    {
        "experiment": st.sampled_from(["basis", "evolve", "echo-otoc"]),
        "drive": st.fixed_dictionaries({"rabi_mhz": st.floats(0.1, 10)}),
    },
    optional={
        "geometry": st.fixed_dictionaries({"n_sites": st.integers(7, 20), "spacing_um": st.floats(1, 30)}),
        "time": st.fixed_dictionaries({"stop_us": st.floats(0, 3), "step_us": st.floats(0.001, 0.1)}),
        "master_seed": st.integers(0, 2 ** 32),
        "mixture": st.lists(st.fixed_dictionaries({"config": st.just("rgggggg"), "probability": st.floats(0, 0.1)}),
                            max_size=2),
    },
)


@given(configs)
def test_config_roundtrip(d):
    cfg = config_from_dict(d)
    assert isinstance(cfg, RunConfig)
    assert config_from_dict(yaml.safe_load(cfg.to_yaml())) == cfg
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@given(st.text(min_size=1, max_size=10).filter(lambda k: k not in RunConfig.__dataclass_fields__))
def test_unknown_top_level_key(key):
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "basis", "drive": {"rabi_mhz": 1.0}, key: 1})
