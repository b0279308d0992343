import json

import pytest

from springverb import ConfigException, MrstftConfig, StftConfig, load_run_config


def write(path, data):
    path.write_text(json.dumps(data))
    return path


def test_flags_override_the_file(tmp_path):
    path = write(tmp_path / "run.json", {
        "model": {"kind": "tcn", "channels": 8},
        "train": {"max_epochs": 5, "lr": 0.001},
        "paths": {"out_dir": "runs/from-file"},
    })
    run = load_run_config(path, model="gcn", max_epochs=2, out_dir="runs/flag")
    assert run.model.kind == "gcn"
    assert run.model.channels == 8
    assert run.model.stacks_per_block == 4
    assert run.train.max_epochs == 2 and run.train.lr == 0.001
    assert run.paths.out_dir == "runs/flag"


def test_defaults_without_a_file():
    run = load_run_config(model="lstm", seed=7)
    assert run.model.hidden_size == 64
    assert run.train.seed == 7
    assert run.loss == MrstftConfig()
    assert run.paths.out_dir == "runs/default"


def test_loss_section(tmp_path):
    path = write(tmp_path / "run.json", {"model": {"kind": "gcn"},
                                         "loss": {"resolutions": [512], "alpha": 0.5}})
    run = load_run_config(path)
    assert run.loss.resolutions == (StftConfig.from_fft(512),)
    assert run.loss.alpha == 0.5


def test_round_trip(tmp_path):
    run = load_run_config(model="wavenet", batch_size=8, dry_dir="d", wet_dir="w")
    run.save(tmp_path / "saved.json")
    assert load_run_config(tmp_path / "saved.json") == run


@pytest.mark.parametrize("data, message", [
    ({"model": {"kind": "gcn"}, "optim": {}}, "Unknown config sections"),
    ({"model": {"kind": "gcn"}, "train": {"momentum": 0.9}}, "Unknown train config keys"),
    ({"model": {"kind": "gcn"}, "paths": {"cache": "x"}}, "Unknown paths keys"),
    ({"model": {"kind": "gcn", "depth": 3}}, "depth"),
    ({"model": {"kind": "gcn"}, "loss": {"beta": 1}}, "Unknown loss config keys"),
    ({"model": {"kind": "gcn", "channels": 0}}, "channels"),
    ({"model": {"kind": "transformer"}}, "Unknown model kind"),
    ({"train": {"lr": 0.1}}, "No model kind"),
])
def test_invalid_configs(tmp_path, data, message):
    with pytest.raises(ConfigException, match=message):
        load_run_config(write(tmp_path / "run.json", data))


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigException, match="Cannot read config"):
        load_run_config(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigException, match="Cannot read config"):
        load_run_config(tmp_path / "broken.json")
    with pytest.raises(ConfigException, match="top level"):
        load_run_config(write(tmp_path / "list.json", [1, 2]))
