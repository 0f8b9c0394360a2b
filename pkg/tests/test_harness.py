import json
import os
from pathlib import Path

import pytest

from engramlab.errors import ConfigError, UsageError
from engramlab.harness import REGISTRY, ExperimentConfig, emit_plot_data, load_config, read_table, \
    resolve_config, run, run_trials, trial_seeds
from engramlab.harness.cli import main
from engramlab.harness.experiments import capacity_proxy, mean_pairwise_cosine
from engramlab.harness.runner import MANIFEST_NAME, ResultManifest

GOLDEN = Path(__file__).parent / "golden" / "headers.json"

SMALL = {
    "spass-convergence": dict(params=dict(u=[1.0, 2.0], v_target=[1.0], kappa=[0.5])),
    "hopfield-capacity": dict(params=dict(N=[32], probe_trials=1)),
    "sdm-recall": dict(trials=3, params=dict(n=64, H=200, M=3, corruption=[0.1, 0.3])),
    "sparsity-sweep": dict(params=dict(beta=[0.0, 1.0], epochs=20, patches=100, cosine_sample=50)),
    "gating-continual": dict(trials=2, params=dict(epochs=1, hidden=16)),
    "stdp-assembly": dict(params=dict(train_ms=600.0, rest_ms=200.0, cue_ms=100.0, settle_ms=20.0,
                                      trace_every_ms=300.0)),
    "engram-lifecycle": dict(trials=5, params=dict(N=64, patterns=3)),
}


def small_config(name, out, **over):
    raw = dict(experiment=name, seed=1, output_dir=str(out), **SMALL[name])
    raw.update(over)
    return resolve_config(raw, REGISTRY)


def data_files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != MANIFEST_NAME}


def test_registry_is_complete():
    assert set(REGISTRY) == {"spass-convergence", "hopfield-capacity", "sdm-recall", "sparsity-sweep",
                             "gating-continual", "stdp-assembly", "engram-lifecycle"}
    assert set(SMALL) == set(REGISTRY)


@pytest.mark.parametrize("name", sorted(SMALL))
def test_rerun_is_byte_identical_and_headers_match_golden(name, tmp_path):
    m1 = run(small_config(name, tmp_path / "a"))
    m2 = run(small_config(name, tmp_path / "b"))
    a, b = data_files(tmp_path / "a"), data_files(tmp_path / "b")
    assert a == b and a
    assert {f["name"] for f in m1.files} == set(a)
    assert m1.files == m2.files
    golden = json.loads(GOLDEN.read_text())
    for fname, blob in a.items():
        lines = blob.decode().splitlines()
        if fname.endswith(".csv"):
            assert lines[0].startswith("# config=")
            echo = json.loads(lines[0][len("# config="):])
            assert echo["experiment"] == name and echo["params"] == m1.config["params"]
            key = fname if not fname.startswith("raster_") else "raster_*.csv"
            assert lines[1] == golden[name][key], fname
        else:
            assert json.loads(blob)["config"]["experiment"] == name


def test_trial_order_and_workers_do_not_change_outputs(tmp_path):
    cfg = small_config("engram-lifecycle", tmp_path / "a")
    run(cfg)
    run(small_config("engram-lifecycle", tmp_path / "b"), order=[3, 0, 4, 2, 1])
    assert data_files(tmp_path / "a") == data_files(tmp_path / "b")
    assert run_trials(cfg, workers=2) == run_trials(cfg)


def test_workers_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("ENGRAMLAB_WORKERS", "2")
    run(small_config("sdm-recall", tmp_path / "a"))
    monkeypatch.delenv("ENGRAMLAB_WORKERS")
    run(small_config("sdm-recall", tmp_path / "b"))
    assert data_files(tmp_path / "a") == data_files(tmp_path / "b")
    monkeypatch.setenv("ENGRAMLAB_WORKERS", "zero")
    with pytest.raises(ValueError):
        run(small_config("sdm-recall", tmp_path / "c"))


def test_trial_seeds_follow_documented_split():
    from engramlab.core import derive_seed
    cfg = ExperimentConfig("sdm-recall", seed=7, trials=3)
    assert trial_seeds(cfg) == [derive_seed(7, i) for i in range(3)]


def test_manifest_contents_and_defaults_echoed(tmp_path):
    m = run(small_config("sdm-recall", tmp_path))
    d = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert d["experiment"] == "sdm-recall" and d["version"] == "0.1.0"
    assert d["config"]["params"]["max_iters"] == 20  # default, echoed
    assert d["config"]["workers"] == 1
    assert d["seeds"] == m.seeds and len(d["seeds"]) == 3
    assert {f["name"] for f in d["files"]} == {"sdm_recall.csv", "sdm_summary.csv"}
    assert d["duration_s"] >= 0
    assert not list(tmp_path.glob(".manifest-*"))


@pytest.mark.parametrize("raw,field", [
    (dict(experiment="sdm-recall", bogus=1), "bogus"),
    (dict(experiment="sdm-recall", params=dict(nn=3)), "params.nn"),
    (dict(experiment="sdm-recall", params=dict(n="64")), "params.n"),
    (dict(experiment="sdm-recall", params=dict(n=64.0)), "params.n"),
    (dict(experiment="sdm-recall", params=dict(corruption=[0.1, "x"])), "params.corruption[1]"),
    (dict(experiment="sdm-recall", params=dict(corruption=[1.5])), "params.corruption"),
    (dict(experiment="sdm-recall", trials=0), "trials"),
    (dict(experiment="sdm-recall", seed=True), "seed"),
    (dict(experiment="stdp-assembly", params=dict(cue_fraction=1.0)), "params.cue_fraction"),
    (dict(experiment="engram-lifecycle", params=dict(fractions=[0.6, 0.2])), "params.fractions"),
    (dict(seed=1), "experiment"),
])
def test_strict_config_rejections(raw, field):
    with pytest.raises(ConfigError) as err:
        resolve_config(raw, REGISTRY)
    assert err.value.field == field


def test_unknown_experiment_is_usage_error():
    with pytest.raises(UsageError):
        resolve_config(dict(experiment="nope"), REGISTRY)


def test_int_widens_to_float():
    cfg = resolve_config(dict(experiment="spass-convergence", params=dict(gamma=2)), REGISTRY)
    assert cfg.params["gamma"] == 2.0 and isinstance(cfg.params["gamma"], float)


def test_load_config_resolves_relative_output(tmp_path):
    (tmp_path / "c.toml").write_text('experiment = "sdm-recall"\noutput_dir = "out"\n')
    cfg = load_config(tmp_path / "c.toml", REGISTRY)
    assert Path(cfg.output_dir) == (tmp_path / "out").resolve()
    (tmp_path / "bad.toml").write_text('experiment = "sdm-recall"\n[params\n')
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml", REGISTRY)


def test_emit_plot_data(tmp_path):
    m = run(small_config("hopfield-capacity", tmp_path))
    path = emit_plot_data(Path(m.path))
    rows = read_table(path)
    assert path.read_text().splitlines()[1] == "x,y,series"
    assert {r["series"] for r in rows} == {"dense", "sparse"}
    assert [r["x"] for r in rows] == ["32.0", "32.0"]
    (tmp_path / "capacity.csv").unlink()
    with pytest.raises(FileNotFoundError):
        emit_plot_data(tmp_path / MANIFEST_NAME)


def test_stdp_plot_is_modularity_trace(tmp_path):
    m = run(small_config("stdp-assembly", tmp_path))
    rows = read_table(emit_plot_data(m))
    assert [r["x"] for r in rows if r["series"].endswith(",full")] == ["0.0", "300.0", "600.0"]
    assert float(rows[0]["y"]) == pytest.approx(1.0)


def _write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, 'experiment = "engram-lifecycle"\ntrials = 2\noutput_dir = "o"\n'
                            '[params]\nN = 64\npatterns = 2\n')
    assert main(["validate", good]) == 0
    assert main(["run", good]) == 0
    assert main(["emit-plots", str(tmp_path / "o" / MANIFEST_NAME)]) == 0
    assert main(["list"]) == 0
    assert "stdp-assembly" in capsys.readouterr().out
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["run", _write(tmp_path, 'experiment = "nope"\n')]) == 2
    assert main(["validate", _write(tmp_path, 'experiment = "sdm-recall"\nextra = 1\n')]) == 3
    assert main(["run", str(tmp_path / "missing.toml")]) == 3
    assert main(["emit-plots", str(tmp_path / "nowhere" / MANIFEST_NAME)]) == 4
    runaway = _write(tmp_path, 'experiment = "stdp-assembly"\noutput_dir = "r"\n[params]\n'
                               'w_ie = 0.0\nw_ii = 0.0\nw_ee = 1.0\nbackground_rate = 20.0\n'
                               'train_ms = 300.0\n')
    assert main(["run", runaway]) == 4


def test_capacity_proxy_and_cosine():
    assert mean_pairwise_cosine([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]) == pytest.approx(
        (0 + 2 * 2 ** -0.5) / 3)
    assert capacity_proxy(0.25, 1.0, 0.2) == pytest.approx(0.6)
    assert capacity_proxy(1.0, 1.0, 0.0) == 0.0


def test_manifest_round_trip(tmp_path):
    m = run(small_config("spass-convergence", tmp_path))
    back = ResultManifest.load(m.path)
    assert back.to_dict() == m.to_dict() and back.output_dir == tmp_path
