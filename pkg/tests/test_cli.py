import json

import numpy as np
import pytest

from koopflow.cli import RunConfig, main, pair_modes
from koopflow.data import CityRecord, load_csv, write_csv
from koopflow.dmd import SpectralDecomposition
from koopflow.synthetic import synthetic_city

DT = 3600.0


@pytest.fixture
def city_dir(tmp_path):
    """Two clean sources and a noisier target, hourly for four days."""
    rng = np.random.default_rng(7)
    cities = []
    for name, snr, t in (("alpha", 1e4, 3), ("beta", 1e4, 4), ("gamma", 20.0, 5)):
        noisy, _ = synthetic_city(rng, (24.0, 12.0), t, 4, snr, dt=DT, name=name)
        write_csv(noisy, tmp_path / f"{name}.csv")
        cities.append({"name": name, "csv_path": f"{name}.csv", "role": "target" if name == "gamma" else "source"})
    cfg = {"cities": cities, "delay_h": 24, "epsilon": 1e-2, "horizon_steps": 24, "output_dir": str(tmp_path / "out")}
    (tmp_path / "config.json").write_text(json.dumps(cfg))
    return tmp_path


def run(city_dir, *argv, env=None):
    return main([argv[0], "--config", str(city_dir / "config.json"), *argv[1:]], environ=env or {})


def out(city_dir, name):
    return city_dir / "out" / name


def test_full_pipeline(city_dir):
    assert run(city_dir, "ingest") == 0
    assert json.loads(out(city_dir, "ingest.json").read_text())["gamma"]["detectors"] == 5
    assert run(city_dir, "decompose") == 0
    for name in ("alpha", "beta", "gamma"):
        d = SpectralDecomposition.from_json(out(city_dir, f"{name}.spectrum.json").read_text())
        assert d.size > 0
        assert out(city_dir, f"{name}.eigs.svg").read_text().startswith("<svg")
        header = out(city_dir, f"{name}.singvecs.csv").read_text().splitlines()[0]
        assert header == "index,v1,v2,v3,v4"
    assert out(city_dir, "eigs_overlay.svg").exists()

    assert run(city_dir, "shared") == 0
    shared = json.loads(out(city_dir, "shared.json").read_text())
    assert len(shared["eigenvalues"]) >= 2
    assert run(city_dir, "export-periods") == 0
    periods = [float(x) for x in out(city_dir, "periods.csv").read_text().split()[1:]]
    assert any(abs(p - 24) < 0.5 for p in periods)

    assert run(city_dir, "transfer") == 0
    assert out(city_dir, "gamma.trspectrum.json").exists() and out(city_dir, "gamma.treigs.svg").exists()

    for method in ("hdmd", "trhdmd", "fourier_lr"):
        assert run(city_dir, "forecast", "--method", method) == 0
        m = json.loads(out(city_dir, "metrics.json").read_text())
        assert m["method"] == method and m["evaluated_steps"] == 24
        assert {"re", "mae", "cs", "dtw", "out_of_sample_mse"} <= set(m)
        fc = load_csv(out(city_dir, "forecast.csv"))
        assert fc.flows.shape == (5, 24)
        assert fc.timestamps[0] == 72 * DT
    assert "in_sample_mse" in m
    # the forecast CSV scores the same through evaluate
    assert run(city_dir, "evaluate", "--pred", str(out(city_dir, "forecast.csv")),
               "--truth", str(city_dir / "gamma.csv"), "--label", "lr") == 0
    ev = json.loads(out(city_dir, "evaluation.json").read_text())
    assert ev["re"] == pytest.approx(m["re"], rel=1e-12) and ev["evaluated_steps"] == 24

    manifest = json.loads(out(city_dir, "run_manifest.json").read_text())
    for cmd in ("ingest", "decompose", "shared", "export-periods", "transfer", "forecast", "evaluate"):
        assert {"config", "inputs", "outputs", "warnings", "versions"} <= set(manifest[cmd])
    assert manifest["forecast"]["config"]["delay_h"] == 24
    replay = RunConfig.from_dict(manifest["forecast"]["config"])
    assert replay.epsilon == 1e-2


def test_forecast_deterministic(city_dir):
    names = ("forecast.csv", "metrics.json", "modes.svg", "run_manifest.json")
    assert run(city_dir, "forecast") == 0
    first = {n: out(city_dir, n).read_bytes() for n in names}
    assert run(city_dir, "forecast") == 0
    assert {n: out(city_dir, n).read_bytes() for n in names} == first


def test_jobs_do_not_change_outputs(city_dir, tmp_path):
    assert run(city_dir, "decompose", "--output-dir", str(tmp_path / "j1")) == 0
    assert run(city_dir, "decompose", "--output-dir", str(tmp_path / "j3"), "--jobs", "3") == 0
    for name in ("alpha", "beta", "gamma"):
        f = f"{name}.spectrum.json"
        assert (tmp_path / "j1" / f).read_bytes() == (tmp_path / "j3" / f).read_bytes()


def test_horizon_zero(city_dir):
    assert run(city_dir, "forecast", "--horizon", "0") == 0
    lines = out(city_dir, "forecast.csv").read_text().splitlines()
    # detector rows remain, with no timestamp columns
    assert lines[0] == "detector_id" and all("," not in line for line in lines)
    assert json.loads(out(city_dir, "metrics.json").read_text())["evaluated_steps"] == 0


def test_output_dir_precedence(city_dir, tmp_path):
    env_dir = tmp_path / "env"
    assert run(city_dir, "ingest", env={"KOOPMAN_OUT": str(env_dir)}) == 0
    assert (env_dir / "ingest.json").exists() and not out(city_dir, "ingest.json").exists()
    cli_dir = tmp_path / "cli"
    assert run(city_dir, "ingest", "--output-dir", str(cli_dir), env={"KOOPMAN_OUT": str(env_dir)}) == 0
    assert (cli_dir / "ingest.json").exists()


def test_cli_overrides_config(city_dir):
    assert run(city_dir, "forecast", "--delay", "12", "--horizon", "6") == 0
    m = json.loads(out(city_dir, "run_manifest.json").read_text())["forecast"]["config"]
    assert (m["delay_h"], m["horizon_steps"]) == (12, 6)


def test_missing_shared_is_exit_4(city_dir):
    assert run(city_dir, "forecast", "--method", "trhdmd") == 4
    assert run(city_dir, "transfer") == 4
    assert run(city_dir, "forecast", "--method", "fourier_lr") == 4


def test_from_dir(city_dir, tmp_path):
    assert run(city_dir, "decompose") == 0
    assert run(city_dir, "shared") == 0
    other = tmp_path / "elsewhere"
    assert run(city_dir, "transfer", "--output-dir", str(other)) == 4
    assert run(city_dir, "transfer", "--output-dir", str(other), "--from-dir", str(city_dir / "out")) == 0
    assert (other / "gamma.trspectrum.json").exists()


def test_data_error_names_city(city_dir, capsys):
    (city_dir / "beta.csv").write_text("detector_id,0,3600\nd,1,oops\n")
    assert run(city_dir, "ingest") == 2
    assert "beta" in capsys.readouterr().err


def test_numeric_error_exit_3(tmp_path, capsys):
    rec = CityRecord("flat", ("a", "b"), DT * np.arange(48), np.full((2, 48), 10.0))
    write_csv(rec, tmp_path / "flat.csv")
    code = main(["decompose", "--city-csv", f"flat={tmp_path / 'flat.csv'}", "--delay", "4",
                 "--output-dir", str(tmp_path / "o")], environ={})
    assert code == 3
    assert "flat" in capsys.readouterr().err


def test_missing_config_and_bad_keys(tmp_path):
    assert main(["ingest", "--config", str(tmp_path / "nope.json")], environ={}) == 4
    (tmp_path / "bad.json").write_text(json.dumps({"cities": [], "colour": 1}))
    assert main(["ingest", "--config", str(tmp_path / "bad.json")], environ={}) == 2


def test_white_noise_h1_warns(tmp_path):
    rng = np.random.default_rng(0)
    rec = CityRecord("noise", ("a", "b", "c"), DT * np.arange(200), 100 + rng.normal(size=(3, 200)))
    write_csv(rec, tmp_path / "noise.csv")
    o = tmp_path / "o"
    assert main(["decompose", "--city-csv", f"noise={tmp_path / 'noise.csv'}", "--delay", "1",
                 "--output-dir", str(o)], environ={}) == 0
    d = SpectralDecomposition.from_json((o / "noise.spectrum.json").read_text())
    assert d.size <= 3
    warnings = json.loads((o / "run_manifest.json").read_text())["decompose"]["warnings"]
    assert any("no coherent" in w for w in warnings)


def test_shared_disjoint_and_single_source(city_dir):
    assert run(city_dir, "decompose") == 0
    assert run(city_dir, "shared", "--epsilon", "1e-12") == 0
    assert json.loads(out(city_dir, "shared.json").read_text())["eigenvalues"] == []
    manifest = json.loads(out(city_dir, "run_manifest.json").read_text())
    assert any("no eigenvalues shared" in w for w in manifest["shared"]["warnings"])
    assert run(city_dir, "forecast", "--method", "trhdmd") == 2

    # a single source shares its whole spectrum
    cfg = json.loads((city_dir / "config.json").read_text())
    cfg["cities"] = [c for c in cfg["cities"] if c["name"] != "beta"]
    (city_dir / "one.json").write_text(json.dumps(cfg))
    assert main(["shared", "--config", str(city_dir / "one.json")], environ={}) == 0
    alpha = json.loads(out(city_dir, "alpha.spectrum.json").read_text())
    assert json.loads(out(city_dir, "shared.json").read_text())["eigenvalues"] == alpha["eigenvalues"]


def test_compare_modes_identical_and_shifted(city_dir):
    assert run(city_dir, "compare-modes", "--city", "alpha", "--window-a", "0:72", "--window-b", "0:72") == 0
    res = json.loads(out(city_dir, "compare_modes.json").read_text())
    assert res["pairs"] and res["unmatched"] == []
    for p in res["pairs"]:
        assert p["amplitude_ratio"] == pytest.approx(1.0, abs=1e-12)
        assert p["phase_shift"] == pytest.approx(0.0, abs=1e-12)
    assert out(city_dir, "compare_modes.svg").exists()

    assert run(city_dir, "compare-modes", "--city", "alpha", "--window-a", "0:72", "--window-b", "6:78") == 0
    res = json.loads(out(city_dir, "compare_modes.json").read_text())
    day = next(p for p in res["pairs"] if abs(p["cycle_hours_a"] - 24) < 0.5)
    assert day["phase_shift"] == pytest.approx(2 * np.pi * 6 / 24, abs=0.05)
    assert run(city_dir, "compare-modes", "--city", "alpha", "--window-a", "0:500", "--window-b", "0:72") == 2


def test_pair_modes_unmatched():
    a = SpectralDecomposition(np.array([np.exp(2j * np.pi / 24)]), np.ones((1, 1), complex), np.ones(1, complex), 1, dt=DT)
    b = SpectralDecomposition(np.array([np.exp(2j * np.pi / 10)]), np.ones((1, 1), complex), np.ones(1, complex), 1, dt=DT)
    pairs, unmatched = pair_modes(a, b)
    assert pairs == [] and len(unmatched) == 2


def test_synth(tmp_path):
    o = tmp_path / "s"
    assert main(["synth", "--output-dir", str(o), "--sources", "2", "--target-detectors", "4", "--seed", "3"],
                environ={}) == 0
    cfg = json.loads((o / "config.json").read_text())
    assert [c["role"] for c in cfg["cities"]].count("target") == 1
    assert len(cfg["cities"]) == 3
    for c in cfg["cities"]:
        assert (o / c["csv_path"]).exists()
    assert load_csv(o / "target.clean.csv").flows.shape[0] == 4
    assert main(["ingest", "--config", str(o / "config.json")], environ={}) == 0
