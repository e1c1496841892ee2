import json

import numpy as np
import pytest

from conftest import TOY_COORDS, contraction_free_segments
from netcar import cli
from netcar import io as nio
from netcar.events import CountMatrix, CrashEvent
from netcar.exposure import Zone
from netcar.inference import model_spec
from netcar.network import Segment, build_lattice, connected_components
from netcar.synth import default_truth, simulate_data


def write_cfg(tmp_path, **cfg):
    p = tmp_path / f"cfg_{len(list(tmp_path.glob('cfg_*.json')))}.json"
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return str(p)


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert cli.main(["synth", "--out", str(out), "--seed", "4", "--n", "40"]) == 0
    return out


def fit_cfg(tmp_path, data, out, **chains):
    return write_cfg(tmp_path, seed=3, output_dir=str(out),
                     chains={"iterations": 240, "burn_in": 40, "thin": 2, **chains},
                     inputs={"segments": str(data / "segments.geojson"), "counts": str(data / "counts.csv"),
                             "exposure": str(data / "exposure.csv"), "covariates": str(data / "covariates.csv")})


class TestFormats:
    def test_segments_round_trip(self, tmp_path):
        segs = [Segment(i, c, "primary" if i % 2 else "a-road") for i, c in TOY_COORDS.items()]
        nio.write_segments(tmp_path / "s.geojson", segs)
        back = nio.read_segments(tmp_path / "s.geojson")
        assert [(s.id, s.polyline, s.road_class) for s in back] == [(s.id, s.polyline, s.road_class) for s in segs]

    def test_synth_round_trip(self, synth_dir):
        segs = nio.read_segments(synth_dir / "segments.geojson")
        lat = build_lattice(segs)
        truth = json.loads((synth_dir / "truth.json").read_text())
        assert truth["model"] == "F"
        counts = nio.read_counts(synth_dir / "counts.csv")
        ev = nio.read_exposure(synth_dir / "exposure.csv")
        data = simulate_data(lat, model_spec("F"), default_truth("F"), seed=4)
        assert np.array_equal(counts.Y, data.counts.Y)
        assert np.array_equal(ev.E, data.exposure.E)
        ids, cols = nio.read_covariates(synth_dir / "covariates.csv")
        assert np.array_equal(np.array(cols["x1"], dtype=float), data.covariates["x1"])

    def test_events_and_zones_round_trip(self, tmp_path):
        evs = [CrashEvent(1, 0.5, 2.25, 1, 2012), CrashEvent("b7", 1e6, -3.0, 2)]
        nio.write_events(tmp_path / "e.csv", evs)
        assert nio.read_events(tmp_path / "e.csv") == evs
        zs = [Zone(3, [(0, 0), (1, 0), (1, 1), (0, 1)])]
        nio.write_zones(tmp_path / "z.geojson", zs)
        back = nio.read_zones(tmp_path / "z.geojson")
        assert back[0].id == 3 and back[0].polygon.equals(zs[0].polygon)

    def test_counts_header(self, tmp_path):
        nio.write_counts(tmp_path / "c.csv", CountMatrix(np.array([[1, 2], [0, 5]]), np.array([10, 11])))
        first = (tmp_path / "c.csv").read_text().splitlines()[0]
        assert first.startswith("# ") and json.loads(first[2:])["version"] == nio.SCHEMA_VERSION

    def test_malformed_line_reported(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("segment_id,y1,y2\n1,0,2\n2,x,1\n")
        with pytest.raises(nio.FormatError, match=r"c.csv:3"):
            nio.read_counts(p)


class TestExitCodes:
    def test_missing_input(self, tmp_path, capsys):
        assert cli.main(["build-network", "--out", str(tmp_path)]) == 2
        assert "segments" in capsys.readouterr().err

    def test_malformed_geometry(self, tmp_path, capsys):
        p = tmp_path / "bad.geojson"
        p.write_text(json.dumps({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"id": 1}, "geometry": {"type": "Point", "coordinates": [0, 0]}}]}))
        assert cli.main(["build-network", "--segments", str(p), "--out", str(tmp_path)]) == 2
        assert "feature 0" in capsys.readouterr().err

    def test_bad_model_id(self, tmp_path, synth_dir):
        assert cli.main(["fit", "--config", fit_cfg(tmp_path, synth_dir, tmp_path / "o"), "--models", "Z"]) == 2

    def test_numeric_failure(self, tmp_path, synth_dir, monkeypatch):
        def boom(*a, **k):
            raise np.linalg.LinAlgError("not positive definite")
        monkeypatch.setattr(cli, "run_mcmc", boom)
        assert cli.main(["fit", "--config", fit_cfg(tmp_path, synth_dir, tmp_path / "o")]) == 3

    def test_missing_chains(self, tmp_path, synth_dir):
        assert cli.main(["criticize", "--config", fit_cfg(tmp_path, synth_dir, tmp_path / "empty")]) == 2


def test_flag_over_config_over_default(tmp_path):
    cfg = cli.effective_config({"chains": {"iterations": 50}, "seed": 9}, {"chains.iterations": 70, "seed": None})
    assert cfg["chains"]["iterations"] == 70 and cfg["seed"] == 9 and cfg["chains"]["thin"] == 5


def test_build_network_toy_and_islands(tmp_path):
    segs = [Segment(i, c) for i, c in TOY_COORDS.items()] + [Segment(20, [(50, 50), (60, 50)]),
                                                           Segment(21, [(60, 50), (60, 60)])]
    nio.write_segments(tmp_path / "s.geojson", segs)
    assert cli.main(["build-network", "--segments", str(tmp_path / "s.geojson"), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "removal_report.json").read_text())
    lab = connected_components(build_lattice(segs).adjacency)
    small = [s.id for s, l in zip(segs, lab.labels) if lab.component_sizes[l] < 6]
    assert rep["removed_ids"] == small == [20, 21]
    _, rows, _ = nio.read_table(tmp_path / "o" / "adjacency_matrix.csv")
    M = np.array([[int(r[str(c)]) for c in TOY_COORDS] for r in rows])
    assert np.array_equal(M, build_lattice(segs[:6]).adjacency.dense())
    man = json.loads((tmp_path / "o" / "manifest_build_network.json").read_text())
    assert man["inputs"]["segments"]["sha256"] == nio.sha256(tmp_path / "s.geojson")


def test_fit_criticize_pipeline(tmp_path, synth_dir):
    cfg = fit_cfg(tmp_path, synth_dir, tmp_path / "o1")
    assert cli.main(["fit", "--config", cfg, "--models", "A,F"]) == 0
    o1 = tmp_path / "o1"
    summ = json.loads((o1 / "summary_F.json").read_text())
    for name in ("sigma2_theta1", "sigma2_theta2", "rho_theta", "rho", "sigma2_phi1", "sigma2_phi2", "rho_phi"):
        assert name in summ["hyperparameters"]
        assert {"mean", "sd", "q0.025", "q0.5", "q0.975"} <= set(summ["hyperparameters"][name])
    _, rows, _ = nio.read_table(o1 / "comparison.csv")
    assert len(rows) == 2 and float(rows[0]["DIC"]) <= float(rows[1]["DIC"])
    # same seed, bit-identical outputs
    cfg2 = fit_cfg(tmp_path, synth_dir, tmp_path / "o2")
    assert cli.main(["fit", "--config", cfg2, "--models", "A,F"]) == 0
    for name in ("chains_A.csv", "chains_F.csv", "comparison.csv", "rates_F.geojson"):
        assert (o1 / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    # criticism reads the fitted draws
    assert cli.main(["criticize", "--config", cfg, "--model", "F", "--replicates", "50"]) == 0
    _, ba, _ = nio.read_table(o1 / "balanced_accuracy.csv")
    assert len(ba) == 2 * 6 * 50
    assert all(0 <= float(r["balanced_accuracy"]) <= 1 for r in ba)
    assert cli.main(["compare", "--config", cfg, "--models", "A,F"]) == 0


def test_maup_identity_and_path_merge(tmp_path):
    lat = build_lattice(contraction_free_segments(5))
    data = simulate_data(lat, model_spec("F"), default_truth("F"), seed=2)
    d = tmp_path / "d"
    d.mkdir()
    nio.write_segments(d / "s.geojson", lat.segments)
    nio.write_counts(d / "c.csv", data.counts)
    nio.write_exposure(d / "e.csv", data.exposure)
    nio.write_covariates(d / "x.csv", lat.ids, data.covariates)
    cfg = write_cfg(tmp_path, seed=1, output_dir=str(tmp_path / "o"),
                    chains={"iterations": 240, "burn_in": 40, "thin": 2},
                    inputs={"segments": str(d / "s.geojson"), "counts": str(d / "c.csv"),
                            "exposure": str(d / "e.csv"), "covariates": str(d / "x.csv")})
    assert cli.main(["maup", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "o" / "maup_report.json").read_text())
    assert rep["identity"] and min(rep["spearman"]) == 1.0
    assert rep["count_totals"]["original"] == rep["count_totals"]["contracted"]
    assert rep["exposure_totals"]["original"] == rep["exposure_totals"]["contracted"]
