import csv
import io
import itertools
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucya.cli import main
from ucya.harness import (PROBE_STAGES, RECORD_COLUMNS, SUMMARY_COLUMNS, ExperimentSpec,
                          complexity_probe, explicit_scene, format_probe, is_failure,
                          loglog_slope, parse_config, run_experiment, spec_from_mapping,
                          summarize, trial_rmse, write_records, write_summary)
from ucya.io import dumps, loads, read_tensor, write_tensor
from ucya.pipeline import error_matrix, match_paths, wrapped_diff

from conftest import crandn

CONFIG = """
# desk run, explicit two-path scene
m_v = 8
snr_db = 20
seed = 3
azimuth_deg = 30, 200
elevation_deg = 60, 110
delay_ns = 2.5, 6
trials = 2
"""


class TestConfig:
    def test_parse(self):
        m = parse_config(CONFIG)
        assert m["m_v"] == 8 and m["snr_db"] == 20.0
        assert m["azimuth_deg"] == (30.0, 200.0)

    @pytest.mark.parametrize("text, match", [
        ("colour = red", "unknown key"),
        ("m_v = 8\nm_v = 9", "duplicate"),
        ("m_v = eight", "bad value"),
        ("m_v 8", "key = value"),
        ("refine = maybe", "bad value"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ValueError, match=match):
            parse_config(text)

    def test_spec_from_mapping(self):
        spec = spec_from_mapping(parse_config(CONFIG))
        assert spec.scene.k == 2 and spec.k == 2
        assert spec.cfg.seed == 3 and spec.trials == 2
        assert np.isclose(spec.scene.paths[1].delay_s, 6e-9)

    def test_bandwidth_follows_subcarriers(self):
        spec = spec_from_mapping(parse_config("m_f = 10\nsubcarrier_spacing_hz = 1e7"))
        assert spec.cfg.bandwidth_hz == 1e8

    def test_k_must_agree_with_scene(self):
        with pytest.raises(ValueError, match="k disagrees"):
            spec_from_mapping(parse_config(CONFIG + "k = 3\n"))

    def test_spec_invariants(self):
        with pytest.raises(ValueError):
            ExperimentSpec(trials=0)
        with pytest.raises(ValueError):
            ExperimentSpec(sweep_values=())
        with pytest.raises(ValueError):
            ExperimentSpec(sweep_axis="m_h")

    def test_explicit_scene_errors(self, cfg):
        with pytest.raises(ValueError):
            explicit_scene(cfg, (1.0, 2.0), (60.0,), (1.0, 2.0))
        with pytest.raises(ValueError):
            explicit_scene(cfg, (1.0,), (60.0,), (1e3,))

    def test_sweep_axes(self):
        spec = ExperimentSpec()
        assert spec.at(-5).cfg.snr_db == -5.0
        assert ExperimentSpec(sweep_axis="m_v").at(12).geometry().m_v == 12
        assert ExperimentSpec(sweep_axis="k").at(2).k == 2
        assert ExperimentSpec(sweep_axis="p_max").at(10).receiver().bf.p_max == 10


@pytest.fixture(scope="module")
def small():
    return ExperimentSpec(sweep_values=(math.inf, 0.0), trials=3)


class TestExperiment:
    def test_single_noiseless_trial(self):
        records, summary = run_experiment(ExperimentSpec(trials=1))
        (r,) = records
        assert not r.failed and summary[0]["failure_rate"] == 0
        rmse = np.degrees(np.sqrt(np.mean(r.errors[:, 0] ** 2)))
        assert summary[0]["rmse_theta_deg"] == rmse
        assert np.all(r.errors >= 0)

    def test_aggregation_matches_records(self, small):
        records, summary = run_experiment(small)
        for row in summary:
            rec = [r for r in records if r.sweep_value == row["sweep_value"] and not r.failed]
            err = np.concatenate([r.errors for r in rec])
            assert np.isclose(row["rmse_tau_ns"], 1e9 * np.sqrt(np.mean(err[:, 2] ** 2)))
            assert row["trials"] == 3

    def test_failed_trials_are_excluded(self, small):
        records, _ = run_experiment(small)
        bad = records[0].__class__(**{**records[0].__dict__, "failed": True,
                                      "errors": np.full_like(records[0].errors, np.nan)})
        out = summarize([bad] + records[1:3], [math.inf])
        assert out[0]["failure_rate"] == pytest.approx(1 / 3)
        assert np.isfinite(out[0]["rmse_theta_deg"])
        assert np.isnan(trial_rmse([bad])).all()

    def test_common_scenes_across_points(self, small):
        records, _ = run_experiment(small)
        a = [r for r in records if r.sweep_value == math.inf]
        b = [r for r in records if r.sweep_value == 0.0]
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.theta_true, rb.theta_true)

    def test_csv_columns_and_determinism(self, small, tmp_path):
        texts = []
        for i in range(2):
            records, summary = run_experiment(small)
            write_records(records, tmp_path / f"r{i}.csv")
            write_summary(summary, tmp_path / f"s{i}.csv")
            texts.append(((tmp_path / f"r{i}.csv").read_bytes(), (tmp_path / f"s{i}.csv").read_bytes()))
        assert texts[0] == texts[1]
        rows = list(csv.reader(io.StringIO(texts[0][0].decode())))
        assert tuple(rows[0]) == RECORD_COLUMNS
        assert len(rows) == 1 + 2 * 3 * 3
        assert tuple(next(csv.reader(io.StringIO(texts[0][1].decode())))) == SUMMARY_COLUMNS

    def test_failure_rule(self):
        class R:
            eigenvalue_moduli = np.array([1.0, 0.1])
        assert is_failure(R())
        R.eigenvalue_moduli = np.array([1.0, 4.9])
        assert not is_failure(R())


class TestMatching:
    def test_wrapped_azimuth(self):
        assert np.isclose(wrapped_diff(0.1, 2 * np.pi - 0.1, 2 * np.pi), 0.2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_assignment_is_optimal(self, k, seed):
        r = np.random.default_rng(seed)
        th, ph, tau = r.uniform(0.3, 2.8, k), r.uniform(0, 2 * np.pi, k), r.uniform(0, 1e-8, k)
        th_h, ph_h, tau_h = r.uniform(0.3, 2.8, k), r.uniform(0, 2 * np.pi, k), r.uniform(0, 1e-8, k)

        class Scene:
            elevations, azimuths, delays = th, ph, tau
        Scene.k = k

        class Res:
            elevations, azimuths, delays = th_h, ph_h, tau_h
        order, _ = match_paths(Scene, Res, 1e-8)
        assert sorted(order) == list(range(k))
        cost, _ = error_matrix(th, ph, tau, th_h, ph_h, tau_h, 1e-8)
        best = min(sum(cost[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))
        assert sum(cost[i, order[i]] for i in range(k)) <= best + 1e-12


class TestTensorDump:
    def test_round_trip(self, rng, tmp_path):
        t = crandn(rng, 3, 4, 2, 5)
        write_tensor(tmp_path / "y.cyla", t)
        np.testing.assert_array_equal(read_tensor(tmp_path / "y.cyla"), t)

    def test_header_and_order(self):
        t = np.arange(6).reshape(2, 3) + 1j
        buf = dumps(t)
        assert buf[:4] == b"CYLA"
        assert struct.unpack_from("<IIII", buf, 4) == (1, 2, 2, 3)
        vals = struct.unpack_from("<4d", buf, 20)
        # first index fastest: t[0,0], t[1,0]
        assert vals == (0.0, 1.0, 3.0, 1.0)

    def test_rejects_corrupt(self, rng):
        buf = dumps(crandn(rng, 2, 2))
        with pytest.raises(ValueError):
            loads(b"XXXX" + buf[4:])
        with pytest.raises(ValueError):
            loads(buf[:-8])
        with pytest.raises(ValueError):
            loads(buf[:4] + struct.pack("<I", 9) + buf[8:])


class TestProbe:
    def test_stage_rows(self):
        rows = complexity_probe([(4, 6, 6, 8, 2)], repeats=1)
        text = format_probe(rows)
        for name in PROBE_STAGES:
            assert name in text
        r = rows[0]
        assert r["total_s"] == r["decomposition_s"] + r["estimation_s"]

    def test_doubling_p_costs_more(self):
        rows = complexity_probe([(8, 8, 10, 64, 3), (16, 8, 10, 64, 3)], repeats=5)
        assert rows[1]["total_s"] > rows[0]["total_s"]

    def test_slope(self):
        assert np.isclose(loglog_slope([1, 2, 4], [3, 6, 12]), 1.0)


class TestCli:
    def test_synth_and_estimate(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(CONFIG)
        out = io.StringIO()
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "y.cyla")], out) == 0
        y = read_tensor(tmp_path / "y.cyla")
        assert y.shape == (8, 25, 8, 16)
        out = io.StringIO()
        assert main(["estimate", "--config", str(cfg), "--input", str(tmp_path / "y.cyla")], out) == 0
        lines = out.getvalue().splitlines()
        assert lines[0].startswith("estimate") and len(lines) == 4
        est = sorted(float(l.split()[1]) for l in lines[2:])
        np.testing.assert_allclose(est, [60, 110], atol=0.5)

    def test_estimate_fresh_scene(self):
        out = io.StringIO()
        assert main(["estimate", "--seed", "4"], out) == 0
        assert "truth" in out.getvalue() and "estimate" in out.getvalue()

    def test_sweep(self, tmp_path):
        cfg = tmp_path / "sweep.cfg"
        cfg.write_text("sweep_values = inf, 10\ntrials = 2\nk = 2\n")
        out = io.StringIO()
        rc = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "r.csv"),
                   "--summary", str(tmp_path / "s.csv")], out)
        assert rc == 0
        assert len((tmp_path / "r.csv").read_text().splitlines()) == 1 + 2 * 2 * 2
        assert len((tmp_path / "s.csv").read_text().splitlines()) == 3

    def test_probe(self):
        out = io.StringIO()
        assert main(["probe", "--sizes", "4,6,6,8,2;4,6,6,16,2", "--repeats", "1"], out) == 0
        assert "log-log slope" in out.getvalue()

    def test_bad_config_is_reported(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = red\n")
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 2
        assert "unknown key" in capsys.readouterr().err
