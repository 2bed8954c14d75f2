import json

import numpy as np
import pytest

from ofdmwin import __version__
from ofdmwin.cli import EXIT_ERROR, EXIT_NO_PACKETS, EXIT_OK, main
from ofdmwin.estimator import EstimatorConfig
from ofdmwin.experiments import (
    CANCEL_SWEEP_COLUMNS,
    WINDOW_SWEEP_COLUMNS,
    NoPacketsFound,
    SweepConfig,
    make_recording,
    read_csv,
    run_cancellation_sweep,
    run_ota,
    run_window_error_sweep,
)
from ofdmwin.iq import IqRecording, load_iq, save_iq
from ofdmwin.modem import OfdmConfig


def header(path):
    with open(path, encoding="utf-8") as fh:
        return fh.readline().strip(), fh.readline().strip()


class TestSweepConfig:
    def test_desk_defaults(self):
        s = SweepConfig.preset("desk")
        assert s.packets_per_point == 50 and len(s.snr_grid_db) == 3 and len(s.transition_times_s) == 3

    def test_full_scale_preset(self):
        s = SweepConfig.preset("paper")
        assert s.packets_per_point == 500 and s.payload_bytes == 4000
        assert min(s.transition_times_s) == 100e-9 and max(s.transition_times_s) == 1e-6

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            SweepConfig.preset("lab")

    @pytest.mark.parametrize("bad", [dict(snr_grid_db=[]), dict(packets_per_point=0), dict(profile="lte")])
    def test_invariants(self, bad):
        with pytest.raises(ValueError):
            SweepConfig(**bad)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError):
            SweepConfig.from_dict({"snr": 3})

    def test_hash_ignores_output_location(self):
        a = SweepConfig(output_dir="x", workers=1)
        b = SweepConfig(output_dir="y", workers=4)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != SweepConfig(seed=1).config_hash()


class TestSweeps:
    def test_window_sweep(self, tmp_path):
        sweep = SweepConfig(snr_grid_db=[float("inf"), 20.0, 30.0], packets_per_point=2)
        path = tmp_path / "w.csv"
        rows = run_window_error_sweep(sweep, path)
        assert len(rows) == 3
        meta, cols = header(path)
        assert meta == f"# ofdmwin={__version__} sweep=window config_sha256={sweep.config_hash()}"
        assert cols.split(",") == WINDOW_SWEEP_COLUMNS
        assert len(read_csv(path)) == 3
        assert rows[0]["mean_rms_error"] < 1e-2
        assert rows[0]["mean_rms_error"] < rows[2]["mean_rms_error"] < rows[1]["mean_rms_error"]

    def test_cancel_sweep(self, tmp_path):
        sweep = SweepConfig(snr_grid_db=[30.0], transition_times_s=[0.0, 1e-6], packets_per_point=2,
                            payload_bytes=1000)
        path, packets = tmp_path / "c.csv", tmp_path / "p.csv"
        rows = run_cancellation_sweep(sweep, path, packets)
        assert [r["transition_time_ns"] for r in rows] == [0.0, 1000.0]
        assert header(path)[1].split(",") == CANCEL_SWEEP_COLUMNS
        assert len(read_csv(packets)) == 2 * 2 * 2
        assert rows[1]["improvement_db"] > 3
        for r in rows:
            assert r["c_minus_snr_without_db"] < 0 and r["c_minus_snr_with_db"] < 0

    def test_workers_do_not_change_results(self, tmp_path):
        base = dict(snr_grid_db=[25.0], transition_times_s=[5e-7], packets_per_point=2, payload_bytes=500)
        run_cancellation_sweep(SweepConfig(**base, workers=1), tmp_path / "a.csv")
        run_cancellation_sweep(SweepConfig(**base, workers=2), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestOta:
    def recording(self, snr_db=30.0, n_packets=3, seed=0):
        cfg = OfdmConfig.ieee80211g("QAM64")
        stream, meta = make_recording(cfg, n_packets, 40, 5e-7, snr_db, seed=seed, channel_profile="flat")
        return cfg, stream, meta

    def test_file_matches_memory(self, tmp_path):
        cfg, stream, meta = self.recording()
        path = tmp_path / "r.cf32"
        save_iq(stream, path, metadata=meta)
        est = EstimatorConfig()
        from_file = run_ota(load_iq(path), cfg, est, 40)
        quantized = stream.astype(np.complex64).astype(np.complex128)
        in_memory = run_ota(IqRecording(quantized, cfg.sample_rate_hz), cfg, est, 40)
        assert from_file["packets"] == in_memory["packets"]
        assert from_file["summary"] == in_memory["summary"]

    def test_loopback_improves(self, tmp_path):
        cfg, stream, meta = self.recording()
        result = run_ota(IqRecording(stream, cfg.sample_rate_hz), cfg, EstimatorConfig(), 40, tmp_path)
        assert result["summary"]["n_packets"] == 3
        assert result["summary"]["mean_improvement_db"] > 0
        for name in ("ota_packets.csv", "ota_summary.csv", "ota_psd_0.csv"):
            assert (tmp_path / name).exists()
        assert [r["start_index"] for r in result["packets"][::2]] == meta["packet_starts"]

    def test_no_packets(self):
        rng = np.random.default_rng(0)
        noise = rng.standard_normal(20000) + 1j * rng.standard_normal(20000)
        cfg = OfdmConfig.ieee80211g()
        with pytest.raises(NoPacketsFound):
            run_ota(IqRecording(noise, cfg.sample_rate_hz), cfg, EstimatorConfig(), 40)

    def test_rate_mismatch(self):
        cfg, stream, _ = self.recording(n_packets=1)
        with pytest.raises(ValueError):
            run_ota(IqRecording(stream, 10e6), cfg, EstimatorConfig(), 40)


class TestCli:
    def test_gen_ota_psd(self, tmp_path, capsys):
        rec = tmp_path / "cap.cf32"
        assert main(["gen-iq", str(rec), "--n-packets", "2", "--n-symbols", "30", "--seed", "3"]) == EXIT_OK
        assert json.loads((tmp_path / "cap.cf32.json").read_text())["n_symbols"] == 30
        out = tmp_path / "ota"
        assert main(["ota", str(rec), "--out-dir", str(out)]) == EXIT_OK
        assert len(read_csv(out / "ota_packets.csv")) == 4
        assert main(["psd", str(rec), "--fft-size", "64", "-o", str(tmp_path / "p.csv")]) == EXIT_OK
        assert len(read_csv(tmp_path / "p.csv")) == 64
        assert "improvement=" in capsys.readouterr().out

    def test_ci16(self, tmp_path):
        rec = tmp_path / "cap.ci16"
        assert main(["gen-iq", str(rec), "--format", "ci16le", "--n-packets", "1", "--n-symbols", "20"]) == EXIT_OK
        assert main(["ota", str(rec), "--format", "ci16le", "--out-dir", str(tmp_path)]) == EXIT_OK

    def test_no_packets_exit_code(self, tmp_path):
        rng = np.random.default_rng(1)
        path = tmp_path / "noise.cf32"
        save_iq(0.1 * (rng.standard_normal(5000) + 1j * rng.standard_normal(5000)), path)
        assert main(["ota", str(path), "--n-symbols", "10", "--out-dir", str(tmp_path)]) == EXIT_NO_PACKETS

    def test_corrupt_file_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.cf32"
        path.write_bytes(b"\0" * 6)
        assert main(["ota", str(path), "--n-symbols", "10"]) == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_missing_symbol_count(self, tmp_path):
        path = tmp_path / "x.cf32"
        save_iq(np.ones(100), path)
        assert main(["ota", str(path)]) == EXIT_ERROR

    def test_window_sweep_config_and_flags(self, tmp_path):
        cfg_file = tmp_path / "sweep.json"
        cfg_file.write_text(json.dumps({"packets_per_point": 1, "snr_grid_db": [20.0], "seed": 5}))
        out = tmp_path / "o"
        assert main(["window-sweep", "--config", str(cfg_file), "--snr-grid", "25,inf",
                     "--out-dir", str(out)]) == EXIT_OK
        rows = read_csv(out / "window_sweep.csv")
        assert [r["snr_db"] for r in rows] == ["25.0", "inf"]
        assert rows[0]["n_packets"] == "1"

    def test_cancel_sweep_cli(self, tmp_path):
        out = tmp_path / "c"
        argv = ["cancel-sweep", "--packets", "1", "--snr-grid", "30", "--transition-times-ns", "100",
                "--out-dir", str(out)]
        assert main(argv) == EXIT_OK
        assert (out / "cancel_sweep.csv").exists() and (out / "cancel_sweep_packets.csv").exists()

    def test_bad_config_key(self, tmp_path):
        cfg_file = tmp_path / "bad.json"
        cfg_file.write_text(json.dumps({"packets": 3}))
        assert main(["window-sweep", "--config", str(cfg_file), "--out-dir", str(tmp_path)]) == EXIT_ERROR
