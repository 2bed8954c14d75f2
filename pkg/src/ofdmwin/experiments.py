"""Synthetic sweeps and the recorded-IQ pipeline.

Every packet draws its payload, channel and carrier offset from
``default_rng([seed, packet_index])``, so the same packets (and the same noise
shape, rescaled) recur at every grid point. Results therefore depend only on
the configuration, never on worker scheduling.
"""
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .canceller import SignalCanceller, cancellation_improvement
from .dsp import psd
from .estimator import EstimatorConfig
from .impairments import CfoModel, add_awgn, apply_cfo, apply_channel, random_channel
from .modem import OfdmConfig, generate_preamble, modulate
from .sync import ChannelEstimate, detect_packet, estimate_cfo, estimate_snr
from .window import apply_window, raised_cosine_window, rectangular_window

log = logging.getLogger(__name__)

PROFILES = {"80211g": OfdmConfig.ieee80211g}

# fields that do not change results and are left out of the config hash
_NON_RESULT_FIELDS = ("output_dir", "workers")


class NoPacketsFound(RuntimeError):
    pass


def _floats(values):
    return [float(v) for v in values]


@dataclass
class SweepConfig:
    snr_grid_db: list = field(default_factory=lambda: [20.0, 25.0, 30.0])
    transition_times_s: list = field(default_factory=lambda: [100e-9, 500e-9, 1e-6])
    packets_per_point: int = 50
    payload_bytes: int = 4000
    seed: int = 0
    profile: str = "80211g"
    constellation: str = "QAM64"
    channel_profile: str = "exponential_decay"
    rms_delay_taps: float = 1.0
    max_cfo: float = 0.01
    step_size: float = 0.01
    epochs: int = 20
    window_sweep_symbols: int = 148
    window_sweep_transition_s: float = 500e-9
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        self.snr_grid_db = _floats(self.snr_grid_db)
        self.transition_times_s = _floats(self.transition_times_s)
        if not self.snr_grid_db or not self.transition_times_s:
            raise ValueError("SNR and transition-time grids must be non-empty")
        if self.packets_per_point < 1:
            raise ValueError("packets_per_point must be >= 1")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown numerology profile {self.profile!r}")

    @classmethod
    def preset(cls, name, **overrides):
        if name == "desk":
            base = {}
        elif name == "paper":
            base = dict(
                snr_grid_db=[20.0, 22.0, 24.0, 26.0, 28.0, 30.0],
                transition_times_s=[100e-9, 200e-9, 400e-9, 600e-9, 800e-9, 1e-6],
                packets_per_point=500,
            )
        else:
            raise ValueError(f"unknown preset {name!r}; expected 'desk' or 'paper'")
        base.update(overrides)
        return cls.from_dict(base)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def ofdm_config(self):
        return PROFILES[self.profile](constellation=self.constellation)

    def estimator_config(self, circular=False):
        return EstimatorConfig(self.step_size, self.epochs, "rectangular", circular)

    def result_dict(self):
        d = asdict(self)
        for k in _NON_RESULT_FIELDS:
            d.pop(k)
        return d

    def config_hash(self):
        blob = json.dumps(self.result_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, meta=None):
    """UTF-8 CSV: an optional ``#`` metadata line, the header, then rows."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _sweep_meta(sweep, kind):
    return {"ofdmwin": __version__, "sweep": kind, "config_sha256": sweep.config_hash()}


def transmit_window(transition_time_s, cfg):
    """Raised-cosine window, or no windowing for a zero transition time."""
    if transition_time_s <= 0:
        return rectangular_window(cfg)
    return raised_cosine_window(transition_time_s, cfg)


@dataclass(eq=False)
class SimulatedFrame:
    rx: np.ndarray
    noise: np.ndarray
    packet: object
    window: object
    channel: object
    cfo: CfoModel
    bits: np.ndarray


def simulate_frame(cfg, bits, window, channel, cfo, snr_db, noise_rng, circular=False):
    """Preamble followed by the windowed payload, through channel, CFO and noise.

    The noise level is set against the power of the whole impaired frame.
    """
    pkt = modulate(bits, cfg)
    pre = generate_preamble(cfg)
    tx = np.concatenate([pre.samples, apply_window(pkt, window, circular=circular)])
    y = apply_cfo(apply_channel(tx, channel), cfo)
    rx, noise = add_awgn(y, snr_db, rng=noise_rng, return_noise=True)
    return SimulatedFrame(rx, noise, pkt, window, channel, cfo, np.asarray(bits))


def _packet_draws(sweep, cfg, packet_index, n_bits):
    rng = np.random.default_rng([sweep.seed, packet_index])
    bits = rng.integers(0, 2, n_bits, dtype=np.uint8)
    channel = random_channel(sweep.channel_profile, sweep.rms_delay_taps, n_taps=cfg.l, rng=rng)
    cfo = CfoModel(rng.uniform(-sweep.max_cfo, sweep.max_cfo), rng.uniform(-np.pi, np.pi))
    noise_seed = rng.integers(0, 2**63)
    return bits, channel, cfo, noise_seed


def _window_job(args):
    sweep, snr_db, packet_index = args
    cfg = sweep.ofdm_config()
    truth = transmit_window(sweep.window_sweep_transition_s, cfg)
    n_bits = sweep.window_sweep_symbols * cfg.bits_per_ofdm_symbol
    bits, channel, _, noise_seed = _packet_draws(sweep, cfg, packet_index, n_bits)
    frame = simulate_frame(cfg, bits, truth, channel, CfoModel(), snr_db, np.random.default_rng(noise_seed))
    canc = SignalCanceller(cfg, sweep.window_sweep_symbols, True, sweep.step_size, sweep.epochs,
                           cfo_refinement=False)
    canc.fit(frame.rx, channel=ChannelEstimate.from_taps(channel, cfg), cfo=CfoModel(), truth=truth)
    ber = float(np.mean(canc.bits_[: bits.size] != bits))
    return canc.trace_.rms_error[-1], ber


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def run_window_error_sweep(sweep, path=None):
    """Window RMS error against SNR with a perfect channel estimate.

    One row per SNR grid point: ``snr_db, mean_rms_error, std_rms_error,
    mean_ber, n_packets``. An ``inf`` grid entry gives the noiseless control.
    """
    jobs = [(sweep, snr, i) for snr in sweep.snr_grid_db for i in range(sweep.packets_per_point)]
    results = _map(_window_job, jobs, sweep.workers)
    rows = []
    n = sweep.packets_per_point
    for j, snr in enumerate(sweep.snr_grid_db):
        chunk = np.array(results[j * n:(j + 1) * n])
        rows.append({
            "snr_db": snr,
            "mean_rms_error": float(chunk[:, 0].mean()),
            "std_rms_error": float(chunk[:, 0].std()),
            "mean_ber": float(chunk[:, 1].mean()),
            "n_packets": n,
        })
        log.info("window sweep snr=%s rms=%.3g", snr, rows[-1]["mean_rms_error"])
    if path is not None:
        write_csv(path, WINDOW_SWEEP_COLUMNS, rows, _sweep_meta(sweep, "window"))
    return rows


WINDOW_SWEEP_COLUMNS = ["snr_db", "mean_rms_error", "std_rms_error", "mean_ber", "n_packets"]
CANCEL_SWEEP_COLUMNS = [
    "snr_db", "transition_time_ns", "n_packets", "c_without_db", "c_with_db", "improvement_db",
    "c_minus_snr_without_db", "c_minus_snr_with_db", "mean_window_rms_error", "mean_ber",
]
PACKET_COLUMNS = ["packet_id", "method", "snr_db", "c_db", "window_rms_error"]


def cancel_packet(sweep, snr_db, transition_time_s, packet_index):
    """Full receive chain on one synthetic packet; returns (plain, windowed, ber)."""
    cfg = sweep.ofdm_config()
    truth = transmit_window(transition_time_s, cfg)
    n_bits = 8 * sweep.payload_bytes
    bits, channel, cfo, noise_seed = _packet_draws(sweep, cfg, packet_index, n_bits)
    frame = simulate_frame(cfg, bits, truth, channel, cfo, snr_db, np.random.default_rng(noise_seed))
    canc = SignalCanceller(cfg, frame.packet.n_symbols, True, sweep.step_size, sweep.epochs)
    canc.fit(frame.rx, truth=truth)
    plain, windowed = canc.cancel(frame.rx, snr_db=snr_db, truth=truth)
    ber = float(np.mean(canc.bits_[: bits.size] != bits))
    return plain, windowed, ber


def _cancel_job(args):
    sweep, snr, tt, i = args
    plain, windowed, ber = cancel_packet(sweep, snr, tt, i)
    return plain.c_db, windowed.c_db, windowed.window_rms_error, ber


def run_cancellation_sweep(sweep, path=None, packets_path=None):
    """Cancellation with and without the window estimate over SNR x transition time."""
    points = [(snr, tt) for snr in sweep.snr_grid_db for tt in sweep.transition_times_s]
    n = sweep.packets_per_point
    jobs = [(sweep, snr, tt, i) for snr, tt in points for i in range(n)]
    results = _map(_cancel_job, jobs, sweep.workers)
    rows, packet_rows = [], []
    for j, (snr, tt) in enumerate(points):
        chunk = np.array(results[j * n:(j + 1) * n], dtype=float)
        c_wo, c_w = chunk[:, 0].mean(), chunk[:, 1].mean()
        rows.append({
            "snr_db": snr,
            "transition_time_ns": round(tt * 1e9, 6),
            "n_packets": n,
            "c_without_db": c_wo,
            "c_with_db": c_w,
            "improvement_db": float(np.mean(chunk[:, 1] - chunk[:, 0])),
            "c_minus_snr_without_db": c_wo - snr,
            "c_minus_snr_with_db": c_w - snr,
            "mean_window_rms_error": float(chunk[:, 2].mean()),
            "mean_ber": float(chunk[:, 3].mean()),
        })
        for i, (cwo, cw, werr, _) in enumerate(chunk):
            pid = f"{j}:{i}"
            packet_rows.append({"packet_id": pid, "method": "no_window", "snr_db": snr, "c_db": cwo})
            packet_rows.append({"packet_id": pid, "method": "with_window", "snr_db": snr, "c_db": cw,
                                "window_rms_error": werr})
        log.info("cancel sweep snr=%s tt=%s ns improvement=%.2f dB", snr, tt * 1e9, rows[-1]["improvement_db"])
    meta = _sweep_meta(sweep, "cancel")
    if path is not None:
        write_csv(path, CANCEL_SWEEP_COLUMNS, rows, meta)
    if packets_path is not None:
        write_csv(packets_path, PACKET_COLUMNS, packet_rows, meta)
    return rows


def make_recording(cfg, n_packets, n_symbols, transition_time_s, snr_db, seed=0, gap=1000,
                   channel_profile="exponential_decay", rms_delay_taps=1.0, max_cfo=0.01):
    """A stream of noisy packets separated by `gap` noise-only samples.

    Returns the samples and a metadata dict (packet starts, numerology) that
    :func:`run_ota` and the sidecar file understand.
    """
    rng = np.random.default_rng(seed)
    truth = transmit_window(transition_time_s, cfg)
    pre = generate_preamble(cfg)
    parts, starts, pos = [np.zeros(gap, complex)], [], gap
    for _ in range(n_packets):
        bits = rng.integers(0, 2, n_symbols * cfg.bits_per_ofdm_symbol, dtype=np.uint8)
        pkt = modulate(bits, cfg)
        tx = np.concatenate([pre.samples, apply_window(pkt, truth, circular=False)])
        ch = random_channel(channel_profile, rms_delay_taps, n_taps=cfg.l, rng=rng)
        cfo = CfoModel(rng.uniform(-max_cfo, max_cfo), rng.uniform(-np.pi, np.pi))
        parts += [apply_cfo(apply_channel(tx, ch), cfo), np.zeros(gap, complex)]
        starts.append(pos)
        pos += tx.size + gap
    stream = np.concatenate(parts)
    sigma = math.sqrt(10 ** (-snr_db / 10) / 2) if np.isfinite(snr_db) else 0.0
    stream = stream + sigma * (rng.standard_normal(stream.size) + 1j * rng.standard_normal(stream.size))
    meta = {
        "sample_rate_hz": cfg.sample_rate_hz,
        "center_freq_hz": 0.0,
        "profile": "80211g",
        "constellation": cfg.constellation.name,
        "n_symbols": n_symbols,
        "transition_time_s": transition_time_s,
        "snr_db": snr_db,
        "packet_starts": starts,
        "seed": seed,
    }
    return stream, meta


OTA_PACKET_COLUMNS = ["packet_id", "start_index", "method", "snr_db", "c_db", "window_rms_error",
                      "omega_hat"]
OTA_SUMMARY_COLUMNS = ["n_packets", "mean_snr_db", "mean_c_without_db", "mean_c_with_db",
                       "mean_improvement_db"]
PSD_COLUMNS = ["freq_hz", "received_db", "residue_no_window_db", "residue_with_window_db"]


def process_recording(samples, cfg, est_cfg, n_symbols, starts=None):
    """Detect packets (unless `starts` is given) and cancel each one both ways.

    Packets too close to the end of the stream are skipped. Returns a list of
    dicts with the reports and per-packet diagnostics.
    """
    x = np.asarray(samples, dtype=np.complex128)
    pre_len = len(generate_preamble(cfg))
    if starts is None:
        starts = detect_packet(x, cfg)
    out = []
    for pid, s in enumerate(starts):
        if s + pre_len + n_symbols * cfg.k_sym > x.size:
            log.warning("packet at %d runs past the end of the recording; skipped", s)
            continue
        canc = SignalCanceller(cfg, n_symbols, True, est_cfg.step_size, est_cfg.epochs,
                               est_cfg.use_circular_wrap)
        canc.fit(x, preamble_start=s)
        snr = estimate_snr(x, estimate_cfo(x, cfg, s), cfg, s)
        plain, windowed = canc.cancel(x, preamble_start=s, snr_db=snr)
        out.append({"packet_id": pid, "start": s, "plain": plain, "windowed": windowed,
                    "omega_hat": canc.cfo_.omega_hat, "snr_db": snr,
                    "payload": x[canc.payload_start_: canc.payload_start_ + n_symbols * cfg.k_sym]})
    return out


def run_ota(recording, cfg, est_cfg, n_symbols, out_dir=None, psd_packets=1, fft_size=256):
    """Recorded-IQ pipeline: per-packet CSV, summary CSV and PSD triplets.

    Raises
    ------
    NoPacketsFound
        When detection finds no complete packet.
    """
    if abs(recording.sample_rate_hz - cfg.sample_rate_hz) > 1e-6 * cfg.sample_rate_hz:
        raise ValueError(f"recording rate {recording.sample_rate_hz} Hz does not match "
                         f"numerology rate {cfg.sample_rate_hz} Hz")
    results = process_recording(recording.samples, cfg, est_cfg, n_symbols)
    if not results:
        raise NoPacketsFound(f"no complete packets found in {recording.path or 'recording'}")

    rows = []
    for r in results:
        for rep in (r["plain"], r["windowed"]):
            rows.append({"packet_id": r["packet_id"], "start_index": r["start"], "method": rep.method,
                         "snr_db": r["snr_db"], "c_db": rep.c_db, "window_rms_error": rep.window_rms_error,
                         "omega_hat": r["omega_hat"]})
    c_wo = np.array([r["plain"].c_db for r in results])
    c_w = np.array([r["windowed"].c_db for r in results])
    improvements = [cancellation_improvement(r["windowed"], r["plain"]) for r in results]
    summary = {
        "n_packets": len(results),
        "mean_snr_db": float(np.mean([r["snr_db"] for r in results])),
        "mean_c_without_db": float(c_wo.mean()),
        "mean_c_with_db": float(c_w.mean()),
        "mean_improvement_db": float(np.mean(improvements)),
    }
    psds = []
    for r in results[:psd_packets]:
        n = min(fft_size, r["payload"].size)
        freqs = np.fft.fftshift(np.fft.fftfreq(n, 1 / cfg.sample_rate_hz))
        psds.append([{"freq_hz": f, "received_db": a, "residue_no_window_db": b, "residue_with_window_db": c}
                     for f, a, b, c in zip(freqs, psd(r["payload"], n), psd(r["plain"].residue, n),
                                           psd(r["windowed"].residue, n))])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        meta = {"ofdmwin": __version__, "source": os.path.basename(recording.path or "memory")}
        write_csv(os.path.join(out_dir, "ota_packets.csv"), OTA_PACKET_COLUMNS, rows, meta)
        write_csv(os.path.join(out_dir, "ota_summary.csv"), OTA_SUMMARY_COLUMNS, [summary], meta)
        for r, rows_psd in zip(results, psds):
            write_csv(os.path.join(out_dir, f"ota_psd_{r['packet_id']}.csv"), PSD_COLUMNS, rows_psd, meta)
    return {"summary": summary, "packets": rows, "psd": psds}
