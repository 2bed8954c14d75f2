"""Command-line entry point: ``ofdmwin <subcommand> [options]``.

Subcommands: window-sweep, cancel-sweep, ota, gen-iq, psd. Exit codes are
0 on success, 2 when no packets are found in a recording and 1 on errors.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .dsp import psd
from .estimator import EstimatorConfig
from .experiments import (
    NoPacketsFound,
    SweepConfig,
    make_recording,
    run_cancellation_sweep,
    run_ota,
    run_window_error_sweep,
    write_csv,
)
from .iq import FORMATS, load_iq, save_iq

EXIT_OK, EXIT_ERROR, EXIT_NO_PACKETS = 0, 1, 2

log = logging.getLogger("ofdmwin")


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _sweep_from_args(args):
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    preset = data.pop("preset", None) or args.preset
    overrides = {k: v for k, v in {
        "seed": args.seed,
        "output_dir": args.out_dir,
        "workers": args.workers,
        "packets_per_point": args.packets,
        "snr_grid_db": args.snr_grid,
        "transition_times_s": [t * 1e-9 for t in args.transition_times_ns] if args.transition_times_ns else None,
    }.items() if v is not None}
    data.update(overrides)
    return SweepConfig.preset(preset, **data)


def _add_common(p):
    p.add_argument("--config", help="JSON file with SweepConfig fields (flags override it)")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--packets", type=int, help="packets per grid point")
    p.add_argument("--snr-grid", type=_float_list, help="comma-separated SNRs in dB ('inf' allowed)")
    p.add_argument("--transition-times-ns", type=_float_list, dest="transition_times_ns")


def cmd_window_sweep(args):
    sweep = _sweep_from_args(args)
    path = os.path.join(sweep.output_dir, "window_sweep.csv")
    for row in run_window_error_sweep(sweep, path):
        print(f"snr={row['snr_db']:>6} dB  rms_error={row['mean_rms_error']:.4g}  ber={row['mean_ber']:.3g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_cancel_sweep(args):
    sweep = _sweep_from_args(args)
    path = os.path.join(sweep.output_dir, "cancel_sweep.csv")
    packets = os.path.join(sweep.output_dir, "cancel_sweep_packets.csv")
    for row in run_cancellation_sweep(sweep, path, packets):
        print(f"snr={row['snr_db']:>5} dB  tt={row['transition_time_ns']:>6} ns  "
              f"c_without={row['c_without_db']:6.2f}  c_with={row['c_with_db']:6.2f}  "
              f"improvement={row['improvement_db']:5.2f} dB")
    print(f"wrote {path}")
    return EXIT_OK


def _numerology(args, meta):
    sweep = SweepConfig(profile=meta.get("profile", "80211g"),
                        constellation=args.constellation or meta.get("constellation", "QAM64"))
    return sweep.ofdm_config()


def cmd_ota(args):
    rec = load_iq(args.input, args.format, sample_rate_hz=args.sample_rate)
    cfg = _numerology(args, rec.metadata)
    n_symbols = args.n_symbols or rec.metadata.get("n_symbols")
    if n_symbols is None:
        raise ValueError("payload length unknown: pass --n-symbols or provide it in the sidecar")
    est_cfg = EstimatorConfig(args.step_size, args.epochs, "rectangular", False)
    out_dir = args.out_dir or "results"
    try:
        result = run_ota(rec, cfg, est_cfg, int(n_symbols), out_dir, psd_packets=args.psd_packets)
    except NoPacketsFound as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NO_PACKETS
    s = result["summary"]
    print(f"packets={s['n_packets']}  mean_snr={s['mean_snr_db']:.2f} dB  "
          f"c_without={s['mean_c_without_db']:.2f} dB  c_with={s['mean_c_with_db']:.2f} dB  "
          f"improvement={s['mean_improvement_db']:.2f} dB")
    print(f"wrote results to {out_dir}")
    return EXIT_OK


def cmd_gen_iq(args):
    cfg = _numerology(args, {})
    stream, meta = make_recording(
        cfg, args.n_packets, args.n_symbols, args.transition_time_ns * 1e-9, args.snr,
        seed=args.seed if args.seed is not None else 0, gap=args.gap,
    )
    save_iq(stream, args.output, args.format, metadata=meta)
    print(f"wrote {stream.size} samples ({args.n_packets} packets) to {args.output}")
    return EXIT_OK


def cmd_psd(args):
    rec = load_iq(args.input, args.format, sample_rate_hz=args.sample_rate)
    x = rec.samples[args.start: args.start + args.length if args.length else None]
    p = psd(x, args.fft_size, args.overlap)
    freqs = np.fft.fftshift(np.fft.fftfreq(args.fft_size, 1 / rec.sample_rate_hz))
    out = args.output or os.path.splitext(args.input)[0] + "_psd.csv"
    write_csv(out, ["freq_hz", "power_db"], [{"freq_hz": f, "power_db": v} for f, v in zip(freqs, p)])
    print(f"wrote {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ofdmwin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("window-sweep", help="window RMS error vs SNR (perfect channel)")
    _add_common(p)
    p.set_defaults(func=cmd_window_sweep)

    p = sub.add_parser("cancel-sweep", help="cancellation with/without window estimate")
    _add_common(p)
    p.set_defaults(func=cmd_cancel_sweep)

    fmt = dict(choices=sorted(FORMATS), default="cf32le")

    p = sub.add_parser("ota", help="cancel every packet in a recorded IQ file")
    p.add_argument("input")
    p.add_argument("--format", **fmt)
    p.add_argument("--sample-rate", type=float, dest="sample_rate")
    p.add_argument("--constellation", choices=["QPSK", "QAM16", "QAM64"])
    p.add_argument("--n-symbols", type=int, dest="n_symbols")
    p.add_argument("--step-size", type=float, default=0.01, dest="step_size")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--psd-packets", type=int, default=1, dest="psd_packets")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_ota)

    p = sub.add_parser("gen-iq", help="write a synthetic recording with a JSON sidecar")
    p.add_argument("output")
    p.add_argument("--format", **fmt)
    p.add_argument("--constellation", choices=["QPSK", "QAM16", "QAM64"])
    p.add_argument("--n-packets", type=int, default=10, dest="n_packets")
    p.add_argument("--n-symbols", type=int, default=112, dest="n_symbols")
    p.add_argument("--transition-time-ns", type=float, default=500.0, dest="transition_time_ns")
    p.add_argument("--snr", type=float, default=30.0)
    p.add_argument("--gap", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_iq)

    p = sub.add_parser("psd", help="averaged spectrum of an IQ file")
    p.add_argument("input")
    p.add_argument("--format", **fmt)
    p.add_argument("--sample-rate", type=float, dest="sample_rate")
    p.add_argument("--fft-size", type=int, default=256, dest="fft_size")
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--length", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_psd)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
