"""Signal cancellation: rebuild the received packet from estimates and
subtract it, with or without the transmit-window term."""
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_stream
from .dsp import DB_FLOOR, variance
from .estimator import EstimatorConfig, estimate_window
from .modem import OfdmPacket, demodulate, generate_preamble, remodulate, serialize
from .sync import CfoEstimate, ChannelEstimate, estimate_cfo, estimate_channel, refine_cfo
from .window import apply_window, window_rms_error

#: cancellation ratios are clamped to this value when the residue vanishes
C_DB_CLAMP = 200.0

NO_WINDOW = "no_window"
WITH_WINDOW = "with_window"


@dataclass(eq=False)
class CancellationReport:
    residue: np.ndarray = field(repr=False)
    c_db: float
    method: str
    snr_db: float = float("nan")
    window_rms_error: float = None
    clamped: bool = False

    @property
    def c_minus_snr_db(self):
        return self.c_db - self.snr_db

    @property
    def residue_power_db(self):
        p = float(np.mean(np.abs(self.residue) ** 2))
        return 10 * np.log10(p) if p > 0 else DB_FLOOR

    def as_row(self, packet_id=None):
        return {
            "packet_id": packet_id,
            "method": self.method,
            "snr_db": self.snr_db,
            "c_db": self.c_db,
            "window_rms_error": self.window_rms_error,
        }


def cancellation_ratio(r, u, return_clamped=False):
    """var(r)/var(u) in dB, clamped to +200 dB for a vanishing residue."""
    vr, vu = variance(r), variance(u)
    if vr <= 0:
        raise ValueError("received stream has zero variance")
    if vu <= 0 or 10 * np.log10(vr / vu) > C_DB_CLAMP:
        c, clamped = C_DB_CLAMP, True
    else:
        c, clamped = float(10 * np.log10(vr / vu)), False
    return (c, clamped) if return_clamped else c


def cancellation_improvement(with_w, without_w):
    """c(with window) - c(without window) in dB."""
    if with_w.method != WITH_WINDOW or without_w.method != NO_WINDOW:
        raise ValueError(
            f"expected ({WITH_WINDOW}, {NO_WINDOW}) reports, got ({with_w.method}, {without_w.method})"
        )
    return with_w.c_db - without_w.c_db


def _impair_reconstruction(v, ch, cfo, start_index, lead_in):
    lead = np.zeros(0, complex) if lead_in is None else check_stream(lead_in, "lead_in")
    y = sps.lfilter(ch.time_taps, [1.0], np.concatenate([lead, v]))[lead.size:]
    return y * cfo.model.ramp(y.size, start_index)


def _report(r, recon, method, snr_db, w_err):
    r = check_stream(r, "r")
    if r.size != recon.size:
        raise ValueError(f"received stream has {r.size} samples, reconstruction {recon.size}")
    u = r - recon
    c, clamped = cancellation_ratio(r, u, return_clamped=True)
    return CancellationReport(u, c, method, snr_db, w_err, clamped)


def cancel_no_window(r, s_hat, ch, cfo, start_index=0, lead_in=None, snr_db=float("nan")):
    """Subtract CFO(channel(serialize(s_hat))) from `r`.

    Impairment estimates are applied to the reconstruction; `r` itself is
    never equalized.

    Parameters
    ----------
    r : array_like of complex
        Received payload samples, N*K long.
    s_hat : OfdmPacket
        Remodulated packet.
    ch : ChannelEstimate
    cfo : CfoEstimate
    start_index : int
        Absolute index of ``r[0]`` for the CFO ramp.
    lead_in : array_like, optional
        Known samples sent just before the payload.
    """
    recon = _impair_reconstruction(serialize(s_hat), ch, cfo, start_index, lead_in)
    return _report(r, recon, NO_WINDOW, snr_db, None)


def cancel_with_window(r, s_hat, w_hat, ch, cfo, start_index=0, lead_in=None,
                       snr_db=float("nan"), circular=False, truth=None):
    """As :func:`cancel_no_window`, but the reconstruction is the
    overlap-added, windowed packet built with `w_hat`."""
    v = apply_window(s_hat, w_hat, circular=circular)
    recon = _impair_reconstruction(v, ch, cfo, start_index, lead_in)
    w_err = window_rms_error(w_hat, truth) if truth is not None else None
    return _report(r, recon, WITH_WINDOW, snr_db, w_err)


class SignalCanceller(BaseEstimator, TransformerMixin):
    """Receive chain for one packet: sync, demodulate, remodulate, estimate
    the window and cancel.

    ``fit`` takes a stream whose preamble starts at ``preamble_start`` and
    learns ``cfo_``, ``channel_``, ``packet_`` and (optionally) ``window_``.
    ``transform`` returns the residue over the payload. Passing ``channel``
    or ``cfo`` to ``fit`` replaces the corresponding estimate.

    Parameters
    ----------
    cfg : OfdmConfig
    n_symbols : int
        Payload length in OFDM symbols.
    estimate_window : bool
        Use the windowed reconstruction; False gives the plain method.
    step_size, epochs : float, int
        LMS settings.
    use_circular_wrap : bool
    channel_edge : {"hold", "wrap"}
        Band-edge treatment in the channel interpolation.
    cfo_refinement : bool
        Refine the preamble CFO estimate against the remodulated packet.
    """

    def __init__(self, cfg=None, n_symbols=None, estimate_window=True, step_size=0.01, epochs=20,
                 use_circular_wrap=False, channel_edge="hold", cfo_refinement=True):
        self.cfg = cfg
        self.n_symbols = n_symbols
        self.estimate_window = estimate_window
        self.step_size = step_size
        self.epochs = epochs
        self.use_circular_wrap = use_circular_wrap
        self.channel_edge = channel_edge
        self.cfo_refinement = cfo_refinement

    def _payload(self, X, preamble_start):
        x = check_stream(X, "X")
        start = preamble_start + len(self.preamble_)
        stop = start + self.n_symbols_ * self.cfg.k_sym
        if x.size < stop:
            raise ValueError(f"stream of {x.size} samples ends before the payload ({stop})")
        return x[start:stop], start

    def fit(self, X, y=None, preamble_start=0, channel=None, cfo=None, truth=None):
        cfg = self.cfg
        if cfg is None:
            raise ValueError("SignalCanceller needs an OfdmConfig")
        x = check_stream(X, "X")
        self.preamble_ = generate_preamble(cfg)
        if self.n_symbols is None:
            n = (x.size - preamble_start - len(self.preamble_)) // cfg.k_sym
        else:
            n = self.n_symbols
        self.n_symbols_ = check_count(n, "n_symbols", 1)
        rx, start = self._payload(x, preamble_start)

        given_cfo = cfo is not None
        if cfo is None:
            cfo = estimate_cfo(x, cfg, preamble_start, self.preamble_)
        elif not isinstance(cfo, CfoEstimate):
            cfo = CfoEstimate.from_model(cfo)
        if channel is None:
            channel = estimate_channel(x, cfo, cfg, preamble_start, self.preamble_, self.channel_edge)
        elif not isinstance(channel, ChannelEstimate):
            channel = ChannelEstimate.from_taps(channel, cfg)

        bits, grids = demodulate(rx, channel, cfo, cfg, self.n_symbols_, start)
        packet = remodulate(grids, cfg)
        lead = self.preamble_.samples
        if self.cfo_refinement and not given_cfo:
            ref = sps.lfilter(channel.time_taps, [1.0], np.concatenate([lead, serialize(packet)]))
            cfo = refine_cfo(rx, ref[lead.size:], cfo, start)

        self.cfo_, self.channel_, self.packet_, self.bits_ = cfo, channel, packet, bits
        self.payload_start_ = start
        self.window_ = None
        self.trace_ = None
        if self.estimate_window:
            est_cfg = EstimatorConfig(self.step_size, self.epochs, "rectangular", self.use_circular_wrap)
            self.window_, self.trace_ = estimate_window(
                rx, packet, channel, cfo, est_cfg, cfg, start, lead_in=lead, truth=truth)
        return self

    def cancel(self, X, preamble_start=0, snr_db=float("nan"), truth=None):
        """Both reports for `X`: (no_window, with_window or None)."""
        check_is_fitted(self, "packet_")
        rx, start = self._payload(X, preamble_start)
        lead = self.preamble_.samples
        plain = cancel_no_window(rx, self.packet_, self.channel_, self.cfo_, start, lead, snr_db)
        windowed = None
        if self.window_ is not None:
            windowed = cancel_with_window(rx, self.packet_, self.window_, self.channel_, self.cfo_,
                                          start, lead, snr_db, self.use_circular_wrap, truth)
        return plain, windowed

    def transform(self, X, preamble_start=0):
        plain, windowed = self.cancel(X, preamble_start)
        return (windowed or plain).residue

    def score(self, X, y=None, preamble_start=0):
        """Cancellation ratio in dB achieved on `X`."""
        plain, windowed = self.cancel(X, preamble_start)
        return (windowed or plain).c_db
