"""Blind estimation of the transmit window with a sample-by-sample LMS.

The receiver rebuilds its copy of the received signal from the decided
symbols, the current window guess and the channel estimate, and nudges each
transition coefficient along the negative gradient of the instantaneous
squared error. Only the transition coefficients (alpha, beta) are free; the
flat part of the window is fixed at one and everything outside the support is
zero.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_positive, check_stream
from .modem import OfdmPacket
from .window import WindowFunction, apply_window, rectangular_window, window_rms_error

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn

#: an epoch whose mean squared error grows by this factor aborts the run
DIVERGENCE_FACTOR = 10.0


class EstimatorDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    step_size: float = 0.01
    epochs: int = 20
    init: str = "rectangular"
    use_circular_wrap: bool = False

    def __post_init__(self):
        check_positive(self.step_size, "step_size")
        check_count(self.epochs, "epochs", 1)
        if self.init not in ("rectangular", "zeros"):
            raise ValueError(f"init must be 'rectangular' or 'zeros', got {self.init!r}")


@dataclass
class EstimationTrace:
    """Per-epoch diagnostics. ``mse[e]`` is the mean a-priori |e|^2 seen
    during epoch e; ``rms_error[e]`` is the window error after it (NaN when no
    reference window was supplied)."""

    mse: list = field(default_factory=list)
    rms_error: list = field(default_factory=list)
    window: WindowFunction = None

    def __len__(self):
        return len(self.mse)

    def to_rows(self):
        return [(i, m, r) for i, (m, r) in enumerate(zip(self.mse, self.rms_error))]

    def write_csv(self, path):
        """Write ``epoch,mse,rms_error`` rows."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "mse", "rms_error"])
            for epoch, mse, rms in self.to_rows():
                writer.writerow([epoch, repr(float(mse)), repr(float(rms))])


def _as_packet(grids, cfg):
    if isinstance(grids, OfdmPacket):
        return grids
    return OfdmPacket(cfg, grids)


def gradient_contribution(error, h_tap, o_sample):
    """d|e|^2 / dw_i contributed by one (channel tap, symbol sample) pair:
    ``-2 Re{conj(e) * h * o}``."""
    return -2.0 * np.real(np.conj(error) * h_tap * o_sample)


def reconstruct_reference(grids, w_hat, ch, cfg, circular=False, lead_in=None):
    """Modelled received samples: window the rebuilt symbols, then convolve
    with the channel estimate.

    Parameters
    ----------
    grids : ndarray (N, M) or OfdmPacket
        Decided frequency grids.
    w_hat : WindowFunction
    ch : ChannelEstimate
    lead_in : array_like of complex, optional
        Known samples transmitted right before the packet (e.g. the
        preamble); their channel tail spills into the first payload samples.
    """
    pkt = _as_packet(grids, cfg)
    v = apply_window(pkt, w_hat, circular=circular)
    lead = np.zeros(0, complex) if lead_in is None else check_stream(lead_in, "lead_in")
    y = sps.lfilter(ch.time_taps, [1.0], np.concatenate([lead, v]))
    return y[lead.size:]


def window_design(grids, cfg, circular=False):
    """Split the windowed packet as ``v = const + basis @ params``.

    ``params`` is ``WindowFunction.params`` (alpha then beta); ``basis`` has
    shape (N*K, 4L) and gathers, for every output sample, the neighbouring
    symbol samples that each free coefficient multiplies.
    """
    pkt = _as_packet(grids, cfg)
    m, l, k_sym, n = cfg.m, cfg.l, cfg.k_sym, pkt.n_symbols
    k = np.arange(-l, m)
    const = np.zeros((n, k_sym), dtype=np.complex128)
    basis = np.zeros((n, k_sym, 4 * l), dtype=np.complex128)
    p = np.arange(n)
    for q in (-1, 0, 1):
        i = k - q * k_sym
        if circular:
            dst, src = p, (p + q) % n
        else:
            dst = p[(p + q >= 0) & (p + q < n)]
            src = dst + q
        samples = pkt.extended(i)[src]  # (len(dst), K)
        flat = (i >= 0) & (i <= m - l - 1)
        const[dst[:, None], np.flatnonzero(flat)[None, :]] += samples[:, flat]
        for cols, pos in (
            (i - (m - l), (i >= m - l) & (i <= m + l - 1)),  # alpha
            (2 * l - 1 - i, (i >= -2 * l) & (i <= -1)),  # beta
        ):
            for kk in np.flatnonzero(pos):
                basis[dst, kk, cols[kk]] += samples[:, kk]
    return const.ravel(), basis.reshape(n * k_sym, 4 * l)


def received_design(grids, ch, cfg, circular=False, lead_in=None):
    """Design of the channel-filtered reference: ``y_hat = const + A @ params``."""
    const, basis = window_design(grids, cfg, circular)
    taps = ch.time_taps
    lead = np.zeros(0, complex) if lead_in is None else check_stream(lead_in, "lead_in")
    const = sps.lfilter(taps, [1.0], np.concatenate([lead, const]))[lead.size:]
    design = sps.lfilter(taps, [1.0], basis, axis=0)
    return const, design


@njit(cache=True)
def _lms_epoch(y, const, design, active, theta, mu):
    n, p = design.shape
    acc = 0.0
    for t in range(n):
        yhat = const[t]
        if active[t]:
            for j in range(p):
                yhat += design[t, j] * theta[j]
        e = y[t] - yhat
        acc += e.real * e.real + e.imag * e.imag
        if active[t]:
            g = 2.0 * mu
            for j in range(p):
                a = design[t, j]
                theta[j] += g * (e.real * a.real + e.imag * a.imag)
    return acc / n


def window_gradient(rx, grids, w_hat, ch, cfg, circular=False, lead_in=None):
    """Gradient of mean |y - y_hat|^2 with respect to ``w_hat.params``."""
    y = check_stream(rx, "rx")
    const, design = received_design(grids, ch, cfg, circular, lead_in)
    e = y - const - design @ w_hat.params
    return (-2.0 * np.real(np.conj(e)[:, None] * design)).mean(axis=0)


def estimate_window(rx, hard_grids, ch, cfo, est_cfg, cfg, start_index=0, lead_in=None, truth=None):
    """Run the LMS window estimator over one packet.

    Parameters
    ----------
    rx : array_like of complex
        Received payload samples (N*K), aligned to the first symbol.
    hard_grids : ndarray (N, M) or OfdmPacket
        Decided symbols; decision errors are used as-is.
    ch : ChannelEstimate
    cfo : CfoEstimate or None
        Removed from `rx` before estimation; None means `rx` is corrected.
    est_cfg : EstimatorConfig
    start_index : int
        Absolute index of ``rx[0]`` for the CFO ramp.
    lead_in : array_like, optional
        Known samples sent immediately before the payload.
    truth : WindowFunction, optional
        Reference window for the per-epoch RMS error trace.

    Returns
    -------
    WindowFunction, EstimationTrace
    """
    pkt = _as_packet(hard_grids, cfg)
    if pkt.n_symbols < 3:
        raise ValueError(f"window estimation needs at least 3 symbols, got {pkt.n_symbols}")
    y = check_stream(rx, "rx")
    n_samp = pkt.n_symbols * cfg.k_sym
    if y.size < n_samp:
        raise ValueError(f"rx has {y.size} samples, packet needs {n_samp}")
    y = y[:n_samp]
    if cfo is not None:
        y = cfo.correct(y, start_index)

    const, design = received_design(pkt, ch, cfg, est_cfg.use_circular_wrap, lead_in)
    active = np.any(design != 0, axis=1)

    init = rectangular_window(cfg) if est_cfg.init == "rectangular" else WindowFunction(
        cfg.m, cfg.l, np.zeros(2 * cfg.l), np.zeros(2 * cfg.l))
    theta = init.params.copy()
    trace = EstimationTrace()
    prev = None
    for epoch in range(est_cfg.epochs):
        mse = float(_lms_epoch(y, const, design, active, theta, est_cfg.step_size))
        if not np.isfinite(mse) or not np.all(np.isfinite(theta)) or (
            prev is not None and prev > 0 and mse > DIVERGENCE_FACTOR * prev
        ):
            raise EstimatorDivergedError(
                f"window estimate diverged in epoch {epoch} (mse {prev} -> {mse}); "
                f"reduce step_size={est_cfg.step_size}"
            )
        prev = mse
        trace.mse.append(mse)
        w = WindowFunction.from_params(theta, cfg.m, cfg.l)
        trace.rms_error.append(window_rms_error(w, truth) if truth is not None else float("nan"))
    trace.window = WindowFunction.from_params(theta, cfg.m, cfg.l)
    return trace.window, trace


class WindowEstimator(BaseEstimator):
    """Estimator wrapper around :func:`estimate_window`.

    ``fit(rx, hard_grids, channel=..., cfo=...)`` learns ``window_``;
    ``predict(grids)`` returns the modelled received signal for new grids
    with the learned window and the fitted channel.

    Examples
    --------
    >>> est = WindowEstimator(cfg, step_size=0.01, epochs=20)  # doctest: +SKIP
    >>> est.fit(rx, grids, channel=chan, cfo=cfo).window_      # doctest: +SKIP
    """

    def __init__(self, cfg=None, step_size=0.01, epochs=20, init="rectangular", use_circular_wrap=False):
        self.cfg = cfg
        self.step_size = step_size
        self.epochs = epochs
        self.init = init
        self.use_circular_wrap = use_circular_wrap

    def _est_cfg(self):
        return EstimatorConfig(self.step_size, self.epochs, self.init, self.use_circular_wrap)

    def fit(self, X, y, channel=None, cfo=None, start_index=0, lead_in=None, truth=None):
        if self.cfg is None:
            raise ValueError("WindowEstimator needs an OfdmConfig")
        if channel is None:
            raise ValueError("fit requires a channel estimate")
        self.window_, self.trace_ = estimate_window(
            X, y, channel, cfo, self._est_cfg(), self.cfg,
            start_index=start_index, lead_in=lead_in, truth=truth,
        )
        self.channel_ = channel
        return self

    def predict(self, X, lead_in=None):
        check_is_fitted(self, "window_")
        return reconstruct_reference(X, self.window_, self.channel_, self.cfg,
                                     self.use_circular_wrap, lead_in)

    def score(self, X, y, lead_in=None):
        """Negative mean squared error of the reconstruction of `X` from grids `y`."""
        resid = check_stream(X) - self.predict(y, lead_in)
        return -float(np.mean(np.abs(resid) ** 2))
