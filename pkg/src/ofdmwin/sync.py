"""Carrier-offset and channel estimation from the preamble, packet detection
for recorded streams, and a decision-directed CFO refinement."""
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_stream
from .impairments import CfoModel
from .modem import generate_preamble


@dataclass(frozen=True)
class CfoEstimate:
    """Estimated phase ramp; ``phi_hat`` refers to absolute sample index 0."""

    omega_hat: float = 0.0
    phi_hat: float = 0.0

    @classmethod
    def from_model(cls, cfo):
        return cls(float(cfo.omega), float(cfo.phi))

    @property
    def model(self):
        return CfoModel(self.omega_hat, self.phi_hat)

    def correct(self, x, start_index=0):
        """Remove the estimated ramp from `x` (multiply by its conjugate)."""
        x = np.asarray(x, dtype=np.complex128)
        return x * np.conj(self.model.ramp(x.size, start_index))


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Per-subcarrier response (FFT bin order) and its first L time taps."""

    freq_response: np.ndarray = field(repr=False)
    time_taps: np.ndarray = field(repr=False)

    @classmethod
    def from_taps(cls, taps, cfg):
        """Genie estimate built from known channel taps."""
        taps = np.asarray(getattr(taps, "taps", taps), dtype=np.complex128)
        if taps.size > cfg.l:
            raise ValueError(f"{taps.size} taps exceed L={cfg.l}")
        padded = np.zeros(cfg.l, dtype=np.complex128)
        padded[: taps.size] = taps
        return cls(np.fft.fft(padded, cfg.m), padded)

    @classmethod
    def from_freq_response(cls, h, cfg):
        h = np.asarray(h, dtype=np.complex128)
        if not np.all(np.isfinite(h)):
            raise ValueError("channel response has non-finite bins")
        return cls(h, np.fft.ifft(h)[: cfg.l])

    def scaled(self, gain):
        return ChannelEstimate(self.freq_response * gain, self.time_taps * gain)


def _long_field_offsets(preamble, start_index):
    first, second = preamble.training_offsets
    return start_index + first, start_index + second


def estimate_cfo(preamble_rx, cfg, start_index=0, preamble=None):
    """Two-stage CFO estimate from the preamble.

    A coarse estimate from the short field's M/4 periodicity is refined with
    the phase difference between the two long training symbols, giving an
    unambiguous range of |omega| < 4*pi/M. The phase ``phi_hat`` is the mean
    rotation of the corrected training symbols against the known grid.

    Parameters
    ----------
    preamble_rx : array_like of complex
        Received samples; the preamble starts at `start_index`.
    """
    rx = check_stream(preamble_rx, "preamble_rx")
    pre = preamble if preamble is not None else generate_preamble(cfg)
    m = cfg.m
    if rx.size < start_index + len(pre):
        raise ValueError(f"stream of {rx.size} samples does not contain the {len(pre)}-sample preamble")

    period = pre.short_period
    # skip the first repeats, which carry channel transients and AGC settling
    s0 = start_index + 2 * period
    s1 = start_index + pre.short_field.size - period
    short = rx[s0:s1 + period]
    coarse = np.angle(np.vdot(short[:-period], short[period:])) / period

    a, b = _long_field_offsets(pre, start_index)
    n = np.arange(a, b + m)
    seg = rx[a:b + m] * np.exp(-1j * coarse * n)
    fine = np.angle(np.vdot(seg[:m], seg[m:])) / m
    omega = coarse + fine

    phi = _training_phase(rx, pre, cfg, omega, start_index)
    return CfoEstimate(float(omega), float(phi))


def _training_spectra(rx, pre, cfg, cfo, start_index):
    m = cfg.m
    a, b = _long_field_offsets(pre, start_index)
    ys = []
    for off in (a, b):
        seg = cfo.correct(rx[off:off + m], off)
        ys.append(np.fft.fft(seg) / pre.training_scale)
    return np.array(ys)


def _training_phase(rx, pre, cfg, omega, start_index):
    spectra = _training_spectra(rx, pre, cfg, CfoEstimate(omega, 0.0), start_index)
    return float(np.angle(np.sum(spectra @ pre.training_grid.conj())))


def interpolate_nulls(h_occupied, cfg, edge="hold"):
    """Fill null subcarriers from estimates on the occupied ones.

    Interior gaps (e.g. DC) are interpolated linearly in magnitude and in
    unwrapped phase between the nearest occupied neighbours. Band-edge nulls
    either hold the outermost occupied value (``edge="hold"``) or are
    interpolated across the spectral wrap between the two band edges
    (``edge="wrap"``).

    Parameters
    ----------
    h_occupied : array_like of complex
        Estimates ordered like ``cfg.occupied_subcarriers``.
    """
    occ = np.array(cfg.occupied_subcarriers)
    h_occupied = np.asarray(h_occupied, dtype=np.complex128)
    mag = np.abs(h_occupied)
    phase = np.unwrap(np.angle(h_occupied))
    sc = np.arange(-(cfg.m // 2), cfg.m - cfg.m // 2)

    if edge == "wrap":
        # extend the anchor list by one period on each side
        occ_x = np.concatenate([occ - cfg.m, occ, occ + cfg.m])
        mag_x = np.tile(mag, 3)
        span = phase[-1] - phase[0]
        # phase continues across the wrap with the same mean slope as in-band
        slope = span / (occ[-1] - occ[0]) if occ.size > 1 else 0.0
        step = slope * cfg.m
        phase_x = np.concatenate([phase - step, phase, phase + step])
        mags = np.interp(sc, occ_x, mag_x)
        phases = np.interp(sc, occ_x, phase_x)
    elif edge == "hold":
        mags = np.interp(sc, occ, mag)
        phases = np.interp(sc, occ, phase)
    else:
        raise ValueError(f"unknown edge mode {edge!r}")

    out = np.empty(cfg.m, dtype=np.complex128)
    out[sc % cfg.m] = mags * np.exp(1j * phases)
    out[occ % cfg.m] = h_occupied
    return out


def estimate_channel(preamble_rx, cfo, cfg, start_index=0, preamble=None, edge="hold"):
    """Least-squares channel estimate from the two long training symbols.

    The CFO correction is applied first, so any CFO error leaks into the
    result. Null subcarriers are filled by :func:`interpolate_nulls`.
    """
    rx = check_stream(preamble_rx, "preamble_rx")
    pre = preamble if preamble is not None else generate_preamble(cfg)
    if rx.size < start_index + len(pre):
        raise ValueError(f"stream of {rx.size} samples does not contain the {len(pre)}-sample preamble")
    x = pre.training_grid
    occ = cfg.occupied_bins
    if not np.any(np.abs(x[occ]) > 0):
        raise ValueError("training grid has no power")
    spectra = _training_spectra(rx, pre, cfg, cfo, start_index)
    h_occ = spectra.mean(axis=0)[occ] / x[occ]
    return ChannelEstimate.from_freq_response(interpolate_nulls(h_occ, cfg, edge), cfg)


def refine_cfo(rx, reference, cfo, start_index=0, block=80, passes=2):
    """Decision-directed CFO refinement against a reconstructed signal.

    `reference` is the modelled received signal without the carrier ramp
    (remodulated packet through the channel estimate). The residual phase of
    ``rx * conj(reference)`` is measured per block, unwrapped and fitted with
    a weighted straight line whose slope and intercept correct `cfo`. Block
    phases are power-weighted, so a second pass removes the small bias the
    first leaves behind.
    """
    rx = check_stream(rx, "rx")
    reference = check_stream(reference, "reference")
    if rx.size != reference.size:
        raise ValueError("rx and reference lengths differ")
    nb = rx.size // block
    if nb < 2:
        return cfo
    centers = start_index + block * np.arange(nb) + (block - 1) / 2
    for _ in range(passes):
        z = cfo.correct(rx, start_index) * np.conj(reference)
        sums = z[: nb * block].reshape(nb, block).sum(axis=1)
        weights = np.abs(sums)
        if not np.any(weights):
            return cfo
        phase = np.unwrap(np.angle(sums))
        slope, intercept = np.polyfit(centers, phase, 1, w=np.sqrt(weights))
        cfo = CfoEstimate(cfo.omega_hat + float(slope), cfo.phi_hat + float(intercept))
    return cfo


def detect_packet(stream, cfg, threshold=0.7, min_plateau=None, preamble=None, min_spacing=None,
                  first_path=0.5):
    """Find preamble starts in a recorded stream.

    A delay-and-correlate metric over the short field's periodicity flags
    candidate regions; each candidate is then pinned to the sample by
    cross-correlating against the known long training symbol.

    Returns
    -------
    list of int
        Sample indices of detected preamble starts, ascending.
    """
    x = check_stream(stream, "stream")
    pre = preamble if preamble is not None else generate_preamble(cfg)
    period = pre.short_period
    win = 4 * period
    if min_plateau is None:
        min_plateau = 2 * period
    if min_spacing is None:
        min_spacing = len(pre)
    if x.size < len(pre) + win:
        return []

    prod = x[period:] * np.conj(x[:-period])
    energy = np.abs(x[period:]) ** 2
    kernel = np.ones(win)
    p = np.convolve(prod, kernel, mode="valid")
    r = np.convolve(energy, kernel, mode="valid")
    with np.errstate(divide="ignore", invalid="ignore"):
        metric = np.where(r > 0, np.abs(p) ** 2 / r**2, 0.0)
    above = metric > threshold

    # runs of consecutive above-threshold samples
    edges = np.diff(np.r_[0, above.astype(np.int8), 0])
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)

    train = np.fft.ifft(pre.training_grid) * pre.training_scale
    first, _ = pre.training_offsets
    found = []
    for a, b in zip(starts, stops):
        if b - a < min_plateau:
            continue
        if found and a < found[-1] + min_spacing:
            continue
        coarse = np.angle(p[a + (b - a) // 2]) / period
        lo = max(0, a - 2 * period)
        hi = min(x.size - len(pre), a + 2 * period)
        if hi < lo:
            continue
        ramp = np.exp(-1j * coarse * np.arange(cfg.m))
        lags = np.arange(lo, hi + 1)
        scores = np.array([
            abs(np.vdot(train, x[s + first: s + first + cfg.m] * ramp))
            + abs(np.vdot(train, x[s + first + cfg.m: s + first + 2 * cfg.m] * ramp))
            for s in lags
        ])
        # lock to the earliest strong path rather than the strongest one, so
        # the channel estimate keeps its leading taps
        peak = int(np.argmax(scores))
        early = np.flatnonzero(scores[max(0, peak - cfg.l + 1): peak + 1] >= first_path * scores[peak])
        found.append(int(lags[max(0, peak - cfg.l + 1) + early[0]]))
    return found


def estimate_snr(rx, cfo, cfg, start_index=0, preamble=None):
    """SNR in dB from the two repeated long training symbols.

    Their difference is pure noise (after CFO correction), their mean is
    signal plus half the noise.
    """
    rx = check_stream(rx, "rx")
    pre = preamble if preamble is not None else generate_preamble(cfg)
    a, b = _long_field_offsets(pre, start_index)
    m = cfg.m
    y0 = cfo.correct(rx[a:a + m], a)
    y1 = cfo.correct(rx[b:b + m], b)
    noise = np.mean(np.abs(y0 - y1) ** 2) / 2
    sig = np.mean(np.abs(y0 + y1) ** 2) / 4 - noise / 2
    if noise <= 0:
        return float("inf")
    return float(10 * np.log10(max(sig, 1e-300) / noise))
