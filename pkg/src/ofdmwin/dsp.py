"""Complex sample buffers and the small set of numeric utilities the rest of
the package shares: variance, dB ratios and an averaged periodogram."""
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from ._validation import check_positive, check_stream

#: floor applied to log-domain outputs in place of -inf
DB_FLOOR = -200.0


@dataclass(frozen=True)
class SampleStream:
    """A run of complex baseband samples tagged with its sample rate.

    Numeric functions in this package accept plain arrays; this container is
    used where the rate has to travel with the data (file I/O, experiments).
    It converts to an ndarray via ``np.asarray``.
    """

    samples: np.ndarray = field(repr=False)
    sample_rate_hz: float = 20e6

    def __post_init__(self):
        object.__setattr__(self, "samples", check_stream(self.samples, "samples"))
        check_positive(self.sample_rate_hz, "sample_rate_hz")

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.samples
        return self.samples.astype(dtype)

    def __len__(self):
        return self.samples.size


def variance(x):
    """Mean of |x - mean(x)|^2 over a complex stream."""
    x = check_stream(x, min_length=1)
    d = x - x.mean()
    return float(np.mean(d.real**2 + d.imag**2))


def power_db_ratio(num, den):
    """10*log10(num/den) for strictly positive powers."""
    if not (num > 0 and den > 0):
        raise ValueError(f"power ratio needs positive inputs, got {num!r}/{den!r}")
    return float(10.0 * np.log10(num / den))


def psd(x, fft_size=256, overlap=0.5, window="hann"):
    """Welch-averaged power spectrum in dB, two-sided and fftshifted.

    Bins are scaled so that their linear sum equals the mean power of the
    input (its variance when zero-mean); empty bins are clamped to
    ``DB_FLOOR``. Segments are not detrended, so a DC offset shows up in the
    centre bin.

    Parameters
    ----------
    x : array_like of complex
        Input samples, at least ``fft_size`` long.
    fft_size : int
        Segment and transform length.
    overlap : float
        Fractional overlap between segments, in [0, 1).
    window : str or tuple
        Analysis window understood by :func:`scipy.signal.get_window`.

    Returns
    -------
    ndarray of float, shape (fft_size,)
    """
    x = check_stream(x)
    if x.size < fft_size:
        raise ValueError(f"stream of {x.size} samples is shorter than fft_size={fft_size}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    _, pxx = sps.welch(
        x,
        window=window,
        nperseg=fft_size,
        noverlap=int(round(overlap * fft_size)),
        nfft=fft_size,
        return_onesided=False,
        scaling="spectrum",
        detrend=False,
    )
    pxx = np.fft.fftshift(pxx)
    # "spectrum" scaling preserves tone power; rescale so bins sum to mean power
    win = sps.get_window(window, fft_size)
    pxx = pxx * (np.sum(win) ** 2 / (np.sum(win**2) * fft_size))
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(pxx)
    return np.maximum(out, DB_FLOOR)
