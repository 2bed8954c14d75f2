"""Channel, carrier-offset and noise impairments.

The full chain follows r = CFO(channel(s)) + noise: the channel is applied
first, then the phase ramp, then additive noise.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy import signal as sps

from ._validation import check_positive, check_stream


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """FIR multipath channel with taps h[0..n-1]."""

    taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=np.complex128))
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("channel needs at least one tap")
        if not np.any(taps):
            raise ValueError("channel taps are all zero")
        object.__setattr__(self, "taps", taps)

    def frequency_response(self, m):
        if self.taps.size > m:
            raise ValueError(f"{self.taps.size} taps do not fit an {m}-point transform")
        return np.fft.fft(self.taps, m)

    def check_fits(self, cfg):
        if self.taps.size > cfg.l:
            raise ValueError(f"{self.taps.size} taps exceed the cyclic prefix L={cfg.l}")
        return self


@dataclass(frozen=True)
class CfoModel:
    """Phase ramp exp(j(omega*k + phi)); omega in rad/sample, phi in rad."""

    omega: float = 0.0
    phi: float = 0.0

    def ramp(self, n, start_index=0):
        k = np.arange(n) + start_index
        return np.exp(1j * (self.omega * k + self.phi))


def apply_channel(x, ch):
    """Linear convolution truncated to the input length (cold start)."""
    x = check_stream(x)
    taps = ch.taps if isinstance(ch, ChannelModel) else ChannelModel(ch).taps
    return sps.lfilter(taps, [1.0], x)


def apply_cfo(x, cfo, start_index=0):
    """Multiply by the CFO phase ramp; `start_index` continues a packet-wide ramp."""
    x = check_stream(x)
    return x * cfo.ramp(x.size, start_index)


def noise_variance_for(signal_power, snr_db):
    return signal_power / 10.0 ** (snr_db / 10.0)


def add_awgn(x, snr_db, seed=None, rng=None, return_noise=False):
    """Add circular complex Gaussian noise at `snr_db` relative to the measured
    power of `x`. ``snr_db=inf`` (or None) returns the input unchanged."""
    x = check_stream(x)
    if snr_db is None or np.isposinf(snr_db):
        noise = np.zeros_like(x)
    else:
        power = float(np.mean(np.abs(x) ** 2)) if x.size else 0.0
        if power <= 0:
            raise ValueError("cannot set an SNR on a zero-power signal")
        if rng is None:
            rng = np.random.default_rng(seed)
        sigma = np.sqrt(noise_variance_for(power, snr_db) / 2.0)
        noise = sigma * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
    y = x + noise
    return (y, noise) if return_noise else y


def _normalized_share(c):
    """E[c_l X_l / sum_k c_k X_k] for iid unit exponentials X."""
    def integrand(s, ci):
        return ci / (1.0 + ci * s) / np.prod(1.0 + c * s)

    return np.array([integrate.quad(integrand, 0.0, np.inf, args=(ci,), limit=200)[0] for ci in c])


@lru_cache(maxsize=32)
def fading_variances(rms_delay_taps, n_taps):
    """Per-tap Gaussian variances whose energy-normalized draws average to the profile.

    Scaling each draw to unit energy skews the ensemble power-delay profile
    toward the weak taps. The returned variances are pre-distorted so that the
    mean of ``|h[l]|^2`` after normalization equals
    ``exp(-l / rms_delay_taps)`` normalized to unit sum.
    """
    target = np.exp(-np.arange(n_taps) / rms_delay_taps)
    target /= target.sum()
    c = target.copy()
    for _ in range(200):
        share = _normalized_share(c)
        if np.max(np.abs(share / target - 1.0)) < 1e-10:
            break
        c = c * target / share
        c /= c.sum()
    c.setflags(write=False)
    return c


def random_channel(profile="exponential_decay", rms_delay_taps=2.0, seed=None, n_taps=16, rng=None):
    """Draw a unit-energy multipath channel.

    ``flat`` returns the single tap [1]. ``exponential_decay`` draws complex
    Gaussian taps over `n_taps` taps and scales each draw to unit energy. The
    tap variances come from :func:`fading_variances`, so the ensemble mean of
    ``|h[l]|^2`` is proportional to ``exp(-l / rms_delay_taps)``.
    """
    if profile == "flat":
        return ChannelModel(np.array([1.0 + 0j]))
    if profile != "exponential_decay":
        raise ValueError(f"unknown channel profile {profile!r}")
    check_positive(rms_delay_taps, "rms_delay_taps")
    if rms_delay_taps > n_taps / 3:
        raise ValueError(f"rms delay {rms_delay_taps} taps exceeds n_taps/3 = {n_taps / 3:.2f}")
    if rng is None:
        rng = np.random.default_rng(seed)
    var = fading_variances(float(rms_delay_taps), int(n_taps))
    taps = np.sqrt(var / 2) * (rng.standard_normal(n_taps) + 1j * rng.standard_normal(n_taps))
    return ChannelModel(taps / np.sqrt(np.sum(np.abs(taps) ** 2)))


def impair(x, channel=None, cfo=None, snr_db=None, rng=None, start_index=0):
    """Apply channel, then CFO, then noise. Returns (received, noise)."""
    y = check_stream(x)
    if channel is not None:
        y = apply_channel(y, channel)
    if cfo is not None:
        y = apply_cfo(y, cfo, start_index)
    return add_awgn(y, snr_db, rng=rng, return_noise=True)

