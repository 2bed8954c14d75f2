"""OFDM packet construction and demodulation with 802.11g-like numerology.

Subcarriers are addressed by signed index ``-M/2 .. M/2-1``; grids are stored
in FFT bin order (index ``m % M``). Time symbols carry the mandatory L-sample
cyclic prefix and are scaled so a fully loaded packet has unit mean power.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ._validation import check_bits, check_count, check_positive, check_stream
from .constellation import Constellation

_PILOT_INDICES_80211 = (-21, -7, 7, 21)
_PILOT_VALUES_80211 = (1.0, 1.0, 1.0, -1.0)
_PREAMBLE_SEED = 0x80211


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology.

    Parameters
    ----------
    m : int
        Transform size (number of subcarriers including nulls).
    l : int
        Mandatory cyclic-prefix length, ``l < m``.
    data_subcarriers, pilot_subcarriers : tuple of int
        Signed subcarrier indices; everything else is null.
    pilot_values : tuple of complex
        Fixed pilot symbols, one per pilot subcarrier.
    constellation : Constellation or str
    sample_rate_hz : float
    fft_backoff : int
        Samples by which the receiver's FFT window starts early, inside the
        cyclic prefix. Keeps the window edge away from the transmit taper.
    """

    m: int = 64
    l: int = 16
    data_subcarriers: tuple = ()
    pilot_subcarriers: tuple = _PILOT_INDICES_80211
    pilot_values: tuple = _PILOT_VALUES_80211
    constellation: Constellation = Constellation.QAM64
    sample_rate_hz: float = 20e6
    fft_backoff: int = 4

    def __post_init__(self):
        check_count(self.m, "m", 2)
        check_count(self.l, "l", 1)
        if self.l >= self.m:
            raise ValueError(f"cyclic prefix l={self.l} must be shorter than m={self.m}")
        check_positive(self.sample_rate_hz, "sample_rate_hz")
        check_count(self.fft_backoff, "fft_backoff", 0)
        if self.fft_backoff > self.l:
            raise ValueError("fft_backoff cannot exceed the cyclic prefix")
        object.__setattr__(self, "constellation", Constellation.parse(self.constellation))
        object.__setattr__(self, "data_subcarriers", tuple(int(i) for i in self.data_subcarriers))
        object.__setattr__(self, "pilot_subcarriers", tuple(int(i) for i in self.pilot_subcarriers))
        object.__setattr__(self, "pilot_values", tuple(complex(v) for v in self.pilot_values))
        if len(self.pilot_values) != len(self.pilot_subcarriers):
            raise ValueError("need one pilot value per pilot subcarrier")
        if not self.data_subcarriers:
            raise ValueError("at least one data subcarrier is required")
        used = self.data_subcarriers + self.pilot_subcarriers
        lo, hi = -(self.m // 2), self.m - self.m // 2 - 1
        if any(i < lo or i > hi for i in used):
            raise ValueError(f"subcarrier indices must lie in [{lo}, {hi}]")
        if len(set(used)) != len(used):
            raise ValueError("data and pilot subcarriers overlap")

    @classmethod
    def ieee80211g(cls, constellation="QAM64", **kwargs):
        """802.11g profile: M=64, L=16, 48 data + 4 pilot subcarriers, 20 Msps."""
        pilots = set(_PILOT_INDICES_80211)
        data = tuple(i for i in range(-26, 27) if i != 0 and i not in pilots)
        return cls(m=64, l=16, data_subcarriers=data, constellation=constellation, **kwargs)

    @classmethod
    def toy(cls, m, l, constellation="QPSK", **kwargs):
        """Small numerology with every non-DC subcarrier carrying data, no pilots."""
        data = tuple(i for i in range(-(m // 2), m - m // 2) if i != 0)
        kwargs.setdefault("fft_backoff", 0)
        return cls(m=m, l=l, data_subcarriers=data, pilot_subcarriers=(), pilot_values=(),
                   constellation=constellation, **kwargs)

    def with_constellation(self, constellation):
        return replace(self, constellation=Constellation.parse(constellation))

    @property
    def k_sym(self):
        """Symbol length including the mandatory prefix."""
        return self.m + self.l

    @cached_property
    def data_bins(self):
        return np.array(self.data_subcarriers, dtype=np.int64) % self.m

    @cached_property
    def pilot_bins(self):
        return np.array(self.pilot_subcarriers, dtype=np.int64) % self.m

    @cached_property
    def occupied_subcarriers(self):
        return tuple(sorted(self.data_subcarriers + self.pilot_subcarriers))

    @cached_property
    def occupied_bins(self):
        return np.array(self.occupied_subcarriers, dtype=np.int64) % self.m

    @cached_property
    def null_bins(self):
        mask = np.ones(self.m, dtype=bool)
        mask[self.occupied_bins] = False
        return np.flatnonzero(mask)

    @property
    def bits_per_ofdm_symbol(self):
        return len(self.data_subcarriers) * self.constellation.bits_per_symbol

    @property
    def tx_scale(self):
        """Factor applied after the inverse FFT so time samples have unit power."""
        return self.m / np.sqrt(len(self.occupied_subcarriers))

    def n_symbols_for(self, n_bits):
        return -(-int(n_bits) // self.bits_per_ofdm_symbol)

    def samples_to_seconds(self, n):
        return n / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class OfdmPacket:
    """N OFDM symbols described by their frequency grids.

    ``grids[p]`` holds symbol p in FFT bin order; ``core[p]`` is its scaled
    M-point inverse transform. Time samples at any index (prefix, suffix or
    the window's extended region) come from the periodic extension of
    ``core``.
    """

    cfg: OfdmConfig
    grids: np.ndarray = field(repr=False)
    payload_bits: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        grids = np.atleast_2d(np.asarray(self.grids, dtype=np.complex128))
        if grids.ndim != 2 or grids.shape[1] != self.cfg.m or grids.shape[0] == 0:
            raise ValueError(f"grids must have shape (N>=1, {self.cfg.m}), got {grids.shape}")
        object.__setattr__(self, "grids", grids)

    @property
    def n_symbols(self):
        return self.grids.shape[0]

    @cached_property
    def core(self):
        return np.fft.ifft(self.grids, axis=1) * self.cfg.tx_scale

    def extended(self, index):
        """Samples o_p[i] for every symbol p at the given (signed) indices i."""
        index = np.asarray(index)
        return self.core[:, index % self.cfg.m]

    @property
    def time_symbols(self):
        """(N, K) array of o_p[k] for k = -L .. M-1."""
        return self.extended(np.arange(-self.cfg.l, self.cfg.m))


@dataclass(frozen=True, eq=False)
class Preamble:
    """Short field (10 x 16-sample repeats) followed by a long field made of a
    2L guard and two identical training symbols."""

    cfg: OfdmConfig
    short_field: np.ndarray = field(repr=False)
    long_field: np.ndarray = field(repr=False)
    training_grid: np.ndarray = field(repr=False)
    training_scale: float = 1.0

    @property
    def samples(self):
        return np.concatenate([self.short_field, self.long_field])

    def __len__(self):
        return self.short_field.size + self.long_field.size

    @property
    def short_period(self):
        return self.cfg.m // 4

    @property
    def long_guard(self):
        return 2 * self.cfg.l

    @property
    def training_offsets(self):
        """Start indices of the two training symbols relative to the preamble."""
        first = self.short_field.size + self.long_guard
        return first, first + self.cfg.m


def _pad_bits(bits, cfg):
    n_sym = cfg.n_symbols_for(bits.size)
    padded = np.zeros(n_sym * cfg.bits_per_ofdm_symbol, dtype=np.uint8)
    padded[: bits.size] = bits
    return padded


def _build_grids(data_points, cfg):
    data_points = np.asarray(data_points).reshape(-1, len(cfg.data_subcarriers))
    grids = np.zeros((data_points.shape[0], cfg.m), dtype=np.complex128)
    grids[:, cfg.data_bins] = data_points
    if cfg.pilot_subcarriers:
        grids[:, cfg.pilot_bins] = np.array(cfg.pilot_values)
    return grids


def modulate(bits, cfg):
    """Map bits onto OFDM symbols, zero-padding the last symbol."""
    bits = _pad_bits(check_bits(bits), cfg)
    points = cfg.constellation.map(bits)
    return OfdmPacket(cfg, _build_grids(points, cfg), payload_bits=bits)


def remodulate(hard_grids, cfg):
    """Rebuild a clean packet from decided grids (re-sliced, pilots restored)."""
    hard_grids = np.asarray(hard_grids, dtype=np.complex128)
    if hard_grids.size == 0:
        raise ValueError("no grids to remodulate")
    hard_grids = np.atleast_2d(hard_grids)
    bits = cfg.constellation.demap(hard_grids[:, cfg.data_bins])
    return OfdmPacket(cfg, _build_grids(cfg.constellation.map(bits), cfg), payload_bits=bits)


def serialize(pkt):
    """Abut the prefixed time symbols: N*K samples, no windowing."""
    return pkt.time_symbols.ravel()


def generate_preamble(cfg):
    """Deterministic preamble for sync, CFO and channel estimation."""
    rng = np.random.default_rng(_PREAMBLE_SEED)
    m = cfg.m
    occ = np.array(cfg.occupied_subcarriers)

    # short field: every 4th occupied subcarrier -> period M/4
    short_sc = occ[(occ % 4 == 0) & (occ != 0)]
    short_grid = np.zeros(m, dtype=np.complex128)
    short_grid[short_sc % m] = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, short_sc.size)))
    short_sym = np.fft.ifft(short_grid)
    short_sym /= np.sqrt(np.mean(np.abs(short_sym) ** 2))
    period = m // 4
    short_field = np.tile(short_sym[:period], 10)

    training = np.zeros(m, dtype=np.complex128)
    training[occ % m] = 1.0 - 2.0 * rng.integers(0, 2, occ.size)
    core = np.fft.ifft(training) * cfg.tx_scale
    long_field = np.concatenate([core[-2 * cfg.l:], core, core])
    return Preamble(cfg, short_field, long_field, training, cfg.tx_scale)


def equalize(rx, chan_est, cfo_est, cfg, n_symbols=None, start_index=0):
    """CFO-correct, strip prefixes, FFT and divide by the channel estimate.

    Returns the (N, M) equalized grids before common-phase correction.
    """
    rx = check_stream(rx, "rx")
    k_sym = cfg.k_sym
    if n_symbols is None:
        n_symbols = rx.size // k_sym
    n_symbols = check_count(n_symbols, "n_symbols", 1)
    if rx.size < n_symbols * k_sym:
        raise ValueError(f"stream of {rx.size} samples holds fewer than {n_symbols} symbols")
    h = np.asarray(chan_est.freq_response)
    if np.any(np.abs(h[cfg.occupied_bins]) == 0):
        raise ValueError("channel estimate is zero on an occupied subcarrier")

    rx = cfo_est.correct(rx[: n_symbols * k_sym], start_index)
    d = cfg.fft_backoff
    blocks = rx.reshape(n_symbols, k_sym)[:, cfg.l - d: cfg.l - d + cfg.m]
    spec = np.fft.fft(blocks, axis=1) / cfg.tx_scale
    if d:
        spec *= np.exp(2j * np.pi * np.arange(cfg.m) * d / cfg.m)
    return spec / np.where(h == 0, 1.0, h)


def demodulate(rx, chan_est, cfo_est, cfg, n_symbols=None, start_index=0):
    """Equalize, remove pilot-tracked common phase error and slice.

    Parameters
    ----------
    rx : array_like of complex
        Samples aligned to the first payload symbol.
    chan_est : ChannelEstimate
    cfo_est : CfoEstimate
    cfg : OfdmConfig
    n_symbols : int, optional
        Defaults to every whole symbol in `rx`.
    start_index : int
        Absolute sample index of ``rx[0]`` in the frame the CFO phase refers to.

    Returns
    -------
    bits : ndarray of uint8
    hard_grids : ndarray, shape (N, M)
    """
    eq = equalize(rx, chan_est, cfo_est, cfg, n_symbols, start_index)
    if cfg.pilot_subcarriers:
        ref = np.array(cfg.pilot_values)
        cpe = np.angle(eq[:, cfg.pilot_bins] @ ref.conj())
        eq = eq * np.exp(-1j * cpe)[:, None]
    decided = eq[:, cfg.data_bins]
    bits = cfg.constellation.demap(decided)
    hard = _build_grids(cfg.constellation.map(bits), cfg)
    return bits, hard
