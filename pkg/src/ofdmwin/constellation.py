"""Gray-coded square constellations with the 802.11 bit-to-level tables."""
from enum import Enum

import numpy as np

# Per-axis Gray levels, indexed by the axis bits read MSB first.
_AXIS_LEVELS = {
    1: np.array([-1, 1]),
    2: np.array([-3, -1, 3, 1]),  # 00 01 10 11
    3: np.array([-7, -5, -1, -3, 7, 5, 1, 3]),  # 000 001 010 011 100 101 110 111
}


class Constellation(Enum):
    QPSK = 2
    QAM16 = 4
    QAM64 = 6

    @property
    def bits_per_symbol(self):
        return self.value

    @property
    def _axis_bits(self):
        return self.value // 2

    @property
    def scale(self):
        """Amplitude normalisation giving unit average symbol energy."""
        return {2: 1 / np.sqrt(2), 4: 1 / np.sqrt(10), 6: 1 / np.sqrt(42)}[self.value]

    @property
    def points(self):
        """All constellation points ordered by their integer bit label."""
        return self.map(_int_to_bits(np.arange(2**self.value), self.value).ravel())

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValueError(f"unknown constellation {value!r}; expected one of {[c.name for c in cls]}")

    def map(self, bits):
        """Map a flat 0/1 array (length a multiple of bits_per_symbol) to points.

        The first half of each symbol's bits selects the in-phase level and the
        second half the quadrature level.
        """
        bits = np.asarray(bits, dtype=np.int64).reshape(-1, self.value)
        nb = self._axis_bits
        weights = 1 << np.arange(nb - 1, -1, -1)
        i_idx = bits[:, :nb] @ weights
        q_idx = bits[:, nb:] @ weights
        levels = _AXIS_LEVELS[nb]
        return (levels[i_idx] + 1j * levels[q_idx]) * self.scale

    def slice(self, symbols):
        """Nearest-point hard decisions, returned as constellation points."""
        return self.map(self.demap(symbols))

    def demap(self, symbols):
        """Nearest-point hard decisions, returned as a flat bit array."""
        symbols = np.asarray(symbols, dtype=np.complex128).ravel() / self.scale
        nb = self._axis_bits
        levels = _AXIS_LEVELS[nb]
        top = 2**nb - 1
        # levels are odd integers -top..top; round to nearest and clip
        def axis(v):
            lv = np.clip(2 * np.floor(v / 2) + 1, -top, top).astype(np.int64)
            lut = np.empty(2 * top + 1, dtype=np.int64)
            lut[levels + top] = np.arange(levels.size)
            return lut[lv + top]

        i_idx = axis(symbols.real)
        q_idx = axis(symbols.imag)
        out = np.concatenate(
            [_int_to_bits(i_idx, nb), _int_to_bits(q_idx, nb)], axis=1
        )
        return out.ravel().astype(np.uint8)


def _int_to_bits(values, width):
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8)
