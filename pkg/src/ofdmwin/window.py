"""Transmit window model and windowed overlap-add of OFDM symbols.

A window is described over symbol-relative indices ``-2L <= i <= M+L-1``:

* ``w_i = 1`` on the flat region ``0 <= i <= M-L-1``;
* ``w_{M-L+j} = alpha[j]`` is the trailing transition (suffix side);
* ``w_{-1-j} = beta[j]`` is the leading transition read backwards from the
  symbol start, so both ``alpha`` and ``beta`` fall from 1 towards 0.

Nothing forces the two transitions to be mirror images.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_positive


@dataclass(frozen=True, eq=False)
class WindowFunction:
    m: int
    l: int
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("alpha", "beta"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != (2 * self.l,):
                raise ValueError(f"{name} must have length 2L={2 * self.l}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_coefficients(cls, coefficients, m, l):
        """Build from the full map over ``-2L .. M+L-1``; the flat region is ignored."""
        c = np.asarray(coefficients, dtype=np.float64)
        if c.shape != (m + 3 * l,):
            raise ValueError(f"expected {m + 3 * l} coefficients, got {c.shape}")
        alpha = c[m + l: m + 3 * l]  # i = M-L .. M+L-1
        beta = c[: 2 * l][::-1]  # i = -1 .. -2L
        return cls(m, l, alpha, beta)

    @classmethod
    def from_params(cls, params, m, l):
        params = np.asarray(params, dtype=np.float64)
        return cls(m, l, params[: 2 * l], params[2 * l:])

    @property
    def params(self):
        """Free coefficients as one vector: alpha followed by beta."""
        return np.concatenate([self.alpha, self.beta])

    @property
    def indices(self):
        return np.arange(-2 * self.l, self.m + self.l)

    @property
    def coefficients(self):
        """w_i for every i in :attr:`indices`."""
        return np.concatenate([self.beta[::-1], np.ones(self.m - self.l), self.alpha])

    def __call__(self, i):
        """Evaluate w_i at arbitrary integer indices (zero off the support)."""
        i = np.asarray(i)
        out = np.zeros(i.shape)
        inside = (i >= -2 * self.l) & (i <= self.m + self.l - 1)
        out[inside] = self.coefficients[i[inside] + 2 * self.l]
        return out

    def clipped(self):
        return WindowFunction(self.m, self.l, np.clip(self.alpha, 0, 1), np.clip(self.beta, 0, 1))

    def transition_samples(self):
        """Number of coefficients strictly between 0 and 1 in (alpha, beta)."""
        inner = lambda a: int(np.count_nonzero((a > 0) & (a < 1)))
        return inner(self.alpha), inner(self.beta)


def rectangular_window(cfg):
    """No windowing: ones on the mandatory symbol ``-L .. M-1``."""
    l = cfg.l
    alpha = np.r_[np.ones(l), np.zeros(l)]
    beta = np.r_[np.ones(l), np.zeros(l)]
    return WindowFunction(cfg.m, l, alpha, beta)


def raised_cosine_samples(transition, m, l):
    """Raised-cosine window with a ``transition``-sample taper at each edge.

    Each taper is centred on a symbol boundary: ``transition // 2`` samples
    extend the prefix backwards and the rest of the falling edge forms the
    suffix. Values are sampled at half-sample offsets so the rising and
    falling halves of adjacent symbols sum to exactly one.
    """
    transition = check_count(transition, "transition", 1)
    if transition > 2 * l:
        raise ValueError(f"transition of {transition} samples exceeds 2L={2 * l}")
    half = transition // 2
    t = (np.arange(transition) + 0.5) / transition
    rise = np.sin(0.5 * np.pi * t) ** 2

    w = np.zeros(m + 3 * l)  # indices -2L .. M+L-1
    off = 2 * l
    w[off - l - half: off + m] = 1.0
    w[off - l - half: off - l - half + transition] = rise
    w[off + m - half: off + m - half + transition] = rise[::-1]
    return WindowFunction.from_coefficients(w, m, l)


def raised_cosine_window(transition_time_s, cfg):
    """Raised-cosine transmit window for a transition time given in seconds."""
    check_positive(transition_time_s, "transition_time_s")
    n = int(round(transition_time_s * cfg.sample_rate_hz))
    if not 1 <= n <= 2 * cfg.l:
        raise ValueError(
            f"{transition_time_s * 1e9:.0f} ns is {n} samples at {cfg.sample_rate_hz:g} Hz; "
            f"need 1..{2 * cfg.l}"
        )
    return raised_cosine_samples(n, cfg.m, cfg.l)


def _check_numerology(w, m, l):
    if (w.m, w.l) != (m, l):
        raise ValueError(f"window numerology (M={w.m}, L={w.l}) does not match (M={m}, L={l})")


def apply_window(pkt, w, circular=True):
    """Overlap-add the windowed, cyclically extended symbols of `pkt`.

    Each output symbol sums the current symbol and the extensions of its two
    neighbours. With ``circular=True`` neighbours are taken modulo N, so the
    first and last symbols feed each other; otherwise contributions from
    beyond the packet edges are dropped.

    Returns
    -------
    ndarray of complex, length N*K
    """
    cfg = pkt.cfg
    _check_numerology(w, cfg.m, cfg.l)
    n, k_sym = pkt.n_symbols, cfg.k_sym
    k = np.arange(-cfg.l, cfg.m)
    out = np.zeros((n, k_sym), dtype=np.complex128)
    p = np.arange(n)
    for q in (-1, 0, 1):
        i = k - q * k_sym
        wi = w(i)
        if not np.any(wi):
            continue
        src = p + q
        if circular:
            valid = p
            src = src % n
        else:
            valid = p[(src >= 0) & (src < n)]
            src = valid + q
        out[valid] += wi * pkt.extended(i)[src]
    return out.ravel()


def _coefficient_map(w, m, l):
    if isinstance(w, WindowFunction):
        _check_numerology(w, m, l)
        return w.coefficients
    c = np.asarray(w, dtype=np.float64)
    if c.shape != (m + 3 * l,):
        raise ValueError(f"coefficient map must have {m + 3 * l} entries, got {c.shape}")
    return c


def window_rms_error(est, truth):
    """RMS coefficient difference over the full support ``-2L .. M+L-1``.

    Either argument may be a :class:`WindowFunction` or a raw coefficient
    map of length M+3L; raw maps may depart from 1 on the flat region.
    """
    if isinstance(truth, WindowFunction):
        m, l = truth.m, truth.l
    elif isinstance(est, WindowFunction):
        m, l = est.m, est.l
    else:
        raise TypeError("at least one argument must be a WindowFunction")
    d = _coefficient_map(est, m, l) - _coefficient_map(truth, m, l)
    return float(np.sqrt(np.mean(d**2)))


def write_window_csv(w, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "coefficient"])
        for i, c in zip(w.indices, w.coefficients):
            writer.writerow([int(i), repr(float(c))])


def read_window_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows[0][0] != "index":
        raise ValueError(f"{path}: missing 'index,coefficient' header")
    idx = np.array([int(r[0]) for r in rows[1:]])
    coef = np.array([float(r[1]) for r in rows[1:]])
    l = -int(idx.min()) // 2
    m = int(idx.max()) + 1 - l
    if l < 1 or not np.array_equal(idx, np.arange(-2 * l, m + l)):
        raise ValueError(f"{path}: indices do not cover a contiguous -2L..M+L-1 range")
    return WindowFunction.from_coefficients(coef, m, l)
