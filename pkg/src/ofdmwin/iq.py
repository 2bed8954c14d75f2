"""Raw IQ recordings: interleaved little-endian cf32 or ci16 files with an
optional JSON sidecar (``<file>.json``) carrying the metadata."""
import json
import os
from dataclasses import dataclass, field

import numpy as np

FORMATS = {
    "cf32le": np.dtype("<f4"),
    "ci16le": np.dtype("<i2"),
}
CI16_FULL_SCALE = 32767.0


class IqFormatError(ValueError):
    pass


@dataclass(eq=False)
class IqRecording:
    samples: np.ndarray = field(repr=False)
    sample_rate_hz: float = 20e6
    center_freq_hz: float = 0.0
    path: str = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.samples.size


def _check_format(fmt):
    if fmt not in FORMATS:
        raise IqFormatError(f"unknown IQ format {fmt!r}; expected one of {sorted(FORMATS)}")
    return FORMATS[fmt]


def save_iq(stream, path, fmt="cf32le", metadata=None):
    """Write complex samples as interleaved I/Q; `metadata` goes to the sidecar."""
    dtype = _check_format(fmt)
    x = np.asarray(stream, dtype=np.complex128).ravel()
    inter = np.empty(2 * x.size, dtype=np.float64)
    inter[0::2] = x.real
    inter[1::2] = x.imag
    if fmt == "ci16le":
        inter = np.clip(np.round(inter * CI16_FULL_SCALE), -32768, 32767)
    inter.astype(dtype).tofile(path)
    if metadata is not None:
        meta = dict(metadata, format=fmt)
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def sidecar_path(path):
    return os.fspath(path) + ".json"


def load_iq(path, fmt="cf32le", sample_rate_hz=None, center_freq_hz=None):
    """Read an interleaved IQ file; sidecar values fill unspecified metadata."""
    dtype = _check_format(fmt)
    meta = {}
    if os.path.exists(sidecar_path(path)):
        with open(sidecar_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("format", fmt) != fmt:
            raise IqFormatError(f"{path}: sidecar says {meta['format']}, asked to read {fmt}")
    size = os.path.getsize(path)
    if size == 0:
        raise IqFormatError(f"{path}: empty file")
    if size % (2 * dtype.itemsize):
        raise IqFormatError(f"{path}: {size} bytes is not a whole number of {fmt} I/Q pairs")
    raw = np.fromfile(path, dtype=dtype)
    if fmt == "ci16le":
        samples = (raw[0::2] + 1j * raw[1::2].astype(np.float64)) / CI16_FULL_SCALE
    else:
        samples = raw[0::2] + 1j * raw[1::2]
        if not np.all(np.isfinite(raw)):
            raise IqFormatError(f"{path}: non-finite samples")
    samples = samples.astype(np.complex128)
    return IqRecording(
        samples,
        sample_rate_hz=float(sample_rate_hz if sample_rate_hz is not None else meta.get("sample_rate_hz", 20e6)),
        center_freq_hz=float(center_freq_hz if center_freq_hz is not None else meta.get("center_freq_hz", 0.0)),
        path=os.fspath(path),
        metadata=meta,
    )
