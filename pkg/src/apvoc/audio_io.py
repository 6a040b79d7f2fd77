"""WAV file I/O (16-bit PCM mono) and the little-endian array container.

Both formats are documented bit-exactly in docs/formats.md. There is no
resampling anywhere: a sample-rate mismatch is an error, never a silent
degradation.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from apvoc.dsp import Waveform


class AudioIoError(ValueError):
    """Raised for malformed audio files and unsupported encodings."""


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------


def read_wav(path, expected_rate: int | None = None) -> Waveform:
    """Read a RIFF/WAVE file: PCM, 16-bit, mono. Samples scale to [-1, 1]
    by /32768."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioIoError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise AudioIoError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise AudioIoError(f"{path}: missing fmt or data chunk")
    codec, channels, rate, _byte_rate, _align, bits = fmt
    if codec != 1:
        raise AudioIoError(f"{path}: unsupported codec {codec} (need PCM)")
    if bits != 16:
        raise AudioIoError(f"{path}: unsupported bit depth {bits} (need 16)")
    if channels != 1:
        raise AudioIoError(f"{path}: {channels} channels unsupported (need mono)")
    if expected_rate is not None and rate != expected_rate:
        raise AudioIoError(
            f"{path}: sample rate {rate} != configured {expected_rate} "
            "(no resampling)"
        )
    samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w: Waveform):
    """Write 16-bit PCM mono: round-to-nearest of sample * 32768, clamped."""
    ints = np.clip(np.rint(np.asarray(w.samples) * 32768.0), -32768, 32767)
    payload = ints.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# array container (used by the `features` command)
# ---------------------------------------------------------------------------

_ARR_MAGIC = b"APVOCAR1"
_DTYPE_CODES = {1: "<f4", 2: "<f8"}
_DTYPE_TO_CODE = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


def write_array(path, arr: np.ndarray):
    """Little-endian array container: magic, dtype code, ndim, dims, data."""
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_TO_CODE.get(arr.dtype.newbyteorder("<"))
    if code is None:
        raise AudioIoError(f"unsupported array dtype {arr.dtype}")
    blob = bytearray(_ARR_MAGIC)
    blob += struct.pack("<II", code, arr.ndim)
    for dim in arr.shape:
        blob += struct.pack("<Q", dim)
    blob += arr.astype(_DTYPE_CODES[code], copy=False).tobytes()
    Path(path).write_bytes(blob)


def read_array(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != _ARR_MAGIC:
        raise AudioIoError(f"{path}: not an array container")
    code, ndim = struct.unpack_from("<II", data, 8)
    if code not in _DTYPE_CODES:
        raise AudioIoError(f"{path}: unknown dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}Q", data, 16)
    offset = 16 + 8 * ndim
    count = int(np.prod(dims)) if ndim else 1
    arr = np.frombuffer(data, dtype=_DTYPE_CODES[code], count=count, offset=offset)
    return arr.reshape(dims).copy()
