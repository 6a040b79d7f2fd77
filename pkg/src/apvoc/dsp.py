"""Deterministic (non-learned) signal processing.

Short-time Fourier analysis and resynthesis, mel filterbanks, and the
wrapped-phase helpers shared by feature extraction, the loss system, and the
evaluation metrics.  Everything in this module is pure numpy in 64-bit; the
differentiable 32-bit counterparts used on the training path live in
:mod:`apvoc.spectral`.

Conventions (documented because golden files depend on them):

* STFT is centered by default (an assumption, not a given: flip
  ``StftConfig.centered`` for windows-only analysis): frame ``t`` aligns
  with sample ``t * hop`` and the signal is reflection-padded by
  ``n_fft // 2`` on both sides.
* When centered, ``frames = ceil(len(samples) / hop)``, so a waveform of
  ``k * hop`` samples produces exactly ``k`` frames and ``istft`` returns
  ``frames * hop`` samples.
* The window is periodic Hann by default ("rect" is available, also an
  assumption made configurable); it must satisfy constant-overlap-add of
  the squared window for the configured hop.
* The mel scale is HTK-style (``2595 * log10(1 + f / 700)``) and filter rows
  are not area-normalized.
* Logs are natural logs, floored at ``amp_floor`` (default 1e-5) so they stay
  bounded.

All operations are pure functions of their inputs and safe to call from any
number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
DEFAULT_SAMPLE_RATE = 22050
DEFAULT_AMP_FLOOR = 1e-5


class DspError(ValueError):
    """Raised for invalid signals or inconsistent spectral configuration."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass
class Waveform:
    """Mono waveform with amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DspError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise DspError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise DspError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis parameters for the short-time Fourier transform."""

    n_fft: int = 1024
    hop: int = 256
    win_length: int = 1024
    window: str = "hann"
    centered: bool = True

    def __post_init__(self):
        if not (0 < self.hop <= self.win_length <= self.n_fft):
            raise DspError(
                f"need 0 < hop <= win_length <= n_fft, got "
                f"hop={self.hop} win_length={self.win_length} n_fft={self.n_fft}"
            )
        if self.window not in ("hann", "rect"):
            raise DspError(f"unknown window {self.window!r}")
        _check_cola(self.window_values(), self.hop)

    @property
    def bins(self) -> int:
        return self.n_fft // 2 + 1

    def window_values(self) -> np.ndarray:
        """Window of length n_fft (win_length taps, zero-padded centered)."""
        n = self.win_length
        if self.window == "hann":
            w = 0.5 - 0.5 * np.cos(TWO_PI * np.arange(n) / n)  # periodic Hann
        else:
            w = np.ones(n, dtype=np.float64)
        if n < self.n_fft:
            lpad = (self.n_fft - n) // 2
            w = np.pad(w, (lpad, self.n_fft - n - lpad))
        return w

    def frame_count(self, num_samples: int) -> int:
        if num_samples < 1:
            raise DspError("waveform must contain at least one sample")
        if not self.centered:
            if num_samples < self.n_fft:
                raise DspError(
                    f"uncentered analysis needs at least n_fft={self.n_fft} samples"
                )
            return 1 + (num_samples - self.n_fft) // self.hop
        return -(-num_samples // self.hop)


def _check_cola(window: np.ndarray, hop: int) -> None:
    """Validate constant-overlap-add of the squared window at the given hop."""
    n = len(window)
    frames = 2 * (n // hop) + 4
    den = np.zeros((frames - 1) * hop + n)
    for t in range(frames):
        den[t * hop : t * hop + n] += window**2
    interior = den[n : len(den) - n]
    if interior.size == 0 or np.ptp(interior) > 1e-9 * np.max(interior):
        raise DspError(f"window does not satisfy COLA for hop={hop}")


@dataclass
class ComplexSpectrogram:
    """Frames x bins complex STFT values stored as separate real planes."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise DspError(
                f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}"
            )
        if not (np.all(np.isfinite(self.real)) and np.all(np.isfinite(self.imag))):
            raise DspError("spectrogram contains non-finite values")

    @property
    def shape(self):
        return self.real.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


@dataclass
class LogAmplitudeSpectrogram:
    values: np.ndarray  # frames x bins, natural-log magnitudes


@dataclass
class PhaseSpectrogram:
    values: np.ndarray  # frames x bins, radians in (-pi, pi]


@dataclass
class MelSpectrogram:
    values: np.ndarray  # frames x n_mels, natural-log mel energies


@dataclass
class MelFilterbank:
    """Triangular mel filters evaluated on FFT bin frequencies."""

    weights: np.ndarray  # n_mels x bins
    f_min: float
    f_max: float

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


# ---------------------------------------------------------------------------
# STFT / ISTFT
# ---------------------------------------------------------------------------


def _pad_centered(x: np.ndarray, cfg: StftConfig, frames: int) -> np.ndarray:
    left = cfg.n_fft // 2
    needed = (frames - 1) * cfg.hop + cfg.n_fft
    right = max(0, needed - len(x) - left)
    return np.pad(x, (left, right), mode="reflect")


def _frame_signal(x: np.ndarray, cfg: StftConfig, frames: int) -> np.ndarray:
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop * np.arange(frames)[:, None]
    return x[idx]


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """STFT, frames x bins. Centered analysis (the default) aligns frame t
    with sample t * hop and yields ceil(len / hop) frames; uncentered
    analysis uses only fully covered windows."""
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size < 1:
        raise DspError("cannot transform an empty waveform")
    if not np.all(np.isfinite(x)):
        raise DspError("waveform contains non-finite samples")
    frames = cfg.frame_count(x.size)
    padded = _pad_centered(x, cfg, frames) if cfg.centered else x
    seg = _frame_signal(padded, cfg, frames) * cfg.window_values()[None, :]
    spec = np.fft.rfft(seg, cfg.n_fft, axis=1)
    return ComplexSpectrogram(spec.real, spec.imag)


def overlap_add_normalizer(cfg: StftConfig, frames: int) -> np.ndarray:
    """Per-sample sum of squared synthesis windows over the full OLA buffer."""
    w2 = cfg.window_values() ** 2
    den = np.zeros((frames - 1) * cfg.hop + cfg.n_fft)
    for t in range(frames):
        den[t * cfg.hop : t * cfg.hop + cfg.n_fft] += w2
    return den


def istft(
    s: ComplexSpectrogram,
    cfg: StftConfig = StftConfig(),
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Waveform:
    """Window-square-normalized overlap-add inverse.

    Centered analysis trims the padding, giving exactly frames * hop
    samples; uncentered analysis returns the full (frames-1)*hop + n_fft
    span.
    """
    frames, bins = s.shape
    if bins != cfg.bins:
        raise DspError(f"expected {cfg.bins} bins for n_fft={cfg.n_fft}, got {bins}")
    if frames < 1:
        raise DspError("need at least one frame")
    seg = np.fft.irfft(s.real + 1j * s.imag, cfg.n_fft, axis=1)
    seg *= cfg.window_values()[None, :]
    out = np.zeros((frames - 1) * cfg.hop + cfg.n_fft)
    for t in range(frames):
        out[t * cfg.hop : t * cfg.hop + cfg.n_fft] += seg[t]
    den = np.maximum(overlap_add_normalizer(cfg, frames), 1e-10)
    out /= den
    if not cfg.centered:
        return Waveform(out, sample_rate)
    start = cfg.n_fft // 2
    return Waveform(out[start : start + frames * cfg.hop], sample_rate)


# ---------------------------------------------------------------------------
# wrapped phase
# ---------------------------------------------------------------------------


def phi(r, i):
    """Wrapped phase of a pseudo-complex pair, in (-pi, pi].

    Equivalent to the four-quadrant arctangent away from the negative-real
    boundary, but built from ``arctan`` plus half-plane sign corrections so it
    maps cleanly onto the parallel-estimation output heads.  ``phi(0, 0)`` is
    defined as 0 by convention.
    """
    r = np.asarray(r, dtype=np.float64)
    i = np.asarray(i, dtype=np.float64)
    sgn_i = np.where(i >= 0, 1.0, -1.0)
    sgn_r = np.where(r >= 0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.arctan(i / r) - 0.5 * np.pi * sgn_i * (sgn_r - 1.0)
    out = np.where((r == 0) & (i == 0), 0.0, out)
    # The true value is never exactly -pi; a float output of -pi is rounding
    # from just above it, so fold to the equivalent +pi to keep (-pi, pi].
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def anti_wrap(x):
    """Principal-value angular distance |x - 2*pi*round(x / 2*pi)| in [0, pi].

    Ties in the rounding go away from zero (cosmetic: both choices give the
    same absolute value).
    """
    y = np.asarray(x, dtype=np.float64) / TWO_PI
    r = np.trunc(y + np.copysign(0.5, y))
    out = np.abs(np.asarray(x, dtype=np.float64) - TWO_PI * r)
    return out if out.ndim else float(out)


def log_amplitude(
    s: ComplexSpectrogram, amp_floor: float = DEFAULT_AMP_FLOOR
) -> LogAmplitudeSpectrogram:
    if amp_floor <= 0:
        raise DspError("amp_floor must be positive")
    return LogAmplitudeSpectrogram(np.log(np.maximum(s.magnitude(), amp_floor)))


def phase_of(s: ComplexSpectrogram) -> PhaseSpectrogram:
    return PhaseSpectrogram(phi(s.real, s.imag))


def reconstruct_complex(
    a: LogAmplitudeSpectrogram, p: PhaseSpectrogram
) -> ComplexSpectrogram:
    """Polar-to-rectangular: real = e^a cos(p), imag = e^a sin(p)."""
    if a.values.shape != p.values.shape:
        raise DspError(
            f"amplitude/phase shape mismatch: {a.values.shape} vs {p.values.shape}"
        )
    mag = np.exp(a.values)
    return ComplexSpectrogram(mag * np.cos(p.values), mag * np.sin(p.values))


# ---------------------------------------------------------------------------
# mel filterbank
# ---------------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = 80,
    cfg: StftConfig = StftConfig(),
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    f_min: float = 0.0,
    f_max: float = 8000.0,
) -> MelFilterbank:
    """Triangular HTK-mel filters (peak 1, not area-normalized)."""
    if not (0 <= f_min < f_max <= sample_rate / 2):
        raise DspError(f"need 0 <= f_min < f_max <= nyquist, got {f_min}..{f_max}")
    bin_hz = np.arange(cfg.bins) * sample_rate / cfg.n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bin_hz[None, :] - lo) / (mid - lo)
    down = (hi - bin_hz[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(up, down))
    if np.any(weights.sum(axis=1) == 0):
        raise DspError("mel filterbank has an empty filter row; increase n_fft")
    return MelFilterbank(weights, f_min, f_max)


def mel_spectrogram(
    w: Waveform,
    fb: MelFilterbank,
    cfg: StftConfig = StftConfig(),
    amp_floor: float = DEFAULT_AMP_FLOOR,
) -> MelSpectrogram:
    """Log mel energies of the magnitude spectrogram, frames x n_mels."""
    if fb.weights.shape[1] != cfg.bins:
        raise DspError(
            f"filterbank built for {fb.weights.shape[1]} bins, config has {cfg.bins}"
        )
    mag = stft(w, cfg).magnitude()
    return MelSpectrogram(np.log(np.maximum(mag @ fb.weights.T, amp_floor)))
