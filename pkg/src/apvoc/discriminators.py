"""Adversarial ensemble: period discriminators over reshaped waveforms plus
resolution discriminators over amplitude spectrograms, each exposing every
intermediate activation for the feature-matching loss.

Period subs follow the HiFi-GAN convention (stacked (5,1) strided 2-D convs
over the waveform folded to length/p x p). Resolution subs compute a
magnitude spectrogram at their own STFT setting and run strided 2-D convs
over it; phase is never used. No weight normalization anywhere.
"""

from __future__ import annotations

import numpy as np

import apvoc.autodiff as ad
from apvoc.autodiff import AutodiffError, Tensor
from apvoc.blocks import Conv2d, Module, assign_parameter_names
from apvoc.dsp import StftConfig, Waveform, stft
from apvoc.spectral import magnitude_pair, stft_pair

LEAKY_SLOPE = 0.1

DEFAULT_PERIODS = (2, 3, 5, 7, 11)
DEFAULT_RESOLUTIONS = ((512, 128, 512), (1024, 256, 1024), (2048, 512, 2048))
FULL_MPD_CHANNELS = (32, 128, 512, 1024, 1024)
FULL_MRD_CHANNELS = (32, 64, 128, 256, 512)
DESK_MPD_CHANNELS = (4, 16, 32, 64, 64)
DESK_MRD_CHANNELS = (4, 8, 16, 16, 16)


class PeriodSub(Module):
    """One sub-discriminator scoring the waveform folded at a fixed period."""

    def __init__(self, period: int, channels, rng, *, kernel=5, dtype=np.float32):
        self.period = period
        pad = (kernel - 1) // 2
        self.convs = []
        prev = 1
        for i, ch in enumerate(channels):
            stride = 3 if i < len(channels) - 1 else 1
            self.convs.append(Conv2d(prev, ch, (kernel, 1), rng,
                                     stride=(stride, 1), padding=(pad, 0),
                                     dtype=dtype))
            prev = ch
        self.post = Conv2d(prev, 1, (3, 1), rng, padding=(1, 0), dtype=dtype)

    def __call__(self, wave: Tensor):
        n = wave.shape[0]
        rem = (-n) % self.period
        if rem:
            wave = ad.pad(wave, 0, rem)
        x = ad.reshape(wave, (1, (n + rem) // self.period, self.period))
        feats = []
        for conv in self.convs:
            x = ad.leaky_relu(conv(x), LEAKY_SLOPE)
            feats.append(x)
        score = self.post(x)
        feats.append(score)
        return score, feats


class ResolutionSub(Module):
    """One sub-discriminator scoring an amplitude spectrogram at its own
    STFT resolution."""

    def __init__(self, resolution, channels, rng, *, dtype=np.float32):
        n_fft, hop, win = resolution
        self.cfg = StftConfig(n_fft=n_fft, hop=hop, win_length=win)
        self.convs = []
        prev = 1
        strides = [(1, 1), (1, 2), (1, 2), (1, 2), (1, 1)]
        for ch, stride in zip(channels, strides):
            self.convs.append(Conv2d(prev, ch, (3, 9), rng, stride=stride,
                                     padding=(1, 4), dtype=dtype))
            prev = ch
        self.post = Conv2d(prev, 1, (3, 3), rng, padding=(1, 1), dtype=dtype)

    def amplitude_input(self, samples: np.ndarray) -> np.ndarray:
        """Magnitude spectrogram this sub scores (phase discarded)."""
        return stft(Waveform(samples), self.cfg).magnitude()

    def __call__(self, wave: Tensor):
        real, imag = stft_pair(wave, self.cfg)
        mag = magnitude_pair(real, imag)
        x = ad.reshape(mag, (1,) + mag.shape)
        feats = []
        for conv in self.convs:
            x = ad.leaky_relu(conv(x), LEAKY_SLOPE)
            feats.append(x)
        score = self.post(x)
        feats.append(score)
        return score, feats


class DiscriminatorEnsemble(Module):
    """Ordered period subs followed by resolution subs."""

    def __init__(self, *, periods=DEFAULT_PERIODS,
                 resolutions=DEFAULT_RESOLUTIONS,
                 mpd_channels=FULL_MPD_CHANNELS,
                 mrd_channels=FULL_MRD_CHANNELS,
                 seed=0, dtype=np.float32):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD15C]))
        self.period_subs = [PeriodSub(p, mpd_channels, rng, dtype=dtype)
                            for p in periods]
        self.resolution_subs = [ResolutionSub(r, mrd_channels, rng, dtype=dtype)
                                for r in resolutions]
        self.min_length = max(r.cfg.win_length for r in self.resolution_subs) \
            if self.resolution_subs else 1
        assign_parameter_names(self, "disc.")

    @property
    def subs(self):
        return list(self.period_subs) + list(self.resolution_subs)

    def __len__(self):
        return len(self.period_subs) + len(self.resolution_subs)

    def __call__(self, wave):
        """Score a waveform; returns one (score, feature list) per sub."""
        wave = wave if isinstance(wave, Tensor) else Tensor(np.asarray(wave))
        if wave.ndim != 1:
            raise AutodiffError(f"discriminators expect a 1-D waveform, got {wave.shape}")
        if wave.shape[0] < self.min_length:
            raise AutodiffError(
                f"waveform of {wave.shape[0]} samples is shorter than the "
                f"minimum {self.min_length} required by the largest resolution"
            )
        return [sub(wave) for sub in self.subs]
