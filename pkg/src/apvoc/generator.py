"""The vocoder generator: two parallel towers predict the log-amplitude and
wrapped-phase spectra from a mel-spectrogram at the input frame rate (no
upsampling anywhere), and the waveform is recovered with an inverse STFT.

The phase tower ends in two parallel convolution heads whose outputs act as
pseudo-real/imaginary parts; the wrapped-phase map turns them into a phase
spectrum that is guaranteed to live in (-pi, pi] and is invariant to scaling
both heads by the same positive factor.
"""

from __future__ import annotations

import numpy as np

import apvoc.autodiff as ad
from apvoc.autodiff import AutodiffError, Tensor
from apvoc.blocks import Conv1d, ConvNeXtV2Block, LayerNorm, Module, _trace, \
    assign_parameter_names
from apvoc.dsp import (
    ComplexSpectrogram,
    DEFAULT_SAMPLE_RATE,
    LogAmplitudeSpectrogram,
    PhaseSpectrogram,
    StftConfig,
    Waveform,
    istft,
)
from apvoc.spectral import istft_wave

PRESETS = {
    "full": dict(channels=512, expansion=1536, num_blocks=8),
    "desk": dict(channels=64, expansion=192, num_blocks=4),
}


class _Trunk(Module):
    """Input conv, a cascade of ConvNeXt v2 blocks, and a final layer norm."""

    def __init__(self, n_mels, channels, expansion, num_blocks, rng, *,
                 kernel_size=7, dtype=np.float32):
        self.in_conv = Conv1d(n_mels, channels, kernel_size, rng, dtype=dtype)
        self.blocks = [
            ConvNeXtV2Block(channels, expansion, rng, kernel_size=kernel_size,
                            dtype=dtype)
            for _ in range(num_blocks)
        ]
        self.norm = LayerNorm(channels, dtype=dtype)

    def __call__(self, mel_cf, trace=None, tag=""):
        h = self.in_conv(mel_cf)
        _trace(trace, f"{tag}in_conv", h)
        for i, block in enumerate(self.blocks):
            h = block(h, trace=trace, tag=f"{tag}block{i}.")
            _trace(trace, f"{tag}block{i}", h)
        h = self.norm(h)
        _trace(trace, f"{tag}norm", h)
        return h


class AmplitudePredictor(Module):
    """Mel -> log-amplitude spectrum, channels x frames internally."""

    def __init__(self, n_mels, bins, channels, expansion, num_blocks, rng, *,
                 kernel_size=7, dtype=np.float32):
        self.trunk = _Trunk(n_mels, channels, expansion, num_blocks, rng,
                            kernel_size=kernel_size, dtype=dtype)
        self.out_conv = Conv1d(channels, bins, kernel_size, rng, dtype=dtype)

    def __call__(self, mel_cf, trace=None):
        h = self.trunk(mel_cf, trace=trace, tag="amp.")
        out = self.out_conv(h)
        _trace(trace, "amp.out_conv", out)
        return out


class PhasePredictor(Module):
    """Mel -> wrapped phase via two parallel pseudo-real/imaginary heads."""

    def __init__(self, n_mels, bins, channels, expansion, num_blocks, rng, *,
                 kernel_size=7, dtype=np.float32):
        self.trunk = _Trunk(n_mels, channels, expansion, num_blocks, rng,
                            kernel_size=kernel_size, dtype=dtype)
        self.head_r = Conv1d(channels, bins, kernel_size, rng, dtype=dtype)
        self.head_i = Conv1d(channels, bins, kernel_size, rng, dtype=dtype)

    def head_outputs(self, mel_cf, trace=None):
        h = self.trunk(mel_cf, trace=trace, tag="phase.")
        r = self.head_r(h)
        i = self.head_i(h)
        _trace(trace, "phase.head_r", r)
        _trace(trace, "phase.head_i", i)
        return r, i

    def __call__(self, mel_cf, trace=None):
        r, i = self.head_outputs(mel_cf, trace=trace)
        return ad.wrapped_phase(r, i)


class Vocoder(Module):
    """Parallel amplitude/phase spectrum prediction plus ISTFT synthesis."""

    def __init__(self, *, n_mels=80, stft_cfg: StftConfig = StftConfig(),
                 channels=512, expansion=1536, num_blocks=8, kernel_size=7,
                 seed=0, dtype=np.float32, sample_rate=DEFAULT_SAMPLE_RATE):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E0]))
        self.n_mels = n_mels
        self.stft_cfg = stft_cfg
        self.sample_rate = sample_rate
        self.amp = AmplitudePredictor(n_mels, stft_cfg.bins, channels, expansion,
                                      num_blocks, rng, kernel_size=kernel_size,
                                      dtype=dtype)
        self.phase = PhasePredictor(n_mels, stft_cfg.bins, channels, expansion,
                                    num_blocks, rng, kernel_size=kernel_size,
                                    dtype=dtype)
        assign_parameter_names(self, "gen.")

    @classmethod
    def from_preset(cls, preset: str = "full", **overrides) -> "Vocoder":
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        kwargs = dict(PRESETS[preset])
        kwargs.update(overrides)
        return cls(**kwargs)

    # ------------------------------------------------------------------
    def _mel_to_cf(self, mel) -> Tensor:
        t = mel if isinstance(mel, Tensor) else Tensor(np.asarray(mel))
        if t.ndim != 2 or t.shape[1] != self.n_mels:
            raise AutodiffError(
                f"expected mel of shape (frames, {self.n_mels}), got {t.shape}"
            )
        if not np.all(np.isfinite(t.data)):
            raise AutodiffError("mel input contains non-finite values")
        return ad.transpose(t)

    def amplitude_forward(self, mel, trace=None) -> Tensor:
        """Log-amplitude spectrum, frames x bins."""
        return ad.transpose(self.amp(self._mel_to_cf(mel), trace=trace))

    def phase_forward(self, mel, trace=None) -> Tensor:
        """Wrapped phase spectrum in (-pi, pi], frames x bins."""
        return ad.transpose(self.phase(self._mel_to_cf(mel), trace=trace))

    def spectra_forward(self, mel, trace=None) -> tuple[Tensor, Tensor]:
        mel_cf = self._mel_to_cf(mel)
        log_amp = ad.transpose(self.amp(mel_cf, trace=trace))
        phase = ad.transpose(self.phase(mel_cf, trace=trace))
        return log_amp, phase

    def complex_forward(self, mel, trace=None) -> tuple[Tensor, Tensor]:
        """Reconstructed STFT planes (real, imag), frames x bins."""
        log_amp, phase = self.spectra_forward(mel, trace=trace)
        mag = ad.exp(log_amp)
        return ad.mul(mag, ad.cos(phase)), ad.mul(mag, ad.sin(phase))

    def synthesize_graph(self, mel, trace=None) -> Tensor:
        """Differentiable mel -> waveform of frames * hop samples."""
        real, imag = self.complex_forward(mel, trace=trace)
        return istft_wave(real, imag, self.stft_cfg)

    def generate(self, mel) -> Waveform:
        """Inference synthesis through the 64-bit ISTFT; frames * hop samples."""
        log_amp, phase = self.spectra_forward(mel)
        mag = np.exp(log_amp.data.astype(np.float64))
        ph = phase.data.astype(np.float64)
        spec = ComplexSpectrogram(mag * np.cos(ph), mag * np.sin(ph))
        return istft(spec, self.stft_cfg, self.sample_rate)

    # typed aliases over the dsp domain types ------------------------------
    def predict_log_amplitude(self, mel) -> LogAmplitudeSpectrogram:
        return LogAmplitudeSpectrogram(self.amplitude_forward(mel).data.astype(np.float64))

    def predict_phase(self, mel) -> PhaseSpectrogram:
        return PhaseSpectrogram(self.phase_forward(mel).data.astype(np.float64))
