"""Differentiable STFT / ISTFT / log-mel built on the autodiff primitives.

These are the 32-bit training-path counterparts of :mod:`apvoc.dsp`: framing
plus DFT basis matmuls instead of FFTs, so gradients flow to the waveform.
Bases are cached per (config, dtype).
"""

from __future__ import annotations

import numpy as np

import apvoc.autodiff as ad
from apvoc.autodiff import Tensor
from apvoc.dsp import StftConfig, overlap_add_normalizer

_BASES: dict[tuple[StftConfig, str], "SpectralBases"] = {}


class SpectralBases:
    """Window, forward/inverse DFT matrices, and cached OLA normalizers."""

    def __init__(self, cfg: StftConfig, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        n, bins = cfg.n_fft, cfg.bins
        k = np.arange(bins)[None, :]
        t = np.arange(n)[:, None]
        ang = 2.0 * np.pi * k * t / n
        self.window = Tensor(cfg.window_values()[None, :].astype(dtype))
        self.fwd_cos = Tensor(np.cos(ang).astype(dtype))
        self.fwd_sin = Tensor((-np.sin(ang)).astype(dtype))
        # inverse: x_n = (1/n) * sum_k c_k (a_k cos - b_k sin); c = 2 except DC
        # and Nyquist, whose imaginary parts carry no signal and are ignored.
        scale = np.full(bins, 2.0 / n)
        scale[0] = scale[-1] = 1.0 / n
        self.inv_cos = Tensor((scale[:, None] * np.cos(ang.T)).astype(dtype))
        inv_sin = -scale[:, None] * np.sin(ang.T)
        inv_sin[0] = 0.0
        inv_sin[-1] = 0.0
        self.inv_sin = Tensor(inv_sin.astype(dtype))
        self._ola: dict[int, Tensor] = {}

    def ola_normalizer(self, frames: int) -> Tensor:
        if frames not in self._ola:
            den = np.maximum(overlap_add_normalizer(self.cfg, frames), 1e-10)
            self._ola[frames] = Tensor(den.astype(self.dtype))
        return self._ola[frames]


def bases_for(cfg: StftConfig, dtype=np.float32) -> SpectralBases:
    key = (cfg, np.dtype(dtype).str)
    if key not in _BASES:
        _BASES[key] = SpectralBases(cfg, dtype)
    return _BASES[key]


def stft_pair(x: Tensor, cfg: StftConfig) -> tuple[Tensor, Tensor]:
    """Centered STFT of a 1-D waveform tensor -> (real, imag), frames x bins."""
    if not cfg.centered:
        raise ValueError("the differentiable path implements centered analysis only")
    bases = bases_for(cfg, x.dtype)
    samples = x.shape[0]
    frames = cfg.frame_count(samples)
    left = cfg.n_fft // 2
    right = max(0, (frames - 1) * cfg.hop + cfg.n_fft - samples - left)
    padded = ad.pad(x, left, right, mode="reflect")
    fr = ad.frame(padded, cfg.n_fft, cfg.hop)
    if fr.shape[0] > frames:
        fr = ad.slice_(fr, (slice(0, frames), slice(None)))
    fw = ad.mul(fr, bases.window)
    return ad.matmul(fw, bases.fwd_cos), ad.matmul(fw, bases.fwd_sin)


def istft_wave(real: Tensor, imag: Tensor, cfg: StftConfig) -> Tensor:
    """Window-square-normalized OLA inverse -> waveform of frames * hop."""
    bases = bases_for(cfg, real.dtype)
    frames = real.shape[0]
    seg = ad.add(ad.matmul(real, bases.inv_cos), ad.matmul(imag, bases.inv_sin))
    seg = ad.mul(seg, bases.window)
    buf = ad.div(ad.overlap_add(seg, cfg.hop), bases.ola_normalizer(frames))
    start = cfg.n_fft // 2
    return ad.slice_(buf, slice(start, start + frames * cfg.hop))


def magnitude_pair(real: Tensor, imag: Tensor, guard: float = 1e-24) -> Tensor:
    """sqrt(real^2 + imag^2) with a tiny guard so the gradient stays finite."""
    return ad.sqrt(ad.add(ad.add(ad.mul(real, real), ad.mul(imag, imag)), guard))


def log_mel(x: Tensor, mel_weights_t: Tensor, cfg: StftConfig, amp_floor: float) -> Tensor:
    """Log mel energies of a waveform tensor, frames x n_mels."""
    real, imag = stft_pair(x, cfg)
    mel = ad.matmul(magnitude_pair(real, imag), mel_weights_t)
    return ad.log(ad.clamp_min(mel, amp_floor))


def mel_weights_tensor(weights: np.ndarray, dtype=np.float32) -> Tensor:
    """Transposed filterbank weights as a constant tensor (bins x n_mels)."""
    return Tensor(weights.T.astype(dtype))
