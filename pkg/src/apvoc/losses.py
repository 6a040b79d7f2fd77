"""Training objectives.

Spectral terms: amplitude MSE, three anti-wrapped phase distances
(instantaneous, frequency-difference, time-difference), an STFT-consistency
projection plus real/imag L1. Waveform terms: log-mel L1, feature matching
over discriminator activations, and hinge adversarial losses (a
least-squares variant exists behind a flag). The generator total is the
exact weighted sum of the four groups.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

import apvoc.autodiff as ad
from apvoc.autodiff import AutodiffError, Tensor, as_tensor
from apvoc.dsp import (
    ComplexSpectrogram,
    MelFilterbank,
    StftConfig,
    Waveform,
    istft,
    mel_spectrogram,
    stft,
)
from apvoc.spectral import log_mel, mel_weights_tensor


@dataclass(frozen=True)
class LossWeights:
    """Weights of the four generator loss groups.

    Defaults are UNVERIFIED-DEFAULT configuration values; override freely.
    Nothing in the acceptance suite depends on them.
    """

    amplitude: float = 45.0
    phase: float = 100.0
    stft: float = 20.0
    waveform: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {f.name} must be finite and >= 0")


@dataclass
class LossReport:
    """Named scalar components of one training step."""

    total: float = 0.0
    amplitude: float = 0.0
    phase: float = 0.0
    phase_ip: float = 0.0
    phase_gd: float = 0.0
    phase_ptd: float = 0.0
    stft: float = 0.0
    stft_consistency: float = 0.0
    stft_real_l1: float = 0.0
    stft_imag_l1: float = 0.0
    waveform: float = 0.0
    waveform_mel: float = 0.0
    waveform_fm: float = 0.0
    waveform_adv: float = 0.0
    discriminator: float = 0.0

    def log_line(self, step: int, lr: float) -> str:
        return (
            f"step={step} lr={lr:.8g} L_G={self.total:.6g} "
            f"L_A={self.amplitude:.6g} L_P={self.phase:.6g} "
            f"L_S={self.stft:.6g} L_W={self.waveform:.6g} "
            f"L_D={self.discriminator:.6g}"
        )

    def first_nonfinite(self) -> str | None:
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                return f.name
        return None

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def _pair(name: str, pred, target) -> tuple[Tensor, Tensor]:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise AutodiffError(
            f"{name}: shape mismatch {pred.shape} vs {target.shape}"
        )
    return pred, target


# ---------------------------------------------------------------------------
# spectral losses
# ---------------------------------------------------------------------------


def amplitude_loss(pred, target) -> Tensor:
    """Mean squared error between log-amplitude spectra."""
    pred, target = _pair("amplitude_loss", pred, target)
    diff = ad.sub(pred, target)
    return ad.mean(ad.mul(diff, diff))


def phase_loss(pred, target) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Anti-wrapped phase distances; returns (total, ip, gd, ptd).

    ip compares phases directly; gd and ptd compare first differences along
    the bin and frame axes (no wrap-around at edges). A size-1 axis
    contributes a zero term.
    """
    pred, target = _pair("phase_loss", pred, target)
    ip = ad.mean(ad.anti_wrap(ad.sub(pred, target)))

    def axis_diff(t: Tensor, axis: int) -> Tensor:
        if axis == 1:
            hi = ad.slice_(t, (slice(None), slice(1, None)))
            lo = ad.slice_(t, (slice(None), slice(None, -1)))
        else:
            hi = ad.slice_(t, slice(1, None))
            lo = ad.slice_(t, slice(None, -1))
        return ad.sub(hi, lo)

    frames, bins = pred.shape
    zero = Tensor(np.zeros((), dtype=pred.dtype))
    gd = (
        ad.mean(ad.anti_wrap(ad.sub(axis_diff(pred, 1), axis_diff(target, 1))))
        if bins > 1
        else zero
    )
    ptd = (
        ad.mean(ad.anti_wrap(ad.sub(axis_diff(pred, 0), axis_diff(target, 0))))
        if frames > 1
        else zero
    )
    return ad.add(ad.add(ip, gd), ptd), ip, gd, ptd


def consistency_projection(real_data: np.ndarray, imag_data: np.ndarray,
                           cfg: StftConfig) -> ComplexSpectrogram:
    """Project a spectrogram onto the set of consistent ones: stft(istft(s)).

    The projection target is treated as a constant (no gradient flows
    through it), mirroring a stop-gradient interpretation.
    """
    spec = ComplexSpectrogram(np.asarray(real_data, dtype=np.float64),
                              np.asarray(imag_data, dtype=np.float64))
    return stft(istft(spec, cfg), cfg)


def stft_spectrum_loss(pred_real, pred_imag, target_real, target_imag,
                       cfg: StftConfig,
                       projection_cache: dict | None = None
                       ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Consistency MSE plus real/imag L1 against the target spectrum.

    Returns (total, consistency, real_l1, imag_l1). The consistent spectrum
    is a stop-gradient constant; ``projection_cache`` lets a finite-difference
    harness freeze it at the unperturbed point, which is the objective whose
    gradient the training step actually follows.
    """
    pred_real, target_real = _pair("stft_spectrum_loss", pred_real, target_real)
    pred_imag, target_imag = _pair("stft_spectrum_loss", pred_imag, target_imag)
    if projection_cache is not None and "projection" in projection_cache:
        proj = projection_cache["projection"]
    else:
        proj = consistency_projection(pred_real.data, pred_imag.data, cfg)
        if projection_cache is not None:
            projection_cache["projection"] = proj
    dr = ad.sub(pred_real, Tensor(proj.real.astype(pred_real.dtype)))
    di = ad.sub(pred_imag, Tensor(proj.imag.astype(pred_imag.dtype)))
    consistency = ad.mul(
        ad.add(ad.mean(ad.mul(dr, dr)), ad.mean(ad.mul(di, di))), 0.5
    )
    real_l1 = ad.mean(ad.absolute(ad.sub(pred_real, target_real)))
    imag_l1 = ad.mean(ad.absolute(ad.sub(pred_imag, target_imag)))
    return ad.add(ad.add(consistency, real_l1), imag_l1), consistency, real_l1, imag_l1


# ---------------------------------------------------------------------------
# waveform losses
# ---------------------------------------------------------------------------


def mel_loss(pred_w, target_w, fb: MelFilterbank, cfg: StftConfig = StftConfig(),
             amp_floor: float = 1e-5) -> Tensor:
    """L1 distance between log-mel spectrograms of two equal-length waveforms.

    ``pred_w`` may be a graph Tensor (training path) or a Waveform; the
    target is always treated as a constant.
    """
    target = target_w.samples if isinstance(target_w, Waveform) else np.asarray(target_w)
    pred_is_tensor = isinstance(pred_w, Tensor)
    pred_len = pred_w.shape[0] if pred_is_tensor else len(pred_w.samples)
    if pred_len != len(target):
        raise AutodiffError(
            f"mel_loss: length mismatch {pred_len} vs {len(target)}"
        )
    sr = target_w.sample_rate if isinstance(target_w, Waveform) else None
    target_mel = mel_spectrogram(Waveform(target, sr or 22050), fb, cfg, amp_floor).values
    if pred_is_tensor:
        weights_t = mel_weights_tensor(fb.weights, pred_w.dtype)
        pred_mel = log_mel(pred_w, weights_t, cfg, amp_floor)
        return ad.mean(ad.absolute(ad.sub(pred_mel, Tensor(target_mel.astype(pred_w.dtype)))))
    pred_mel = mel_spectrogram(pred_w, fb, cfg, amp_floor).values
    return Tensor(np.mean(np.abs(pred_mel - target_mel)))


def feature_matching_loss(feats_real, feats_fake) -> Tensor:
    """Per-layer mean L1 between activations, averaged within each sub and
    summed over subs. Real features are constants."""
    if not feats_real or not feats_fake or len(feats_real) != len(feats_fake):
        raise AutodiffError(
            f"feature_matching_loss: got {len(feats_real)} real vs "
            f"{len(feats_fake)} fake sub-discriminator feature lists"
        )
    total = None
    for sub_real, sub_fake in zip(feats_real, feats_fake):
        if not sub_real or len(sub_real) != len(sub_fake):
            raise AutodiffError(
                "feature_matching_loss: feature list structure mismatch"
            )
        sub_total = None
        for fr, ff in zip(sub_real, sub_fake):
            fr_const = fr.data if isinstance(fr, Tensor) else np.asarray(fr)
            if fr_const.shape != ff.shape:
                raise AutodiffError(
                    f"feature_matching_loss: feature shapes {fr_const.shape} "
                    f"vs {ff.shape}"
                )
            term = ad.mean(ad.absolute(ad.sub(ff, Tensor(fr_const))))
            sub_total = term if sub_total is None else ad.add(sub_total, term)
        sub_mean = ad.mul(sub_total, 1.0 / len(sub_real))
        total = sub_mean if total is None else ad.add(total, sub_mean)
    return total


def gan_loss_generator(fake_scores) -> Tensor:
    """Hinge generator loss: mean over subs of mean(max(0, 1 - score))."""
    if not fake_scores:
        raise AutodiffError("gan_loss_generator: empty score list")
    total = None
    for s in fake_scores:
        term = ad.mean(ad.relu(ad.sub(1.0, as_tensor(s))))
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(fake_scores))


def gan_loss_discriminator(real_scores, fake_scores) -> Tensor:
    """Hinge discriminator loss:
    mean over subs of mean(max(0, 1 - real)) + mean(max(0, 1 + fake))."""
    if len(real_scores) != len(fake_scores) or not real_scores:
        raise AutodiffError(
            f"gan_loss_discriminator: {len(real_scores)} real vs "
            f"{len(fake_scores)} fake score lists"
        )
    total = None
    for r, f in zip(real_scores, fake_scores):
        term = ad.add(
            ad.mean(ad.relu(ad.sub(1.0, as_tensor(r)))),
            ad.mean(ad.relu(ad.add(1.0, as_tensor(f)))),
        )
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(real_scores))


def gan_loss_generator_ls(fake_scores) -> Tensor:
    """Least-squares variant (config flag), smoke-level only."""
    if not fake_scores:
        raise AutodiffError("gan_loss_generator_ls: empty score list")
    total = None
    for s in fake_scores:
        d = ad.sub(as_tensor(s), 1.0)
        term = ad.mean(ad.mul(d, d))
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(fake_scores))


def gan_loss_discriminator_ls(real_scores, fake_scores) -> Tensor:
    if len(real_scores) != len(fake_scores) or not real_scores:
        raise AutodiffError("gan_loss_discriminator_ls: score list mismatch")
    total = None
    for r, f in zip(real_scores, fake_scores):
        dr = ad.sub(as_tensor(r), 1.0)
        fa = as_tensor(f)
        term = ad.add(ad.mean(ad.mul(dr, dr)), ad.mean(ad.mul(fa, fa)))
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(real_scores))


# ---------------------------------------------------------------------------
# totals
# ---------------------------------------------------------------------------


def generator_total(parts: dict, weights: LossWeights) -> tuple[Tensor, LossReport]:
    """Exact weighted sum of the four loss groups plus a filled report.

    ``parts`` holds Tensors under the keys amplitude, phase, phase_ip,
    phase_gd, phase_ptd, stft, stft_consistency, stft_real_l1, stft_imag_l1,
    waveform_mel, waveform_fm, waveform_adv.
    """

    def val(key) -> float:
        v = parts.get(key)
        if v is None:
            return 0.0
        return float(v.data) if isinstance(v, Tensor) else float(v)

    def tens(key) -> Tensor:
        v = parts.get(key)
        return as_tensor(v if v is not None else 0.0)

    waveform = ad.add(ad.add(tens("waveform_mel"), tens("waveform_fm")),
                      tens("waveform_adv"))
    total = ad.add(
        ad.add(ad.mul(tens("amplitude"), weights.amplitude),
               ad.mul(tens("phase"), weights.phase)),
        ad.add(ad.mul(tens("stft"), weights.stft),
               ad.mul(waveform, weights.waveform)),
    )
    report = LossReport(
        total=float(total.data),
        amplitude=val("amplitude"),
        phase=val("phase"),
        phase_ip=val("phase_ip"),
        phase_gd=val("phase_gd"),
        phase_ptd=val("phase_ptd"),
        stft=val("stft"),
        stft_consistency=val("stft_consistency"),
        stft_real_l1=val("stft_real_l1"),
        stft_imag_l1=val("stft_imag_l1"),
        waveform=float(waveform.data),
        waveform_mel=val("waveform_mel"),
        waveform_fm=val("waveform_fm"),
        waveform_adv=val("waveform_adv"),
    )
    return total, report
