"""Adversarial training loop.

One step updates the discriminator on the hinge loss with the generator
output detached, then updates the generator on the full weighted objective;
both AdamW optimizers step exactly once. Cropping is frame-aligned (crop
starts are multiples of the hop) so mel frames correspond exactly to
waveform samples. Everything derives from a single seed, and a non-finite
loss aborts with the first offending sub-term named.

A trainer owns its graph: the step is single-threaded, and two seeded
trainers in one process produce identical results.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

import apvoc.autodiff as ad
from apvoc.autodiff import Parameter, Tape, Tensor
from apvoc.discriminators import DiscriminatorEnsemble
from apvoc.dsp import (
    MelFilterbank,
    StftConfig,
    Waveform,
    log_amplitude,
    mel_spectrogram,
    phase_of,
    stft,
)
from apvoc.generator import Vocoder
from apvoc.losses import (
    LossReport,
    LossWeights,
    amplitude_loss,
    feature_matching_loss,
    gan_loss_discriminator,
    gan_loss_discriminator_ls,
    gan_loss_generator,
    gan_loss_generator_ls,
    generator_total,
    mel_loss,
    phase_loss,
    stft_spectrum_loss,
)
from apvoc.spectral import istft_wave


class NumericAbort(RuntimeError):
    """Raised when a loss turns non-finite; names the first bad sub-term."""

    def __init__(self, subterm: str, step: int):
        super().__init__(f"non-finite loss sub-term {subterm!r} at step {step}")
        self.subterm = subterm
        self.step = step


class CheckpointError(ValueError):
    """Raised for malformed, truncated, or wrong-version checkpoints."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    crop_samples: int = 8192
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    lr_decay: float = 0.999
    max_steps: int = 1_000_000
    seed: int = 1234
    preset: str = "full"


def lr_schedule(base_lr: float, decay: float, epoch: int) -> float:
    """Exponential decay applied once per epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr * decay**epoch


class AdamW:
    """Decoupled-weight-decay Adam with bias correction."""

    def __init__(self, params: list[Parameter], lr: float = 2e-4,
                 betas=(0.8, 0.99), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if p.grad.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {p.name}")
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_entries(self, prefix: str):
        for p, m, v in zip(self.params, self.m, self.v):
            yield f"{prefix}.m.{p.name}", m
            yield f"{prefix}.v.{p.name}", v


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


class ClipDataset:
    """In-memory clips with seeded, frame-aligned random cropping."""

    def __init__(self, clips: list[Waveform], crop_samples: int, hop: int):
        if not clips:
            raise ValueError("dataset needs at least one clip")
        if crop_samples % hop:
            raise ValueError(f"crop_samples={crop_samples} not a multiple of hop={hop}")
        self.clips = [np.asarray(c.samples, dtype=np.float64) for c in clips]
        self.sample_rate = clips[0].sample_rate
        self.crop_samples = crop_samples
        self.hop = hop

    def __len__(self):
        return len(self.clips)

    def crop(self, index: int, rng: np.random.Generator) -> np.ndarray:
        x = self.clips[index]
        if len(x) < self.crop_samples:
            x = np.pad(x, (0, self.crop_samples - len(x)))
        max_start = (len(x) - self.crop_samples) // self.hop
        start = int(rng.integers(0, max_start + 1)) * self.hop
        return x[start : start + self.crop_samples]

    def epoch_batches(self, rng: np.random.Generator, batch_size: int):
        order = rng.permutation(len(self.clips))
        for i in range(0, len(order), batch_size):
            yield [self.crop(int(j), rng) for j in order[i : i + batch_size]]


@dataclass
class CropTargets:
    """Per-crop ground truth extracted once in 64-bit, stored in 32-bit."""

    mel: np.ndarray
    log_amp: np.ndarray
    phase: np.ndarray
    real: np.ndarray
    imag: np.ndarray
    wave: np.ndarray


def extract_targets(wave: np.ndarray, cfg: StftConfig, fb: MelFilterbank,
                    amp_floor: float, sample_rate: int,
                    dtype=np.float32) -> CropTargets:
    w = Waveform(wave, sample_rate)
    spec = stft(w, cfg)
    return CropTargets(
        mel=mel_spectrogram(w, fb, cfg, amp_floor).values.astype(dtype),
        log_amp=log_amplitude(spec, amp_floor).values.astype(dtype),
        phase=phase_of(spec).values.astype(dtype),
        real=spec.real.astype(dtype),
        imag=spec.imag.astype(dtype),
        wave=wave.astype(dtype),
    )


# ---------------------------------------------------------------------------
# per-item generator objective (also the grad-check surface)
# ---------------------------------------------------------------------------


@dataclass
class GeneratorForward:
    """Graph tensors of one generator pass, shared by both update phases."""

    log_amp: Tensor
    phase: Tensor
    real: Tensor
    imag: Tensor
    fake: Tensor


def generator_forward(voc: Vocoder, mel: np.ndarray) -> GeneratorForward:
    log_amp, phase = voc.spectra_forward(mel)
    mag = ad.exp(log_amp)
    real = ad.mul(mag, ad.cos(phase))
    imag = ad.mul(mag, ad.sin(phase))
    fake = istft_wave(real, imag, voc.stft_cfg)
    return GeneratorForward(log_amp, phase, real, imag, fake)


def spectral_loss_parts(fwd: GeneratorForward, targets: CropTargets,
                        voc: Vocoder, fb: MelFilterbank,
                        amp_floor: float,
                        projection_cache: dict | None = None) -> dict:
    l_amp = amplitude_loss(fwd.log_amp, targets.log_amp)
    l_phase, ip, gd, ptd = phase_loss(fwd.phase, targets.phase)
    l_stft, cons, rl1, il1 = stft_spectrum_loss(
        fwd.real, fwd.imag, targets.real, targets.imag, voc.stft_cfg,
        projection_cache=projection_cache,
    )
    l_mel = mel_loss(fwd.fake, Waveform(targets.wave, voc.sample_rate), fb,
                     voc.stft_cfg, amp_floor)
    return {
        "amplitude": l_amp,
        "phase": l_phase,
        "phase_ip": ip,
        "phase_gd": gd,
        "phase_ptd": ptd,
        "stft": l_stft,
        "stft_consistency": cons,
        "stft_real_l1": rl1,
        "stft_imag_l1": il1,
        "waveform_mel": l_mel,
    }


def adversarial_loss_parts(disc: DiscriminatorEnsemble, fake: Tensor,
                           real_wave: np.ndarray, gan_kind: str) -> dict:
    fake_outs = disc(fake)
    with ad.pause_tape():  # real features are constants; skip recording
        real_outs = disc(Tensor(real_wave))
    l_fm = feature_matching_loss([f for _, f in real_outs],
                                 [f for _, f in fake_outs])
    gen_gan = gan_loss_generator if gan_kind == "hinge" else gan_loss_generator_ls
    return {"waveform_fm": l_fm, "waveform_adv": gen_gan([s for s, _ in fake_outs])}


def generator_loss_parts(voc: Vocoder, disc: DiscriminatorEnsemble,
                         targets: CropTargets, fb: MelFilterbank,
                         amp_floor: float, gan_kind: str = "hinge",
                         projection_cache: dict | None = None) -> dict:
    """All generator loss sub-terms for one crop in one pass (grad-check
    surface; the trainer interleaves the same pieces with the D update)."""
    fwd = generator_forward(voc, targets.mel)
    parts = spectral_loss_parts(fwd, targets, voc, fb, amp_floor,
                                projection_cache=projection_cache)
    parts.update(adversarial_loss_parts(disc, fwd.fake, targets.wave, gan_kind))
    return parts


def _mean_parts(per_item: list[dict]) -> dict:
    keys = per_item[0].keys()
    out = {}
    for k in keys:
        acc = per_item[0][k]
        for item in per_item[1:]:
            acc = ad.add(acc, item[k])
        out[k] = ad.mul(acc, 1.0 / len(per_item))
    return out


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------


class Trainer:
    def __init__(self, voc: Vocoder, disc: DiscriminatorEnsemble,
                 dataset: ClipDataset, fb: MelFilterbank,
                 weights: LossWeights = LossWeights(),
                 train_cfg: TrainConfig = TrainConfig(),
                 amp_floor: float = 1e-5, gan_kind: str = "hinge",
                 config_text: str = ""):
        self.voc = voc
        self.disc = disc
        self.dataset = dataset
        self.fb = fb
        self.weights = weights
        self.cfg = train_cfg
        self.amp_floor = amp_floor
        self.gan_kind = gan_kind
        self.config_text = config_text
        self.opt_g = AdamW(voc.parameters(), train_cfg.lr,
                           (train_cfg.beta1, train_cfg.beta2),
                           weight_decay=train_cfg.weight_decay)
        self.opt_d = AdamW(disc.parameters(), train_cfg.lr,
                           (train_cfg.beta1, train_cfg.beta2),
                           weight_decay=train_cfg.weight_decay)
        self.step = 0
        self.epoch = 0
        self.rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed]))

    @property
    def lr(self) -> float:
        return lr_schedule(self.cfg.lr, self.cfg.lr_decay, self.epoch)

    def _check_finite(self, report: LossReport):
        bad = report.first_nonfinite()
        if bad is not None:
            raise NumericAbort(bad, self.step)

    def train_step(self, batch: list[np.ndarray]) -> LossReport:
        """Discriminator update (generator detached), then generator update."""
        lr = self.lr
        targets = [
            extract_targets(w, self.voc.stft_cfg, self.fb, self.amp_floor,
                            self.dataset.sample_rate)
            for w in batch
        ]
        disc_gan = (gan_loss_discriminator if self.gan_kind == "hinge"
                    else gan_loss_discriminator_ls)
        with Tape() as tape:
            forwards = [generator_forward(self.voc, t.mel) for t in targets]

            # discriminator phase: generator output detached
            d_loss = None
            for t, fwd in zip(targets, forwards):
                real_scores = [s for s, _ in self.disc(Tensor(t.wave))]
                fake_scores = [s for s, _ in self.disc(fwd.fake.detach())]
                term = disc_gan(real_scores, fake_scores)
                d_loss = term if d_loss is None else ad.add(d_loss, term)
            d_loss = ad.mul(d_loss, 1.0 / len(batch))
            if not np.isfinite(d_loss.data):
                raise NumericAbort("discriminator", self.step)
            self.opt_d.zero_grad()
            tape.backward(d_loss)
            self.opt_d.step(lr)

            # generator phase: adversarial terms see the updated discriminator
            parts_per_item = []
            for t, fwd in zip(targets, forwards):
                parts = spectral_loss_parts(fwd, t, self.voc, self.fb,
                                            self.amp_floor)
                parts.update(adversarial_loss_parts(self.disc, fwd.fake,
                                                    t.wave, self.gan_kind))
                parts_per_item.append(parts)
            total, report = generator_total(_mean_parts(parts_per_item),
                                            self.weights)
            report.discriminator = float(d_loss.data)
            self._check_finite(report)
            self.opt_g.zero_grad()
            tape.backward(total)
            self.opt_g.step(lr)
        self.step += 1
        return report

    def train(self, max_steps: int | None = None, log_fn=None) -> list[LossReport]:
        """Run epochs of shuffled batches until max_steps; returns reports."""
        limit = self.cfg.max_steps if max_steps is None else max_steps
        reports: list[LossReport] = []
        while self.step < limit:
            for batch in self.dataset.epoch_batches(self.rng, self.cfg.batch_size):
                if self.step >= limit:
                    break
                report = self.train_step(batch)
                reports.append(report)
                if log_fn is not None:
                    log_fn(report.log_line(self.step, self.lr))
            else:
                self.epoch += 1
                continue
            break
        return reports


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"APVOCCKP"
_VERSION = 1


def _entries(trainer: Trainer):
    for _, p in sorted(trainer.voc.named_parameters("gen."), key=lambda kv: kv[0]):
        yield p.name, p.data
    for _, p in sorted(trainer.disc.named_parameters("disc."), key=lambda kv: kv[0]):
        yield p.name, p.data
    yield from trainer.opt_g.state_entries("opt_g")
    yield from trainer.opt_d.state_entries("opt_d")


def save_checkpoint(path, trainer: Trainer):
    """Binary checkpoint: magic, version, JSON manifest, raw little-endian
    payload, and a trailing SHA-256 of everything before it."""
    manifest = []
    payload = bytearray()
    for name, arr in _entries(trainer):
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        manifest.append({
            "name": name,
            "dtype": arr.dtype.str.replace(">", "<"),
            "shape": list(arr.shape),
            "offset": len(payload),
            "nbytes": len(raw),
        })
        payload.extend(raw)
    header = json.dumps({
        "step": trainer.step,
        "epoch": trainer.epoch,
        "opt_g_t": trainer.opt_g.t,
        "opt_d_t": trainer.opt_d.t,
        "config": trainer.config_text,
        "entries": manifest,
    }).encode()
    blob = bytearray()
    blob += _MAGIC
    blob += int(_VERSION).to_bytes(4, "little")
    blob += len(header).to_bytes(8, "little")
    blob += header
    blob += payload
    blob += hashlib.sha256(blob).digest()
    with open(path, "wb") as f:
        f.write(blob)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Validate and parse a checkpoint; returns (meta, name -> array)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(_MAGIC) + 12 + 32 or blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch (file corrupt or truncated)")
    version = int.from_bytes(blob[8:12], "little")
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header_len = int.from_bytes(blob[12:20], "little")
    header = json.loads(blob[20 : 20 + header_len].decode())
    payload = blob[20 + header_len : -32]
    arrays = {}
    for ent in header["entries"]:
        raw = payload[ent["offset"] : ent["offset"] + ent["nbytes"]]
        arrays[ent["name"]] = np.frombuffer(raw, dtype=ent["dtype"]).reshape(
            ent["shape"]
        ).copy()
    meta = {k: header[k] for k in ("step", "epoch", "opt_g_t", "opt_d_t", "config")}
    return meta, arrays


def load_checkpoint(path, trainer: Trainer):
    """Restore a trainer in place; bit-exact roundtrip of all buffers."""
    meta, arrays = read_checkpoint(path)
    want = dict(_entries(trainer))
    missing = set(want) - set(arrays)
    extra = set(arrays) - set(want)
    if missing or extra:
        raise CheckpointError(
            f"checkpoint does not match model: missing={sorted(missing)[:3]} "
            f"extra={sorted(extra)[:3]}"
        )
    for name, arr in want.items():
        src = arrays[name]
        if src.shape != arr.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        arr[...] = src
    trainer.step = int(meta["step"])
    trainer.epoch = int(meta["epoch"])
    trainer.opt_g.t = int(meta["opt_g_t"])
    trainer.opt_d.t = int(meta["opt_d_t"])
    return meta


def load_generator(path, voc: Vocoder):
    """Restore only generator parameters from a checkpoint (for synthesis)."""
    _, arrays = read_checkpoint(path)
    for _, p in voc.named_parameters("gen."):
        if p.name not in arrays:
            raise CheckpointError(f"checkpoint lacks generator parameter {p.name}")
        src = arrays[p.name]
        if src.shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for {p.name}")
        p.data[...] = src
    return voc


# ---------------------------------------------------------------------------
# assembly from a run config (duck-typed; see apvoc.config.RunConfig)
# ---------------------------------------------------------------------------


def build_vocoder(rc) -> Vocoder:
    return Vocoder(
        n_mels=rc.n_mels,
        stft_cfg=StftConfig(rc.n_fft, rc.hop, rc.win_length, rc.window, rc.centered),
        channels=rc.channels,
        expansion=rc.expansion,
        num_blocks=rc.num_blocks,
        kernel_size=rc.kernel_size,
        seed=rc.seed,
        sample_rate=rc.sample_rate,
    )


def build_ensemble(rc) -> DiscriminatorEnsemble:
    return DiscriminatorEnsemble(
        periods=rc.mpd_periods,
        resolutions=rc.mrd_resolutions,
        mpd_channels=rc.mpd_channels,
        mrd_channels=rc.mrd_channels,
        seed=rc.seed,
    )


def build_trainer(rc, clips: list[Waveform]) -> Trainer:
    from apvoc.dsp import mel_filterbank

    voc = build_vocoder(rc)
    fb = mel_filterbank(rc.n_mels, voc.stft_cfg, rc.sample_rate, rc.f_min, rc.f_max)
    dataset = ClipDataset(clips, rc.crop_samples, rc.hop)
    config_text = rc.to_text() if hasattr(rc, "to_text") else ""
    return Trainer(
        voc,
        build_ensemble(rc),
        dataset,
        fb,
        weights=LossWeights(rc.lambda_amplitude, rc.lambda_phase,
                            rc.lambda_stft, rc.lambda_waveform),
        train_cfg=TrainConfig(rc.batch_size, rc.crop_samples, rc.lr, rc.beta1,
                              rc.beta2, rc.weight_decay, rc.lr_decay,
                              rc.max_steps, rc.seed, rc.preset),
        amp_floor=rc.amp_floor,
        gan_kind=rc.gan_loss,
        config_text=config_text,
    )
