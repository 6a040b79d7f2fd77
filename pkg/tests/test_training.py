import numpy as np
import pytest

from apvoc.audio_io import read_wav
from apvoc.autodiff import Parameter
from apvoc.config import RunConfig
from apvoc.dsp import Waveform
from apvoc.training import (
    AdamW,
    CheckpointError,
    ClipDataset,
    NumericAbort,
    build_trainer,
    build_vocoder,
    extract_targets,
    load_checkpoint,
    load_generator,
    lr_schedule,
    read_checkpoint,
    save_checkpoint,
)

FIXTURE = "tests/data/fixture_1s.wav"


def tiny_run_config(**overrides):
    # very small everything: fast enough for unit tests
    base = dict(
        preset="desk",
        channels=16,
        expansion=32,
        num_blocks=1,
        batch_size=1,
        max_steps=4,
        seed=11,
        mpd_periods=(2, 3),
        mpd_channels=(2, 4),
        mrd_resolutions=((256, 64, 256), (512, 128, 512)),
        mrd_channels=(2, 4, 4, 4, 4),
        crop_samples=2048,
    )
    base.update(overrides)
    return RunConfig.for_preset("desk", **{k: v for k, v in base.items() if k != "preset"})


@pytest.fixture(scope="module")
def clip():
    return read_wav(FIXTURE)


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------


def test_adamw_no_grad_no_decay_is_identity():
    p = Parameter(np.array([1.0, -2.0]), "p")
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adamw_first_step_closed_form():
    p = Parameter(np.array(1.0), "p")
    opt = AdamW([p], lr=0.1, betas=(0.8, 0.99), weight_decay=0.0)
    p.grad[...] = 1.0
    opt.step()
    # bias-corrected m_hat = v_hat = 1 -> theta = 1 - 0.1/(1 + eps)
    assert float(p.data) == pytest.approx(0.9, abs=1e-6)


def test_adamw_decoupled_decay():
    p = Parameter(np.array(1.0), "p")
    opt = AdamW([p], lr=0.1, weight_decay=0.01)
    opt.step()  # zero gradient: only the decay acts
    assert float(p.data) == pytest.approx(0.999, abs=1e-12)


def test_lr_schedule():
    assert lr_schedule(2e-4, 0.999, 0) == 2e-4
    assert lr_schedule(2e-4, 0.999, 1) == pytest.approx(1.998e-4)
    assert lr_schedule(2e-4, 0.999, 1000) == pytest.approx(2e-4 * 0.999**1000)
    assert lr_schedule(2e-4, 0.999, 1000) == pytest.approx(7.357e-5, rel=1e-3)
    with pytest.raises(ValueError):
        lr_schedule(2e-4, 0.999, -1)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


def test_crop_alignment_and_padding(clip):
    ds = ClipDataset([clip], 8192, 256)
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = ds.crop(0, rng)
        assert len(c) == 8192
    short = ClipDataset([Waveform(np.ones(1000), 22050)], 2048, 256)
    c = short.crop(0, rng)
    assert len(c) == 2048 and np.all(c[1000:] == 0)

    with pytest.raises(ValueError, match="multiple of hop"):
        ClipDataset([clip], 1000, 256)


def test_crop_starts_are_hop_aligned(clip):
    # crops must coincide with a frame boundary of the full clip
    ds = ClipDataset([clip], 2048, 256)
    rng = np.random.default_rng(1)
    seen = set()
    for _ in range(50):
        c = ds.crop(0, rng)
        idx = _find_offset(clip.samples, c)
        assert idx % 256 == 0
        seen.add(idx)
    assert len(seen) > 5  # actually random


def _find_offset(hay, needle):
    n = len(needle)
    for start in range(0, len(hay) - n + 1, 256):
        if np.array_equal(hay[start : start + n], needle):
            return start
    raise AssertionError("crop not found at any hop-aligned offset")


# ---------------------------------------------------------------------------
# train_step contracts
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_pair(clip):
    rc = tiny_run_config()
    t1 = build_trainer(rc, [clip])
    t2 = build_trainer(rc, [clip])
    r1 = t1.train(max_steps=3)
    r2 = t2.train(max_steps=3)
    return t1, t2, r1, r2


def test_seeded_runs_are_identical(trained_pair):
    _, _, r1, r2 = trained_pair
    assert len(r1) == len(r2) == 3
    for a, b in zip(r1, r2):
        assert a.as_dict() == b.as_dict()


def test_losses_are_finite_and_positive(trained_pair):
    _, _, r1, _ = trained_pair
    for rep in r1:
        assert rep.first_nonfinite() is None
        assert rep.total > 0 and rep.discriminator >= 0


def test_discriminator_phase_leaves_generator_untouched(clip):
    rc = tiny_run_config(seed=21)
    tr = build_trainer(rc, [clip])
    from apvoc.autodiff import Tape, Tensor
    from apvoc.losses import gan_loss_discriminator
    from apvoc.training import generator_forward

    targets = extract_targets(tr.dataset.crop(0, np.random.default_rng(0)),
                              tr.voc.stft_cfg, tr.fb, tr.amp_floor, 22050)
    before = [p.data.copy() for p in tr.voc.parameters()]
    tr.opt_g.zero_grad()
    with Tape() as tape:
        fwd = generator_forward(tr.voc, targets.mel)
        real_scores = [s for s, _ in tr.disc(Tensor(targets.wave))]
        fake_scores = [s for s, _ in tr.disc(fwd.fake.detach())]
        d_loss = gan_loss_discriminator(real_scores, fake_scores)
        tr.opt_d.zero_grad()
        tape.backward(d_loss)
        tr.opt_d.step()
    # generator gradients stayed exactly zero, parameters bit-identical
    assert all(np.all(p.grad == 0) for p in tr.voc.parameters())
    for p, b in zip(tr.voc.parameters(), before):
        np.testing.assert_array_equal(p.data, b)


def test_numeric_abort_names_subterm(clip):
    rc = tiny_run_config(seed=31)
    tr = build_trainer(rc, [clip])
    tr.voc.amp.out_conv.bias.data[:] = np.nan
    with pytest.raises(NumericAbort) as err:
        tr.train(max_steps=1)
    assert err.value.subterm  # names the first non-finite sub-term
    assert "non-finite" in str(err.value)


def test_lr_follows_epoch_schedule(clip):
    rc = tiny_run_config(seed=41, max_steps=3)
    tr = build_trainer(rc, [clip])
    assert tr.lr == rc.lr
    tr.train(max_steps=2)  # one clip, batch 1: each step ends an epoch
    assert tr.epoch == 2
    assert tr.lr == pytest.approx(rc.lr * rc.lr_decay**2)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_roundtrip_bit_exact(clip, tmp_path):
    rc = tiny_run_config(seed=51)
    tr = build_trainer(rc, [clip])
    tr.train(max_steps=2)
    mel = extract_targets(tr.dataset.crop(0, np.random.default_rng(1)),
                          tr.voc.stft_cfg, tr.fb, tr.amp_floor, 22050).mel
    before = tr.voc.generate(mel).samples

    path = tmp_path / "ck.bin"
    save_checkpoint(path, tr)

    tr2 = build_trainer(tiny_run_config(seed=99), [clip])  # different init
    meta = load_checkpoint(path, tr2)
    assert meta["step"] == 2
    after = tr2.voc.generate(mel).samples
    np.testing.assert_array_equal(before, after)

    voc = build_vocoder(tiny_run_config(seed=77))
    load_generator(path, voc)
    np.testing.assert_array_equal(voc.generate(mel).samples, before)


def test_checkpoint_truncation_is_checksum_error(clip, tmp_path):
    rc = tiny_run_config(seed=61)
    tr = build_trainer(rc, [clip])
    path = tmp_path / "ck.bin"
    save_checkpoint(path, tr)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 7])
    with pytest.raises(CheckpointError, match="checksum"):
        read_checkpoint(path)


def test_checkpoint_version_error(clip, tmp_path):
    import hashlib

    rc = tiny_run_config(seed=71)
    tr = build_trainer(rc, [clip])
    path = tmp_path / "ck.bin"
    save_checkpoint(path, tr)
    blob = bytearray(path.read_bytes())[:-32]
    blob[8:12] = (99).to_bytes(4, "little")  # forge version, keep checksum valid
    blob += hashlib.sha256(blob).digest()
    path.write_bytes(blob)
    with pytest.raises(CheckpointError, match="version"):
        read_checkpoint(path)


def test_checkpoint_garbage_magic(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"x" * 100)
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(p)


def test_log_line_format(trained_pair):
    t1, _, r1, _ = trained_pair
    line = r1[0].log_line(1, t1.cfg.lr)
    fields = dict(kv.split("=") for kv in line.split())
    assert set(fields) == {"step", "lr", "L_G", "L_A", "L_P", "L_S", "L_W", "L_D"}
