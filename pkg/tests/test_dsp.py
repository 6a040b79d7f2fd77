import numpy as np
import pytest

from apvoc.dsp import (
    ComplexSpectrogram,
    DspError,
    LogAmplitudeSpectrogram,
    PhaseSpectrogram,
    StftConfig,
    Waveform,
    anti_wrap,
    istft,
    log_amplitude,
    mel_filterbank,
    mel_spectrogram,
    phase_of,
    phi,
    reconstruct_complex,
    stft,
)

CFG = StftConfig()
SR = 22050


def random_waveform(n, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return Waveform(scale * rng.uniform(-1.0, 1.0, n), SR)


# ---------------------------------------------------------------------------
# stft
# ---------------------------------------------------------------------------


def test_stft_zero_input_gives_zero_spectrogram():
    s = stft(Waveform(np.zeros(1024), SR), CFG)
    assert s.shape == (4, 513)
    assert np.all(s.real == 0) and np.all(s.imag == 0)


def test_stft_frame_count_is_ceil_len_over_hop():
    assert stft(Waveform(np.zeros(8192), SR), CFG).shape[0] == 32
    assert stft(Waveform(np.zeros(8193), SR), CFG).shape[0] == 33
    assert stft(Waveform(np.zeros(100), SR), CFG).shape[0] == 1


def test_stft_rejects_empty_and_nonfinite():
    with pytest.raises(DspError):
        CFG.frame_count(0)
    with pytest.raises(DspError):
        Waveform(np.array([1.0, np.nan]), SR)


def test_stft_pure_tone_concentrates_on_its_bin():
    # Exact-bin cosine analyzed with a rectangular window: with both edges
    # reflecting the tone smoothly (length 512*m + 1), every other bin is
    # essentially zero, so the 20 dB dominance margin holds in every frame.
    cfg = StftConfig(window="rect")
    n = 512 * 16 + 1
    f = 21 * SR / cfg.n_fft
    x = np.cos(2 * np.pi * f * np.arange(n) / SR)
    mag = stft(Waveform(x, SR), cfg).magnitude()
    peak = mag[:, 21]
    others = np.delete(mag, 21, axis=1).max(axis=1)
    margin_db = 20 * np.log10(peak / np.maximum(others, 1e-300))
    assert np.all(margin_db >= 20.0)


# ---------------------------------------------------------------------------
# istft
# ---------------------------------------------------------------------------


def test_istft_zero_spectrogram_is_silence():
    w = istft(ComplexSpectrogram(np.zeros((8, 513)), np.zeros((8, 513))), CFG)
    assert len(w) == 8 * 256
    assert np.all(w.samples == 0)


def test_istft_bin_mismatch_errors():
    with pytest.raises(DspError):
        istft(ComplexSpectrogram(np.zeros((4, 100)), np.zeros((4, 100))), CFG)


def test_roundtrip_recovers_interior():
    # COLA identity at 32-bit tolerance over the interior.
    for seed in range(3):
        w = random_waveform(8192, seed=seed)
        r = istft(stft(w, CFG), CFG)
        err = np.abs(r.samples - w.samples)[256:-256]
        assert err.max() < 1e-6


def test_istft_single_frame_dc_matches_analytic_inverse():
    # One frame, real[0] = c: the inverse DFT is the constant c / n_fft, and
    # window-square normalization leaves c / (n_fft * w[n]) on the extracted
    # span [n_fft/2, n_fft/2 + hop).
    c = 3.0
    real = np.zeros((1, 513))
    real[0, 0] = c
    out = istft(ComplexSpectrogram(real, np.zeros((1, 513))), CFG)
    w = CFG.window_values()
    expected = c / (CFG.n_fft * w[512 : 512 + 256])
    np.testing.assert_allclose(out.samples, expected, rtol=1e-12)


def test_istft_length_is_frames_times_hop():
    s = stft(random_waveform(5000, seed=4), CFG)
    assert len(istft(s, CFG)) == s.shape[0] * 256


# ---------------------------------------------------------------------------
# phi
# ---------------------------------------------------------------------------


def test_phi_positive_real_axis_is_zero():
    assert phi(1.0, 0.0) == 0.0


def test_phi_hand_values():
    assert abs(phi(-1.0, 1.0) - 3 * np.pi / 4) < 1e-15
    assert abs(phi(0.0, 1.0) - np.pi / 2) < 1e-15
    assert abs(phi(0.0, -1.0) + np.pi / 2) < 1e-15
    assert abs(phi(-1.0, 0.0) - np.pi) < 1e-15  # boundary maps to +pi


def test_phi_origin_convention():
    assert phi(0.0, 0.0) == 0.0


def test_phi_matches_four_quadrant_arctangent():
    rng = np.random.default_rng(7)
    r = rng.uniform(-2, 2, 100_000)
    i = rng.uniform(-2, 2, 100_000)
    keep = (r != 0) | (i != 0)
    got = phi(r[keep], i[keep])
    want = np.arctan2(i[keep], r[keep])
    assert np.abs(got - want).max() < 1e-12


def test_phi_range_contract():
    rng = np.random.default_rng(8)
    v = phi(rng.standard_normal((64, 64)), rng.standard_normal((64, 64)))
    assert np.all(v > -np.pi) and np.all(v <= np.pi)


# ---------------------------------------------------------------------------
# anti_wrap
# ---------------------------------------------------------------------------


def test_anti_wrap_reference_points():
    assert anti_wrap(0.0) == 0.0
    assert abs(anti_wrap(2 * np.pi)) < 1e-15
    assert abs(anti_wrap(np.pi) - np.pi) < 1e-15
    assert abs(anti_wrap(2.5 * np.pi) - 0.5 * np.pi) < 1e-14
    assert abs(anti_wrap(-0.3) - 0.3) < 1e-15


def test_anti_wrap_properties():
    rng = np.random.default_rng(9)
    x = rng.uniform(-50, 50, 100_000)
    v = anti_wrap(x)
    assert np.all(v >= 0) and np.all(v <= np.pi)
    assert np.abs(v - anti_wrap(x + 2 * np.pi)).max() < 1e-12  # periodic
    assert np.abs(v - anti_wrap(-x)).max() < 1e-12  # even
    k = rng.integers(-5, 6, 200)
    assert np.abs(anti_wrap(2 * np.pi * k)).max() < 1e-12  # zero set


# ---------------------------------------------------------------------------
# log amplitude / phase extraction / reconstruction
# ---------------------------------------------------------------------------


def test_log_amplitude_values():
    s = ComplexSpectrogram(np.array([[1.0, 0.0, 3.0]]), np.array([[0.0, 0.0, 4.0]]))
    v = log_amplitude(s, amp_floor=1e-5).values
    np.testing.assert_allclose(v[0], [0.0, np.log(1e-5), np.log(5.0)], atol=1e-12)


def test_phase_of_is_elementwise_phi():
    s = stft(random_waveform(2048, seed=3), CFG)
    p = phase_of(s).values
    assert p.shape == s.shape
    np.testing.assert_allclose(p, phi(s.real, s.imag))
    assert np.all(p > -np.pi) and np.all(p <= np.pi)


def test_reconstruct_complex_values_and_roundtrip():
    a = LogAmplitudeSpectrogram(np.array([[0.0, np.log(2.0)]]))
    p = PhaseSpectrogram(np.array([[0.0, np.pi / 2]]))
    s = reconstruct_complex(a, p)
    np.testing.assert_allclose(s.real[0], [1.0, 0.0], atol=1e-7)
    np.testing.assert_allclose(s.imag[0], [0.0, 2.0], atol=1e-7)

    src = stft(random_waveform(4096, seed=5), CFG)
    back = reconstruct_complex(log_amplitude(src), phase_of(src))
    mask = src.magnitude() > 1e-5
    assert np.abs((back.real - src.real)[mask]).max() < 1e-6
    assert np.abs((back.imag - src.imag)[mask]).max() < 1e-6


def test_reconstruct_complex_shape_mismatch():
    with pytest.raises(DspError):
        reconstruct_complex(
            LogAmplitudeSpectrogram(np.zeros((2, 3))), PhaseSpectrogram(np.zeros((3, 2)))
        )


# ---------------------------------------------------------------------------
# mel
# ---------------------------------------------------------------------------


def test_mel_filterbank_shape_and_support():
    fb = mel_filterbank(80, CFG, SR)
    assert fb.weights.shape == (80, 513)
    assert np.all(fb.weights >= 0)
    assert np.all(fb.weights.sum(axis=1) > 0)


def test_mel_silence_is_floor():
    fb = mel_filterbank(80, CFG, SR)
    m = mel_spectrogram(Waveform(np.zeros(2048), SR), fb, CFG).values
    assert m.shape == (8, 80)
    np.testing.assert_allclose(m, np.log(1e-5))


def test_mel_frames_match_stft_frames():
    fb = mel_filterbank(80, CFG, SR)
    w = random_waveform(5000, seed=11)
    assert mel_spectrogram(w, fb, CFG).values.shape[0] == stft(w, CFG).shape[0]


def test_mel_out_of_band_tone_is_attenuated():
    fb = mel_filterbank(80, CFG, SR)
    t = np.arange(22050) / SR

    def peak_mel(f):
        w = Waveform(0.5 * np.cos(2 * np.pi * f * t), SR)
        return mel_spectrogram(w, fb, CFG).values.max()

    # A tone above f_max only leaks through the last filter edge.
    gap_db = 20 / np.log(10) * (peak_mel(1000.0) - peak_mel(11025.0))
    assert gap_db >= 30.0


def test_mel_zero_append_adds_frames_keeps_interior():
    fb = mel_filterbank(80, CFG, SR)
    w = random_waveform(8192, seed=13)
    base = mel_spectrogram(w, fb, CFG).values
    for k in (1, 3):
        ext = Waveform(np.concatenate([w.samples, np.zeros(256 * k)]), SR)
        got = mel_spectrogram(ext, fb, CFG).values
        assert got.shape[0] == base.shape[0] + k
        # frames whose analysis window stays inside the original span are
        # unchanged; the trailing boundary frames see different padding.
        inside = (np.arange(base.shape[0]) * 256 + 512) <= 8192
        np.testing.assert_allclose(got[: base.shape[0]][inside], base[inside], atol=1e-12)


def test_config_validation():
    with pytest.raises(DspError):
        StftConfig(n_fft=1024, hop=2048, win_length=1024)
    with pytest.raises(DspError):
        StftConfig(window="hamming")
    with pytest.raises(DspError):
        StftConfig(n_fft=1024, hop=512, win_length=1024)  # hann^2 fails COLA at hop/2


def test_uncentered_analysis():
    cfg = StftConfig(centered=False)
    w = random_waveform(4096, seed=17)
    s = stft(w, cfg)
    assert s.shape[0] == 1 + (4096 - 1024) // 256  # fully covered windows only
    back = istft(s, cfg)
    assert len(back) == (s.shape[0] - 1) * 256 + 1024
    # interior of the covered span reconstructs (edge windows taper)
    err = np.abs(back.samples[1024:-1024] - w.samples[1024 : len(back) - 1024])
    assert err.max() < 1e-10
    with pytest.raises(DspError):
        stft(Waveform(np.zeros(512), SR), cfg)  # shorter than one window
