"""Objective evaluation: SNR, log-amplitude-spectrum RMSE, mel-cepstral
distortion, F0 RMSE in cents, voiced/unvoiced error, and the real-time
factor.

The formulas are the standard formulations, fixed bit-exactly here so
numbers agree across implementations:

* SNR           10*log10(sum ref^2 / sum (ref-est)^2), saturated at +100 dB.
* LAS-RMSE      RMSE over frames x bins of (20/ln 10)*(ln|S_ref| - ln|S_est|).
* MCD           (10/ln 10)*sqrt(2) * mean over frames of the L2 distance of
                mel-cepstra 1..13 (DCT-II of the natural-log mel spectrum,
                c_0 excluded, so it is gain-invariant).
* F0-RMSE       RMSE of 1200*log2(f_est/f_ref) over frames voiced in both.
* V/UV error    percent of frames whose voicing decision differs.
* RTF           generation seconds / audio seconds; "a x real time" is the
                reciprocal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from apvoc.dsp import (
    DEFAULT_AMP_FLOOR,
    MelFilterbank,
    StftConfig,
    Waveform,
    mel_filterbank,
    mel_spectrogram,
    stft,
)

SNR_SATURATION_DB = 100.0


class MetricError(ValueError):
    """Raised for incompatible metric inputs."""


@dataclass
class F0Track:
    """Per-frame fundamental frequency (0 where unvoiced) plus voicing flags."""

    f0_hz: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0_hz.shape != self.voiced.shape:
            raise MetricError("f0/voicing shape mismatch")
        if np.any((self.f0_hz > 0) != self.voiced):
            raise MetricError("voicing flags must match f0 > 0")


@dataclass
class MetricReport:
    snr_db: float
    snr_saturated: bool
    las_rmse_db: float
    mcd_db: float
    f0_rmse_cents: float | None  # None when no commonly-voiced frames exist
    vuv_error_pct: float
    rtf_value: float | None = None  # filled by the bench harness
    rtf_multiple: float | None = None  # "a x real time"

    def to_kv(self) -> str:
        f0 = "undefined" if self.f0_rmse_cents is None else f"{self.f0_rmse_cents:.4g}"
        line = (
            f"snr_db={self.snr_db:.4g} las_rmse_db={self.las_rmse_db:.4g} "
            f"mcd_db={self.mcd_db:.4g} f0_rmse_cents={f0} "
            f"vuv_error_pct={self.vuv_error_pct:.4g}"
        )
        if self.rtf_value is not None and self.rtf_multiple is not None:
            line += f" rtf={self.rtf_value:.4g} rtf_multiple={self.rtf_multiple:.4g}"
        return line

    def row(self) -> list[str]:
        f0 = "n/a" if self.f0_rmse_cents is None else f"{self.f0_rmse_cents:8.2f}"
        return [
            f"{self.snr_db:8.2f}",
            f"{self.las_rmse_db:8.2f}",
            f"{self.mcd_db:8.2f}",
            f0,
            f"{self.vuv_error_pct:8.2f}",
        ]


def _as_samples(name, ref, est) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(ref.samples if isinstance(ref, Waveform) else ref, dtype=np.float64)
    e = np.asarray(est.samples if isinstance(est, Waveform) else est, dtype=np.float64)
    if r.shape != e.shape:
        raise MetricError(f"{name}: length mismatch {r.shape} vs {e.shape}")
    return r, e


# ---------------------------------------------------------------------------
# waveform/spectral metrics
# ---------------------------------------------------------------------------


def snr(ref, est) -> float:
    """Signal-to-noise ratio in dB; +100 dB when the residual is ~zero."""
    r, e = _as_samples("snr", ref, est)
    num = np.sum(r**2)
    if num == 0:
        raise MetricError("snr: reference is all zero")
    den = np.sum((r - e) ** 2)
    if den <= num * 10.0 ** (-SNR_SATURATION_DB / 10.0):
        return SNR_SATURATION_DB
    return float(10.0 * np.log10(num / den))


def las_rmse(ref, est, cfg: StftConfig = StftConfig(),
             amp_floor: float = DEFAULT_AMP_FLOOR) -> float:
    """RMSE of log amplitude spectra, scaled to dB."""
    r, e = _as_samples("las_rmse", ref, est)
    lr = np.log(np.maximum(stft(Waveform(r), cfg).magnitude(), amp_floor))
    le = np.log(np.maximum(stft(Waveform(e), cfg).magnitude(), amp_floor))
    return float(np.sqrt(np.mean(((20.0 / np.log(10.0)) * (lr - le)) ** 2)))


def _mel_cepstra(x: np.ndarray, cfg: StftConfig, fb: MelFilterbank,
                 order: int, amp_floor: float) -> np.ndarray:
    logmel = mel_spectrogram(Waveform(x), fb, cfg, amp_floor).values
    m = fb.n_mels
    # DCT-II rows 1..order (row 0 would absorb overall gain)
    d = np.arange(1, order + 1)[:, None]
    basis = np.cos(np.pi * d * (2 * np.arange(m)[None, :] + 1) / (2 * m))
    return logmel @ basis.T  # frames x order


def mcd(ref, est, cfg: StftConfig = StftConfig(),
        fb: MelFilterbank | None = None, order: int = 13,
        amp_floor: float = DEFAULT_AMP_FLOOR) -> float:
    """Mel-cepstrum distortion in dB over coefficients 1..order."""
    r, e = _as_samples("mcd", ref, est)
    if fb is None:
        fb = mel_filterbank(80, cfg)
    cr = _mel_cepstra(r, cfg, fb, order, amp_floor)
    ce = _mel_cepstra(e, cfg, fb, order, amp_floor)
    dist = np.sqrt(np.sum((cr - ce) ** 2, axis=1))
    return float((10.0 / np.log(10.0)) * np.sqrt(2.0) * np.mean(dist))


# ---------------------------------------------------------------------------
# fundamental frequency
# ---------------------------------------------------------------------------


def f0_estimate(w: Waveform, cfg: StftConfig = StftConfig(),
                f_min: float = 60.0, f_max: float = 500.0,
                threshold: float = 0.15,
                energy_gate: float = 1e-4) -> F0Track:
    """Autocorrelation-difference (YIN-style) per-frame estimator.

    Frames are anchored at t*hop (one per STFT frame), so delaying the input
    by one hop shifts the track by exactly one frame.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    sr = w.sample_rate
    hop, win = cfg.hop, cfg.win_length
    n = len(x)
    frames = cfg.frame_count(n)
    tau_min = max(2, int(sr / f_max))
    tau_max = int(np.ceil(sr / f_min))
    seg_len = win + tau_max
    if n < seg_len:
        x = np.pad(x, (0, seg_len - n))

    f0 = np.zeros(frames)
    voiced = np.zeros(frames, dtype=bool)
    for t in range(frames):
        # tail frames analyze the last full segment instead of zero padding
        start = min(t * hop, max(0, n - seg_len))
        seg = x[start : start + seg_len]
        a = seg[:win]
        if np.sqrt(np.mean(a**2)) < energy_gate:
            continue
        # d(tau) = E_a + E_shift(tau) - 2*corr(tau) via FFT correlation
        nfft = int(2 ** np.ceil(np.log2(len(seg) + win)))
        corr = np.fft.irfft(
            np.fft.rfft(seg, nfft) * np.conj(np.fft.rfft(a, nfft)), nfft
        )[: tau_max + 1]
        sq = np.concatenate([[0.0], np.cumsum(seg**2)])
        e_shift = sq[np.arange(tau_max + 1) + win] - sq[: tau_max + 1]
        d = corr[0] + e_shift - 2.0 * corr
        d = np.maximum(d, 0.0)
        # cumulative-mean normalization
        cume = np.cumsum(d[1:]) / np.arange(1, tau_max + 1)
        cmndf = np.ones(tau_max + 1)
        cmndf[1:] = d[1:] / np.maximum(cume, 1e-12)

        tau = None
        for cand in range(tau_min, tau_max):
            if cmndf[cand] < threshold:
                while cand + 1 <= tau_max and cmndf[cand + 1] < cmndf[cand]:
                    cand += 1
                tau = cand
                break
        if tau is None:
            continue
        if 1 <= tau < tau_max:  # parabolic refinement on the raw difference
            y0, y1, y2 = d[tau - 1], d[tau], d[tau + 1]
            denom = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            tau = tau + np.clip(shift, -1.0, 1.0)
        f0[t] = sr / tau
        voiced[t] = True
    return F0Track(f0, voiced)


def f0_rmse_cents(ref_track: F0Track, est_track: F0Track) -> float | None:
    """RMSE of 1200*log2(est/ref) over frames voiced in both tracks.

    Returns None (explicitly undefined) when no commonly-voiced frame exists.
    """
    if ref_track.f0_hz.shape != est_track.f0_hz.shape:
        raise MetricError("f0_rmse_cents: frame count mismatch")
    both = ref_track.voiced & est_track.voiced
    if not np.any(both):
        return None
    cents = 1200.0 * np.log2(est_track.f0_hz[both] / ref_track.f0_hz[both])
    return float(np.sqrt(np.mean(cents**2)))


def vuv_error(ref_track: F0Track, est_track: F0Track) -> float:
    """Percent of frames whose voicing decision differs."""
    if ref_track.voiced.shape != est_track.voiced.shape:
        raise MetricError("vuv_error: frame count mismatch")
    return float(100.0 * np.mean(ref_track.voiced != est_track.voiced))


# ---------------------------------------------------------------------------
# real-time factor
# ---------------------------------------------------------------------------


def rtf(total_gen_seconds: float, total_audio_seconds: float) -> tuple[float, float]:
    """(generation / audio duration, audio / generation)."""
    if total_gen_seconds <= 0 or total_audio_seconds <= 0:
        raise MetricError("rtf: durations must be positive")
    return total_gen_seconds / total_audio_seconds, total_audio_seconds / total_gen_seconds


def format_rtf(rtf_value: float, multiple: float) -> str:
    """Render like a results table cell, e.g. '0.021 (47.73x)'."""
    return f"{rtf_value:.3f} ({multiple:.2f}×)"


# ---------------------------------------------------------------------------
# paired evaluation
# ---------------------------------------------------------------------------


def evaluate_pair(ref: Waveform, est: Waveform,
                  cfg: StftConfig = StftConfig(),
                  fb: MelFilterbank | None = None) -> MetricReport:
    value = snr(ref, est)
    ref_track = f0_estimate(ref, cfg)
    est_track = f0_estimate(est, cfg)
    return MetricReport(
        snr_db=value,
        snr_saturated=value >= SNR_SATURATION_DB,
        las_rmse_db=las_rmse(ref, est, cfg),
        mcd_db=mcd(ref, est, cfg, fb),
        f0_rmse_cents=f0_rmse_cents(ref_track, est_track),
        vuv_error_pct=vuv_error(ref_track, est_track),
    )


TABLE_HEADER = ["file", "SNR(dB)", "LAS-RMSE(dB)", "MCD(dB)", "F0-RMSE(cent)",
                "V/UV(%)"]


def format_table(rows: list[tuple[str, MetricReport]]) -> str:
    """Aligned plain-text table with a trailing mean row."""
    body = [[name] + rep.row() for name, rep in rows]
    if len(rows) > 1:
        mean_cols = []
        for i in range(5):
            vals = [
                [rep.snr_db, rep.las_rmse_db, rep.mcd_db,
                 rep.f0_rmse_cents, rep.vuv_error_pct][i]
                for _, rep in rows
            ]
            vals = [v for v in vals if v is not None]
            mean_cols.append(f"{np.mean(vals):8.2f}" if vals else "n/a")
        body.append(["mean"] + mean_cols)
    widths = [max(len(TABLE_HEADER[i]), *(len(r[i]) for r in body))
              for i in range(6)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(TABLE_HEADER))]
    for r in body:
        lines.append("  ".join(r[i].rjust(widths[i]) for i in range(6)))
    return "\n".join(lines)
