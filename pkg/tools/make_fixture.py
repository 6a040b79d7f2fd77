"""Regenerate the bundled one-second test clip (tests/data/fixture_1s.wav).

The clip is fully synthetic and deterministic: a sustained, vowel-like
tone with fixed formant resonances and a gentle amplitude envelope
(attack, slow swell, release). The fundamental is sr/128, so one analysis
hop spans exactly two periods: every harmonic sits on an STFT bin center
and per-bin phases are stable across frames, which keeps the clip
learnable by the desk-scale overfit harness within its step budget. All
content stays below 8 kHz so the mel band covers it.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from apvoc.audio_io import write_wav  # noqa: E402
from apvoc.dsp import Waveform  # noqa: E402

SR = 22050
SECONDS = 1.0
SEED = 2024


def synthesize() -> Waveform:
    rng = np.random.default_rng(SEED)
    n = int(SR * SECONDS)
    t = np.arange(n) / SR

    f0 = SR / 128.0  # 172.27 Hz; harmonic h lands exactly on bin 8h
    phase = 2 * np.pi * f0 * np.arange(n) / SR

    centers = [650.0, 1450.0, 2900.0]
    widths = [110.0, 170.0, 260.0]
    gains = [1.0, 0.55, 0.3]

    x = np.zeros(n)
    h = 1
    while h * f0 < 7600.0:
        fh = h * f0
        env = 0.06  # spectral floor keeps upper harmonics alive
        for fc, bw, g in zip(centers, widths, gains):
            env = env + g * np.exp(-(((fh - fc) / bw) ** 2))
        env = env / (1.0 + 0.08 * h)
        x += env * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        h += 1

    attack = np.minimum(t / 0.06, 1.0)
    release = np.minimum((SECONDS - t) / 0.08, 1.0)
    swell = 0.8 + 0.2 * np.sin(2 * np.pi * 1.3 * t + 0.5)
    x *= attack * release * swell

    x *= 0.6 / np.abs(x).max()
    return Waveform(x, SR)


if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parents[1] / "tests" / "data" / "fixture_1s.wav"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_wav(out, synthesize())
    print(f"wrote {out}")
