"""Command-line surface tying the pipeline together.

Subcommands: features, train, synth, eval, bench.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from apvoc.audio_io import AudioIoError, read_array, read_wav, write_array, write_wav
from apvoc.autodiff import AutodiffError
from apvoc.config import ConfigError, RunConfig, load_manifest
from apvoc.dsp import (
    DspError,
    Waveform,
    log_amplitude,
    mel_filterbank,
    mel_spectrogram,
    phase_of,
    stft,
)
from apvoc.metrics import (
    MetricError,
    evaluate_pair,
    format_rtf,
    format_table,
    rtf as rtf_pair,
)
from apvoc.training import (
    CheckpointError,
    NumericAbort,
    build_trainer,
    build_vocoder,
    load_generator,
    save_checkpoint,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (AudioIoError, ConfigError, DspError, MetricError,
                CheckpointError, AutodiffError, OSError)


def _filterbank(rc: RunConfig):
    return mel_filterbank(rc.n_mels, rc.stft_config(), rc.sample_rate,
                          rc.f_min, rc.f_max)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_features(args) -> int:
    rc = RunConfig.load(args.config)
    cfg = rc.stft_config()
    fb = _filterbank(rc)
    out_dir = Path(args.out_dir) if args.out_dir else None
    for wav_path in args.wavs:
        w = read_wav(wav_path, expected_rate=rc.sample_rate)
        spec = stft(w, cfg)
        stem = Path(wav_path)
        base = (out_dir / stem.stem) if out_dir else stem.with_suffix("")
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
        write_array(f"{base}.mel.arr",
                    mel_spectrogram(w, fb, cfg, rc.amp_floor).values)
        write_array(f"{base}.logamp.arr", log_amplitude(spec, rc.amp_floor).values)
        write_array(f"{base}.phase.arr", phase_of(spec).values)
        print(f"{wav_path}: wrote {base}.mel.arr .logamp.arr .phase.arr")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = RunConfig.load(args.config)
    manifest = load_manifest(args.manifest)
    paths = manifest.paths("train") or [p for _, p in manifest.entries]
    clips = [read_wav(p, expected_rate=rc.sample_rate) for p in paths]
    trainer = build_trainer(rc, clips)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train.log"
    with open(log_path, "w") as log:

        def emit(line: str):
            if trainer.step % rc.log_every == 0:
                log.write(line + "\n")
                log.flush()
                print(line)
            if rc.checkpoint_every and trainer.step % rc.checkpoint_every == 0:
                save_checkpoint(out_dir / f"step{trainer.step:08d}.ckpt", trainer)

        trainer.train(max_steps=args.max_steps or rc.max_steps, log_fn=emit)
    save_checkpoint(out_dir / "final.ckpt", trainer)
    print(f"trained {trainer.step} steps; checkpoint at {out_dir / 'final.ckpt'}")
    return EXIT_OK


def _load_mel(rc: RunConfig, path: Path, fb) -> np.ndarray:
    if path.suffix.lower() == ".wav":
        w = read_wav(path, expected_rate=rc.sample_rate)
        return mel_spectrogram(w, fb, rc.stft_config(), rc.amp_floor).values
    mel = read_array(path)
    if mel.ndim != 2 or mel.shape[1] != rc.n_mels:
        raise ConfigError(
            f"{path}: expected mel of shape (frames, {rc.n_mels}), got {mel.shape}"
        )
    return mel


def cmd_synth(args) -> int:
    rc = RunConfig.load(args.config)
    voc = build_vocoder(rc)
    load_generator(args.checkpoint, voc)
    mel = _load_mel(rc, Path(args.input), _filterbank(rc))
    wave = voc.generate(mel.astype(np.float32))
    write_wav(args.output, wave)
    print(f"wrote {args.output} ({len(wave)} samples, "
          f"{len(wave) / rc.sample_rate:.2f} s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = RunConfig.load(args.config)
    cfg = rc.stft_config()
    fb = _filterbank(rc)
    ref_dir, est_dir = Path(args.ref_dir), Path(args.est_dir)
    names = sorted(p.name for p in ref_dir.glob("*.wav"))
    pairs = [n for n in names if (est_dir / n).exists()]
    if not pairs:
        raise ConfigError(f"no paired .wav files between {ref_dir} and {est_dir}")
    rows = []
    for name in pairs:
        ref = read_wav(ref_dir / name, expected_rate=rc.sample_rate)
        est = read_wav(est_dir / name, expected_rate=rc.sample_rate)
        n = min(len(ref), len(est))  # synthesis length is frames*hop; trim
        rep = evaluate_pair(Waveform(ref.samples[:n], rc.sample_rate),
                            Waveform(est.samples[:n], rc.sample_rate), cfg, fb)
        rows.append((name, rep))
    print(format_table(rows))
    for name, rep in rows:
        print(f"file={name} {rep.to_kv()}")
    return EXIT_OK


def cmd_bench(args) -> int:
    rc = RunConfig.load(args.config)
    voc = build_vocoder(rc)
    load_generator(args.checkpoint, voc)
    fb = _filterbank(rc)
    cfg = rc.stft_config()
    manifest = load_manifest(args.manifest)
    paths = [p for _, p in manifest.entries]
    mels = []
    audio_seconds = 0.0
    for p in paths:
        w = read_wav(p, expected_rate=rc.sample_rate)
        mels.append(mel_spectrogram(w, fb, cfg, rc.amp_floor).values.astype(np.float32))
        audio_seconds += len(w) / rc.sample_rate
    voc.generate(mels[0])  # warm-up pass, excluded from timing
    gen_seconds = 0.0
    for mel in mels:
        t0 = time.perf_counter()
        voc.generate(mel)
        gen_seconds += time.perf_counter() - t0
    value, multiple = rtf_pair(gen_seconds, audio_seconds)
    print(f"rtf={value:.6g} multiple={multiple:.6g} "
          f"gen_seconds={gen_seconds:.6g} audio_seconds={audio_seconds:.6g}")
    print(format_rtf(value, multiple))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apvoc",
        description="Amplitude/phase-spectrum vocoder: feature extraction, "
                    "training, synthesis, evaluation, benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract mel/log-amplitude/phase arrays")
    p.add_argument("config")
    p.add_argument("wavs", nargs="+")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train", help="run adversarial training")
    p.add_argument("config")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default="train_out")
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("synth", help="synthesize a waveform from mel or wav")
    p.add_argument("config")
    p.add_argument("checkpoint")
    p.add_argument("input", help="input .wav (analysis-synthesis) or .arr mel")
    p.add_argument("output")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval", help="paired objective metrics over two dirs")
    p.add_argument("config")
    p.add_argument("ref_dir")
    p.add_argument("est_dir")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="real-time-factor measurement")
    p.add_argument("config")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
