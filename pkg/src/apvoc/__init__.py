"""apvoc: a self-contained amplitude/phase-spectrum neural vocoder.

The package synthesizes waveforms from mel-spectrograms by predicting the
log-amplitude and wrapped-phase spectra in parallel at the input frame rate
and reconstructing audio with an inverse STFT.  It ships its own reverse-mode
autodiff engine, adversarial training loop, and objective evaluation suite.
"""

from apvoc.dsp import (
    ComplexSpectrogram,
    LogAmplitudeSpectrogram,
    MelFilterbank,
    MelSpectrogram,
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
from apvoc.autodiff import Parameter, Tape, Tensor, grad_check
from apvoc.config import Manifest, RunConfig, load_manifest
from apvoc.discriminators import DiscriminatorEnsemble
from apvoc.generator import Vocoder
from apvoc.losses import LossReport, LossWeights
from apvoc.metrics import MetricReport, evaluate_pair
from apvoc.training import (
    AdamW,
    Trainer,
    build_ensemble,
    build_trainer,
    build_vocoder,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "AdamW",
    "ComplexSpectrogram",
    "DiscriminatorEnsemble",
    "LogAmplitudeSpectrogram",
    "LossReport",
    "LossWeights",
    "Manifest",
    "MelFilterbank",
    "MelSpectrogram",
    "MetricReport",
    "Parameter",
    "PhaseSpectrogram",
    "RunConfig",
    "StftConfig",
    "Tape",
    "Tensor",
    "Trainer",
    "Vocoder",
    "Waveform",
    "anti_wrap",
    "build_ensemble",
    "build_trainer",
    "build_vocoder",
    "evaluate_pair",
    "grad_check",
    "istft",
    "load_checkpoint",
    "load_manifest",
    "log_amplitude",
    "mel_filterbank",
    "mel_spectrogram",
    "phase_of",
    "phi",
    "reconstruct_complex",
    "save_checkpoint",
    "stft",
]

__version__ = "0.1.0"
