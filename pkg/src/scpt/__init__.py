"""Subject-invariant cross-modal prompt tuning for facial video and pulse signals."""

from .config import RunConfig, load_config, save_config
from .data import Sample, binarize_label, build_loso, segment_trial, synth_dataset
from .dssa import SubspaceFactors, emotion_project, truncated_svd
from .losses import LossWeights
from .model import ModelConfig, SCPTModel, build_model, gradcheck_profile, vit_base_profile, tiny_profile
from .signal_tfr import TFRImage, Waveform, band_crop, morse_cwt, normalize_tfr, resize_bilinear

__version__ = "0.1.0"
