"""Samples, the synthetic generator, clip segmentation and LOSO plans."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .errors import ClipTooLong, TooFewSubjects
from .signal_tfr import Waveform


@dataclass
class Sample:
    frames: np.ndarray  # (F, C, H, W) in [0, 1]
    frame_rate_hz: float
    waveform: Waveform
    valence_score: float
    arousal_score: float
    subject_id: int
    trial_id: int
    clip_index: int = -1

    @property
    def duration_s(self) -> float:
        return self.waveform.duration_s

    def score(self, target: str) -> float:
        return self.valence_score if target == "valence" else self.arousal_score


def binarize_label(score: float, threshold: float = 5.0) -> int:
    """1 for scores strictly above ``threshold``; the threshold itself maps to 0."""
    return int(score > threshold)


def _class_score(rng, high: bool) -> float:
    # high half is (5, 9], low half is [1, 5]
    u = rng.random()
    return 9.0 - 4.0 * u if high else 1.0 + 4.0 * u


def synth_dataset(
    num_subjects: int,
    trials_per_subject: int,
    confound_strength: float,
    seed: int = 0,
    duration_s: float = 30.0,
    sample_rate_hz: float = 128.0,
    frame_rate_hz: float = 1.0,
    img_size: int = 32,
    motif_strength: float = 0.15,
) -> list[Sample]:
    """Subjects with class-driven pulse rate and facial motif plus confounds.

    Arousal sets the pulse frequency (high 1.3-1.8 Hz, low 0.9-1.2 Hz) and the
    brightness of the lower-right quadrant; valence sets the upper-left
    quadrant. Each subject adds a baseline drift, extra noise and a colour
    tint, all scaled by ``confound_strength``.
    """
    if num_subjects < 3:
        raise TooFewSubjects("synth_dataset needs at least 3 subjects")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    n_frames = max(int(round(duration_s * frame_rate_hz)), 1)
    half = img_size // 2

    samples = []
    for subject in range(num_subjects):
        drift_freq = rng.uniform(0.05, 0.3)
        drift_amp = rng.uniform(0.5, 1.5)
        drift_offset = rng.normal(0.0, 1.0)
        noise_extra = rng.uniform(0.0, 0.5)
        tint = rng.normal(0.0, 1.0, size=3)
        tint = 0.25 * tint / np.linalg.norm(tint)
        tint_pattern = rng.normal(0.0, 0.1, size=(img_size, img_size))

        for trial in range(trials_per_subject):
            valence = _class_score(rng, rng.random() < 0.5)
            arousal = _class_score(rng, rng.random() < 0.5)
            high_arousal = arousal > 5.0
            hr = rng.uniform(1.3, 1.8) if high_arousal else rng.uniform(0.9, 1.2)
            phase = rng.uniform(0, 2 * np.pi, size=3)
            pulse = np.sin(2 * np.pi * hr * t + phase[0]) + 0.4 * np.sin(
                4 * np.pi * hr * t + phase[1]
            )
            drift = drift_amp * np.sin(2 * np.pi * drift_freq * t + phase[2]) + drift_offset
            noise_sd = 0.1 + confound_strength * noise_extra
            wave = pulse + confound_strength * drift + noise_sd * rng.standard_normal(n)

            base = np.full((3, img_size, img_size), 0.5)
            base[:, :half, :half] += motif_strength * (1 if valence > 5.0 else -1)
            base[:, half:, half:] += motif_strength * (1 if high_arousal else -1)
            base += confound_strength * (tint[:, None, None] + tint_pattern[None])
            frames = base[None] + 0.08 * rng.standard_normal((n_frames, 3, img_size, img_size))
            frames = np.clip(frames, 0.0, 1.0).astype(np.float32)

            samples.append(
                Sample(
                    frames=frames,
                    frame_rate_hz=frame_rate_hz,
                    waveform=Waveform(wave, sample_rate_hz),
                    valence_score=valence,
                    arousal_score=arousal,
                    subject_id=subject,
                    trial_id=subject * trials_per_subject + trial,
                )
            )
    return samples


def segment_trial(s: Sample, clip_seconds: float = 5.0) -> list[Sample]:
    """Non-overlapping clips; a trailing remainder shorter than a clip is dropped."""
    if clip_seconds <= 0:
        raise ValueError("clip_seconds must be positive")
    duration = s.duration_s
    if clip_seconds > duration + 1e-9:
        raise ClipTooLong(f"clip of {clip_seconds}s exceeds trial of {duration}s")
    fs = s.waveform.sample_rate_hz
    per_clip = int(round(clip_seconds * fs))
    n_clips = len(s.waveform.samples) // per_clip
    frame_times = np.arange(len(s.frames)) / s.frame_rate_hz

    clips = []
    for k in range(n_clips):
        start, stop = k * clip_seconds, (k + 1) * clip_seconds
        idx = np.nonzero((frame_times >= start - 1e-9) & (frame_times < stop - 1e-9))[0]
        if len(idx) == 0:
            idx = np.array([min(int(start * s.frame_rate_hz), len(s.frames) - 1)])
        wave = s.waveform.samples[k * per_clip : (k + 1) * per_clip]
        clips.append(
            replace(s, frames=s.frames[idx], waveform=Waveform(wave, fs), clip_index=k)
        )
    return clips


def segment_dataset(samples, clip_seconds: float = 5.0) -> list[Sample]:
    return [clip for s in samples for clip in segment_trial(s, clip_seconds)]


@dataclass
class Fold:
    test_subject: int
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    subject_index: dict  # training subject id -> head label

    def subject_labels(self, subject_ids) -> np.ndarray:
        return np.array([self.subject_index[int(s)] for s in subject_ids])


@dataclass
class LOSOPlan:
    folds: list
    seed: int

    def __len__(self):
        return len(self.folds)


def build_loso(dataset, seed: int = 0, val_fraction: float = 0.2) -> LOSOPlan:
    """One fold per subject; the rest split by whole trials into train and val.

    Trials are shuffled per fold and added to validation greedily until it
    holds the share closest to ``val_fraction`` of the remaining samples.
    """
    subjects = np.array([s.subject_id for s in dataset])
    trials = np.array([s.trial_id for s in dataset])
    unique = np.unique(subjects)
    if len(unique) < 3:
        raise TooFewSubjects(f"LOSO needs at least 3 subjects, got {len(unique)}")

    folds = []
    for k, test_subject in enumerate(unique):
        test_ids = np.nonzero(subjects == test_subject)[0]
        groups = defaultdict(list)
        for i in np.nonzero(subjects != test_subject)[0]:
            groups[(subjects[i], trials[i])].append(i)
        keys = sorted(groups)
        order = np.random.default_rng([seed, k]).permutation(len(keys))
        total = sum(len(g) for g in groups.values())
        target = val_fraction * total
        val, count = [], 0
        for j in order:
            g = groups[keys[j]]
            if abs(count + len(g) - target) < abs(count - target):
                val.extend(g)
                count += len(g)
        val_set = set(val)
        train = [i for key in keys for i in groups[key] if i not in val_set]
        train_subjects = sorted({int(s) for s in unique if s != test_subject})
        folds.append(
            Fold(
                test_subject=int(test_subject),
                train_ids=np.array(sorted(train), dtype=int),
                val_ids=np.array(sorted(val), dtype=int),
                test_ids=test_ids,
                subject_index={s: i for i, s in enumerate(train_subjects)},
            )
        )
    return LOSOPlan(folds, seed)
