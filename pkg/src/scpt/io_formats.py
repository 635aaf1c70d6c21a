"""Binary tensor files, checkpoints, waveform text and image/dataset adapters.

Tensor file layout (little-endian)::

    b"SCPT" | version u16 | count u32 |
    per tensor: name_len u16 | name utf-8 | dtype u8 | ndim u8 | dims u32* | payload

dtype tags: 1 = float32, 2 = float64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import Sample
from .errors import CorruptFile, DataError, VersionMismatch
from .model import FROZEN_PREFIX, TRAIN_PREFIX, ModelConfig, SCPTModel, build_model
from .signal_tfr import TFRImage, Waveform

MAGIC = b"SCPT"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
TAGS = {np.dtype("float32"): 1, np.dtype("float64"): 2}


def write_tensors(path, tensors: dict) -> None:
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in TAGS:
            arr = arr.astype(np.float64)
        tag = TAGS[arr.dtype]
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<BB", tag, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=DTYPES[tag]).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_tensors(path) -> dict:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CorruptFile(f"{path}: truncated at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CorruptFile(f"{path}: bad magic")
    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {VERSION}")
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFile(f"{path}: tensor name is not UTF-8") from exc
        if name in out:
            raise CorruptFile(f"{path}: duplicate tensor name {name!r}")
        tag, ndim = struct.unpack("<BB", take(2))
        if tag not in DTYPES:
            raise CorruptFile(f"{path}: unknown dtype tag {tag}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dt = DTYPES[tag]
        n_bytes = dt.itemsize * int(np.prod(dims, dtype=np.int64))
        out[name] = np.frombuffer(take(n_bytes), dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    if pos != len(data):
        raise CorruptFile(f"{path}: {len(data) - pos} trailing bytes")
    return out


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: SCPTModel, path, meta: dict | None = None) -> None:
    tensors = {name: p.detach().cpu().numpy() for name, p in model.checkpoint_names()}
    for key, value in (meta or {}).items():
        tensors[f"meta.{key}"] = np.array([value], dtype=np.float64)
    write_tensors(path, tensors)


def load_checkpoint(path) -> dict:
    return read_tensors(path)


def checkpoint_meta(tensors: dict) -> dict:
    return {k[5:]: float(v[0]) for k, v in tensors.items() if k.startswith("meta.")}


def model_from_checkpoint(tensors: dict, config: ModelConfig) -> SCPTModel:
    """Rebuild a model from checkpoint tensors; every parameter must be present."""
    meta = checkpoint_meta(tensors)
    cfg = ModelConfig(**{**config.__dict__})
    if "num_subjects" in meta:
        cfg.num_subjects = int(meta["num_subjects"])
    sample = next(v for k, v in tensors.items() if not k.startswith("meta."))
    dtype = torch.float64 if sample.dtype == np.float64 else torch.float32
    model = build_model(cfg, dtype=dtype)
    with torch.no_grad():
        for name, p in model.checkpoint_names():
            if name not in tensors:
                raise CorruptFile(f"checkpoint lacks tensor {name!r}")
            value = torch.from_numpy(np.array(tensors[name]))
            if tuple(value.shape) != tuple(p.shape):
                raise CorruptFile(f"tensor {name!r} has shape {tuple(value.shape)}, model {tuple(p.shape)}")
            p.copy_(value)
    return model


def backbone_state(tensors: dict) -> dict:
    """Backbone weights keyed by parameter name inside ``Backbone``."""
    prefix = FROZEN_PREFIX + "backbone."
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def partition(tensors: dict):
    frozen = {k: v for k, v in tensors.items() if k.startswith(FROZEN_PREFIX)}
    train = {k: v for k, v in tensors.items() if k.startswith(TRAIN_PREFIX)}
    return frozen, train


# -- waveforms and images ---------------------------------------------------


def read_waveform_text(path) -> Waveform:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("sample_rate_hz="):
        raise DataError(f"{path}: first line must be sample_rate_hz=<float>")
    try:
        rate = float(lines[0].split("=", 1)[1])
        samples = np.array([float(v) for v in lines[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return Waveform(samples, rate)


def write_waveform_text(w: Waveform, path) -> None:
    body = "\n".join(repr(float(v)) for v in w.samples)
    Path(path).write_text(f"sample_rate_hz={w.sample_rate_hz!r}\n{body}\n")


def read_waveform(path) -> Waveform:
    path = Path(path)
    if path.read_bytes()[:4] == MAGIC:
        t = read_tensors(path)
        return Waveform(t["waveform"], float(t["sample_rate_hz"][0]))
    return read_waveform_text(path)


def save_tfr(t: TFRImage, path) -> None:
    write_tensors(path, {"tfr": t.values, "freq_axis_hz": t.freq_axis_hz,
                         "time_axis_s": t.time_axis_s})


def load_tfr(path) -> TFRImage:
    t = read_tensors(path)
    return TFRImage(t["tfr"], t["freq_axis_hz"], t["time_axis_s"])


def write_pgm(values: np.ndarray, path) -> None:
    """8-bit grayscale dump; highest-frequency row at the top."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    Image.fromarray((scaled[::-1] * 255).round().astype(np.uint8), mode="L").save(path, "PPM")


def read_frame(path) -> np.ndarray:
    """PGM/PPM image as ``(3, H, W)`` float32 in ``[0, 1]``."""
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return img.transpose(2, 0, 1)


def write_frame(frame: np.ndarray, path) -> None:
    arr = (np.clip(frame, 0, 1).transpose(1, 2, 0) * 255).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, "PPM")


# -- datasets ----------------------------------------------------------------

DATASET_FILE = "dataset.tensor"


def save_dataset(samples: list[Sample], directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / DATASET_FILE
    write_tensors(path, {
        "frames": np.stack([s.frames for s in samples]).astype(np.float32),
        "waveforms": np.stack([s.waveform.samples for s in samples]),
        "meta": np.array([[s.valence_score, s.arousal_score, s.subject_id, s.trial_id]
                          for s in samples], dtype=np.float64),
        "rates": np.array([samples[0].waveform.sample_rate_hz, samples[0].frame_rate_hz]),
    })
    return path


def export_sample_dirs(samples: list[Sample], directory) -> None:
    """Write one directory per sample: ``wave.txt``, ``meta.txt``, ``frames/*.ppm``."""
    for i, s in enumerate(samples):
        d = Path(directory) / f"sample_{i:05d}"
        (d / "frames").mkdir(parents=True, exist_ok=True)
        write_waveform_text(s.waveform, d / "wave.txt")
        (d / "meta.txt").write_text(
            f"valence={s.valence_score!r}\narousal={s.arousal_score!r}\n"
            f"subject={s.subject_id}\ntrial={s.trial_id}\nframe_rate_hz={s.frame_rate_hz!r}\n"
        )
        for k, frame in enumerate(s.frames):
            write_frame(frame, d / "frames" / f"{k:05d}.ppm")


def _read_sample_dir(d: Path) -> Sample:
    meta = {}
    for line in (d / "meta.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = float(v)
    frame_paths = sorted(p for p in (d / "frames").iterdir() if p.suffix in (".ppm", ".pgm"))
    if not frame_paths:
        raise DataError(f"{d}: no frames")
    return Sample(
        frames=np.stack([read_frame(p) for p in frame_paths]),
        frame_rate_hz=meta.get("frame_rate_hz", 1.0),
        waveform=read_waveform_text(d / "wave.txt"),
        valence_score=meta["valence"],
        arousal_score=meta["arousal"],
        subject_id=int(meta["subject"]),
        trial_id=int(meta["trial"]),
    )


def load_dataset(directory) -> list[Sample]:
    d = Path(directory)
    if (d / DATASET_FILE).exists():
        t = read_tensors(d / DATASET_FILE)
        fs, fr = (float(v) for v in t["rates"])
        return [
            Sample(frames=t["frames"][i], frame_rate_hz=fr,
                   waveform=Waveform(t["waveforms"][i], fs),
                   valence_score=float(m[0]), arousal_score=float(m[1]),
                   subject_id=int(m[2]), trial_id=int(m[3]))
            for i, m in enumerate(t["meta"])
        ]
    dirs = sorted(p for p in d.iterdir() if p.is_dir() and (p / "meta.txt").exists())
    if not dirs:
        raise DataError(f"{d}: neither {DATASET_FILE} nor sample directories found")
    return [_read_sample_dir(p) for p in dirs]
