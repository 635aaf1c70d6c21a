"""Pulse waveform to time-frequency image.

The scalogram uses the analytic generalized Morse wavelet, built directly in
the frequency domain and applied by multiplication with the zero-padded DFT
of the signal. Rows are ordered by increasing center frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBand, NonFiniteInput, TooShort

DEFAULT_GAMMA = 3.0
DEFAULT_BETA = 20.0
DEFAULT_VOICES = 16
DEFAULT_FMIN_HZ = 0.05


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class TFRImage:
    values: np.ndarray
    freq_axis_hz: np.ndarray
    time_axis_s: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        freqs = np.asarray(self.freq_axis_hz, dtype=np.float64)
        times = np.asarray(self.time_axis_s, dtype=np.float64)
        if values.shape != (len(freqs), len(times)):
            raise ValueError(
                f"values shape {values.shape} does not match axes "
                f"({len(freqs)}, {len(times)})"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freq_axis_hz", freqs)
        object.__setattr__(self, "time_axis_s", times)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def morse_wavelet_fd(omega: np.ndarray, gamma: float, beta: float) -> np.ndarray:
    """Peak-normalized analytic Morse window evaluated at radian frequencies.

    Zero for ``omega <= 0``; equal to 1 at the peak ``(beta/gamma)**(1/gamma)``.
    """
    omega = np.asarray(omega, dtype=np.float64)
    out = np.zeros_like(omega)
    pos = omega > 0
    peak = (beta / gamma) ** (1.0 / gamma)
    w = omega[pos]
    # log form avoids overflow of omega**beta for large beta
    out[pos] = np.exp(beta * np.log(w / peak) - (w**gamma - peak**gamma))
    return out


def morse_peak_frequency(gamma: float, beta: float) -> float:
    return (beta / gamma) ** (1.0 / gamma)


def log_frequency_grid(
    sample_rate_hz: float, voices_per_octave: int, fmin_hz: float = DEFAULT_FMIN_HZ
) -> np.ndarray:
    nyquist = sample_rate_hz / 2.0
    n = int(np.floor(voices_per_octave * np.log2(nyquist / fmin_hz) - 1e-9)) + 1
    freqs = fmin_hz * 2.0 ** (np.arange(n) / voices_per_octave)
    return freqs[freqs < nyquist]


def _check_waveform(w: Waveform) -> None:
    if len(w.samples) < 2:
        raise TooShort(f"waveform needs at least 2 samples, got {len(w.samples)}")
    if not np.all(np.isfinite(w.samples)):
        raise NonFiniteInput("waveform contains NaN or Inf samples")


def morse_cwt(
    w: Waveform,
    gamma: float = DEFAULT_GAMMA,
    beta: float = DEFAULT_BETA,
    voices_per_octave: int = DEFAULT_VOICES,
    fmin_hz: float = DEFAULT_FMIN_HZ,
) -> TFRImage:
    """Magnitude scalogram of ``w`` on a log-frequency grid up to Nyquist."""
    if not (gamma > 0 and beta > 0):
        raise ValueError("gamma and beta must be positive")
    if voices_per_octave < 1:
        raise ValueError("voices_per_octave must be >= 1")
    _check_waveform(w)

    x = w.samples
    n = len(x)
    n_fft = 1 << int(np.ceil(np.log2(n)))
    spectrum = np.fft.fft(x, n=n_fft)
    omega = 2.0 * np.pi * np.fft.fftfreq(n_fft)  # rad / sample

    freqs = log_frequency_grid(w.sample_rate_hz, voices_per_octave, fmin_hz)
    peak = morse_peak_frequency(gamma, beta)
    scales = peak * w.sample_rate_hz / (2.0 * np.pi * freqs)

    window = morse_wavelet_fd(scales[:, None] * omega[None, :], gamma, beta)
    coeffs = np.fft.ifft(spectrum[None, :] * window, axis=1)[:, :n]
    return TFRImage(np.abs(coeffs), freqs, np.arange(n) / w.sample_rate_hz)


def band_crop(t: TFRImage, f_lo_hz: float, f_hi_hz: float) -> TFRImage:
    if not f_lo_hz < f_hi_hz:
        raise ValueError("band_crop requires f_lo_hz < f_hi_hz")
    keep = (t.freq_axis_hz >= f_lo_hz) & (t.freq_axis_hz <= f_hi_hz)
    if not keep.any():
        raise EmptyBand(f"no rows within [{f_lo_hz}, {f_hi_hz}] Hz")
    return TFRImage(t.values[keep], t.freq_axis_hz[keep], t.time_axis_s)


def _source_coords(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centers (align_corners=False)
    return (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5


def _interp_weights(n_in: int, n_out: int):
    src = np.clip(_source_coords(n_in, n_out), 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def _resample_axis(axis: np.ndarray, n_out: int, log: bool) -> np.ndarray:
    n_in = len(axis)
    if n_in == n_out:
        return axis.copy()
    if n_in == 1:
        return np.full(n_out, axis[0])
    # unclamped linear map keeps the axis strictly monotone
    src = _source_coords(n_in, n_out)
    vals = np.log(axis) if log else axis
    step = np.diff(vals)
    idx = np.clip(np.floor(src).astype(int), 0, n_in - 2)
    out = vals[idx] + (src - idx) * step[idx]
    return np.exp(out) if log else out


def resize_bilinear(t: TFRImage, out_rows: int, out_cols: int) -> TFRImage:
    if out_rows < 1 or out_cols < 1:
        raise ValueError("output size must be at least 1x1")
    rows, cols = t.shape
    if (rows, cols) == (out_rows, out_cols):
        return TFRImage(t.values.copy(), t.freq_axis_hz.copy(), t.time_axis_s.copy())

    r0, r1, fr = _interp_weights(rows, out_rows)
    c0, c1, fc = _interp_weights(cols, out_cols)
    v = t.values
    top = v[r0][:, c0] * (1 - fc) + v[r0][:, c1] * fc
    bottom = v[r1][:, c0] * (1 - fc) + v[r1][:, c1] * fc
    values = top * (1 - fr)[:, None] + bottom * fr[:, None]

    log_freq = bool(np.all(t.freq_axis_hz > 0))
    return TFRImage(
        values,
        _resample_axis(t.freq_axis_hz, out_rows, log=log_freq),
        _resample_axis(t.time_axis_s, out_cols, log=False),
    )


def normalize_tfr(t: TFRImage) -> TFRImage:
    v = t.values
    lo, hi = v.min(), v.max()
    if hi == lo:
        scaled = np.zeros_like(v)
    else:
        scaled = (v - lo) / (hi - lo)
    return TFRImage(scaled, t.freq_axis_hz, t.time_axis_s)


def waveform_to_tfr(
    w: Waveform,
    size: int | tuple[int, int] = 224,
    band_hz: tuple[float, float] = (DEFAULT_FMIN_HZ, 5.0),
    gamma: float = DEFAULT_GAMMA,
    beta: float = DEFAULT_BETA,
    voices_per_octave: int = DEFAULT_VOICES,
) -> TFRImage:
    """CWT, band focus, resize and min-max scaling in one call."""
    rows, cols = (size, size) if isinstance(size, int) else size
    tfr = morse_cwt(w, gamma, beta, voices_per_octave)
    tfr = band_crop(tfr, *band_hz)
    tfr = resize_bilinear(tfr, rows, cols)
    return normalize_tfr(tfr)
