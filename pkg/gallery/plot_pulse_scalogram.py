"""
From a pulse waveform to a scalogram image
==========================================

A synthetic pulse trace is turned into the square time-frequency image the
physiological encoder consumes. We check that the ridge of the scalogram sits
where a zero-padded FFT puts the spectral peak.
"""

import numpy as np

from scpt import Waveform, band_crop, morse_cwt, normalize_tfr, resize_bilinear

fs = 128.0
t = np.arange(int(30 * fs)) / fs
rng = np.random.default_rng(0)
pulse = np.sin(2 * np.pi * 1.2 * t) + 0.4 * np.sin(2 * np.pi * 2.4 * t + 0.3)
w = Waveform(pulse + 0.1 * rng.standard_normal(t.size), fs)

###############################################################################
# The analytic Morse transform with 16 voices per octave covers 0.05 Hz up to
# the Nyquist frequency. Rows ascend in frequency.

tfr = morse_cwt(w, gamma=3.0, beta=20.0, voices_per_octave=16)
print("raw scalogram", tfr.shape, f"{tfr.freq_axis_hz[0]:.3f}..{tfr.freq_axis_hz[-1]:.1f} Hz")

ridge = tfr.freq_axis_hz[tfr.values.mean(axis=1).argmax()]
spec = np.abs(np.fft.rfft(w.samples, 16 * t.size))
peak = np.fft.rfftfreq(16 * t.size, 1 / fs)[spec.argmax()]
print(f"ridge {ridge:.3f} Hz, FFT peak {peak:.3f} Hz, "
      f"gap {abs(np.log2(ridge / peak)) * 16:.2f} voices")

###############################################################################
# Keep the cardiac band, resample to the encoder's input size and rescale to
# the unit interval.

img = normalize_tfr(resize_bilinear(band_crop(tfr, 0.05, 5.0), 32, 32))
print("model input", img.shape, "range", img.values.min(), img.values.max())

# a coarse text rendering, highest frequency on top
for row in img.values[::-4]:
    print("".join(" .:-=+*#%@"[min(int(v * 10), 9)] for v in row))
