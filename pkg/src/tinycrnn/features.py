"""Log mel filter-bank energies and the fixed delta transform."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class LfbeConfig:
    sample_rate: int = 16000
    window: int = 400
    hop: int = 160
    n_mels: int = 64
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.hop > self.window:
            raise InputError(f"hop ({self.hop}) exceeds window ({self.window})")
        if self.fmax > self.sample_rate / 2:
            raise InputError(f"fmax {self.fmax} above Nyquist {self.sample_rate / 2}")
        if not 0 <= self.fmin < self.fmax:
            raise InputError("need 0 <= fmin < fmax")

    @property
    def n_fft(self):
        return 1 << (self.window - 1).bit_length()

    def n_frames(self, n_samples):
        return (n_samples - self.window) // self.hop + 1

    def n_samples(self, n_frames):
        """Smallest PCM length that yields ``n_frames`` frames."""
        return self.window + (n_frames - 1) * self.hop


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg):
    """Triangular HTK-mel filters, shape ``(n_mels, n_fft // 2 + 1)``.

    Each triangle is evaluated at the FFT bin frequencies, so narrow
    low-frequency filters still pick up the nearest bin.
    """
    n_bins = cfg.n_fft // 2 + 1
    bin_hz = np.linspace(0.0, cfg.sample_rate / 2, n_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz - lo) / (mid - lo)
    falling = (hi - bin_hz) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = ~np.any(fb > 0, axis=1)
    if np.any(empty):
        # a filter narrower than the bin spacing: give it its nearest bin
        for m in np.flatnonzero(empty):
            fb[m, np.argmin(np.abs(bin_hz - edges[m + 1]))] = 1.0
    return fb


def hann(n):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def lfbe(pcm, cfg=LfbeConfig()):
    """Compute log mel filter-bank energies.

    Parameters
    ----------
    pcm : sequence of float
        Mono samples at ``cfg.sample_rate``.
    cfg : LfbeConfig

    Returns
    -------
    ndarray of float32, shape (n_frames, n_mels)
    """
    x = np.asarray(pcm, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"pcm must be 1-D, got shape {x.shape}")
    if len(x) < cfg.window:
        raise InputError(f"pcm has {len(x)} samples, need at least one window of {cfg.window}")
    t = cfg.n_frames(len(x))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window)[::cfg.hop][:t]
    spec = np.fft.rfft(frames * hann(cfg.window), n=cfg.n_fft)
    power = spec.real ** 2 + spec.imag ** 2
    energies = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(energies, cfg.log_floor)).astype(np.float32)


def delta_lfbe(frames):
    """Frame-to-frame difference ``out[i] = frames[i+1] - frames[i]``.

    Same result as a fixed 2x1 valid convolution with weights [-1, 1].
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 2:
        raise InputError(f"delta needs at least 2 frames, got shape {frames.shape}")
    return frames[1:] - frames[:-1]


def read_pcm(path, fmt="s16le"):
    """Read headerless mono PCM: ``s16le`` (scaled to [-1, 1)) or ``f32le``."""
    if fmt == "s16le":
        return np.fromfile(path, dtype="<i2").astype(np.float32) / 32768.0
    if fmt == "f32le":
        return np.fromfile(path, dtype="<f4").astype(np.float32)
    raise InputError(f"unknown PCM format {fmt!r}")


def write_pcm(path, samples, fmt="s16le"):
    samples = np.asarray(samples)
    if fmt == "s16le":
        np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2").tofile(path)
    elif fmt == "f32le":
        samples.astype("<f4").tofile(path)
    else:
        raise InputError(f"unknown PCM format {fmt!r}")
