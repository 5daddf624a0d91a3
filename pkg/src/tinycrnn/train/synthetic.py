"""Synthetic chirp-in-noise keyword data in the LFBE domain.

A positive carries a rising mel-trajectory "chirp" at a random onset; a
negative is either plain noise or a distractor, which is the same chirp
played backwards in time. Telling the two apart needs temporal order,
which is exactly what the recurrent layer is for.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import SpecError


@dataclass(frozen=True)
class SyntheticSpec:
    n_pos: int = 256
    n_neg: int = 256
    n_frames: int = 100
    n_mels: int = 20
    start_bin: float = 3.0
    end_bin: float = 16.0
    duration: int = 30
    amplitude: float = 5.0
    width: float = 1.0
    noise: float = 1.0
    distractor_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.duration > self.n_frames:
            raise SpecError(f"chirp duration {self.duration} exceeds {self.n_frames} frames")
        if self.duration < 2:
            raise SpecError("chirp duration must be at least 2 frames")
        if self.amplitude <= 0:
            raise SpecError("amplitude must be positive")
        if self.n_pos < 0 or self.n_neg < 0 or self.n_pos + self.n_neg == 0:
            raise SpecError("need a non-empty dataset")
        if not 0 <= self.distractor_prob <= 1:
            raise SpecError("distractor_prob must lie in [0, 1]")
        for b in (self.start_bin, self.end_bin):
            if not 0 <= b <= self.n_mels - 1:
                raise SpecError(f"chirp bin {b} outside 0..{self.n_mels - 1}")

    @classmethod
    def for_bins(cls, n_mels, **kw):
        """Defaults scaled to a filterbank size (chirp spans ~15%..80% of it)."""
        kw.setdefault("start_bin", round(0.15 * (n_mels - 1), 1))
        kw.setdefault("end_bin", round(0.8 * (n_mels - 1), 1))
        kw.setdefault("width", max(1.0, n_mels / 20))
        return cls(n_mels=n_mels, **kw)


@dataclass
class Dataset:
    feats: np.ndarray   # (N, frames, n_mels) float32
    labels: np.ndarray  # (N,) int
    starts: np.ndarray  # first pattern frame, -1 when absent
    ends: np.ndarray    # last pattern frame, -1 when absent

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return Dataset(self.feats[idx], self.labels[idx], self.starts[idx], self.ends[idx])


def chirp_template(spec):
    """Noise-free chirp of shape (duration, n_mels), unit peak per frame."""
    j = np.arange(spec.duration)[:, None]
    centre = spec.start_bin + (spec.end_bin - spec.start_bin) * j / (spec.duration - 1)
    bins = np.arange(spec.n_mels)[None, :]
    return np.exp(-0.5 * ((bins - centre) / spec.width) ** 2)


def gen_synthetic(spec):
    """Generate a labelled dataset; positives first, then negatives, then shuffled."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_pos + spec.n_neg
    template = spec.amplitude * chirp_template(spec)
    feats = spec.noise * rng.standard_normal((n, spec.n_frames, spec.n_mels))
    labels = np.zeros(n, dtype=int)
    labels[:spec.n_pos] = 1
    starts = np.full(n, -1)
    ends = np.full(n, -1)
    max_onset = spec.n_frames - spec.duration
    for i in range(n):
        onset = int(rng.integers(0, max_onset + 1))
        if labels[i] == 1:
            feats[i, onset:onset + spec.duration] += template
            starts[i], ends[i] = onset, onset + spec.duration - 1
        elif rng.random() < spec.distractor_prob:
            feats[i, onset:onset + spec.duration] += template[::-1]
    order = rng.permutation(n)
    return Dataset(feats[order].astype(np.float32), labels[order], starts[order], ends[order])


def matched_filter_scores(feats, spec):
    """Peak normalised correlation of each example with the chirp template."""
    t = chirp_template(spec)
    t = t / np.linalg.norm(t)
    x = np.asarray(feats, dtype=np.float64)
    win = np.lib.stride_tricks.sliding_window_view(x, spec.duration, axis=1)
    # win: (N, onsets, n_mels, duration)
    corr = np.einsum("nomd,dm->no", win, t)
    return corr.max(axis=1)


def matched_filter_accuracy(dataset, spec):
    """Accuracy of thresholding the matched filter at half the clean response."""
    threshold = 0.5 * spec.amplitude * np.linalg.norm(chirp_template(spec))
    pred = matched_filter_scores(dataset.feats, spec) >= threshold
    return float(np.mean(pred == (dataset.labels == 1)))
