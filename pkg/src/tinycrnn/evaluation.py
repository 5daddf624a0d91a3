"""Detection-error-tradeoff curves, FA at a fixed miss rate, endpoint deltas, latency."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    false_detects: int
    fdr: float
    misses: int
    mr: float


@dataclass(frozen=True)
class DetCurve:
    points: tuple  # DetPoint, ascending threshold
    n_pos: int
    n_neg: int

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def thresholds(self):
        return np.array([p.threshold for p in self.points])

    @property
    def fdr(self):
        return np.array([p.fdr for p in self.points])

    @property
    def mr(self):
        return np.array([p.mr for p in self.points])

    def to_csv(self):
        lines = ["threshold,fdr,mr"]
        lines += [f"{p.threshold:.6g},{p.fdr:.6g},{p.mr:.6g}" for p in self.points]
        return "\n".join(lines) + "\n"


def default_thresholds(n=1001):
    return np.linspace(0.0, 1.0, n)


def det_curve(scores, labels, thresholds=None):
    """Miss and false-detection counts at each threshold.

    A score equal to the threshold fires. Misses are positives scoring
    below the threshold; false detects are negatives at or above it.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise EvaluationError(f"{scores.size} scores but {labels.size} labels")
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels != 1])
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("DET curve needs both positive and negative examples")
    th = default_thresholds() if thresholds is None else np.sort(np.asarray(thresholds, dtype=np.float64))
    misses = np.searchsorted(pos, th, side="left")
    false_detects = neg.size - np.searchsorted(neg, th, side="left")
    points = tuple(
        DetPoint(float(t), int(fd), fd / neg.size, int(m), m / pos.size)
        for t, fd, m in zip(th, false_detects, misses)
    )
    return DetCurve(points, int(pos.size), int(neg.size))


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    false_detects: int
    qualified: bool  # False when no threshold reaches the target miss rate

    def __iter__(self):
        return iter((self.threshold, self.false_detects))


def fa_at_mr(curve, target_mr=0.15):
    """False detects at the largest threshold whose miss rate is within ``target_mr``."""
    if not len(curve):
        raise EvaluationError("empty DET curve")
    ok = [p for p in curve if p.mr <= target_mr]
    if ok:
        best = max(ok, key=lambda p: p.threshold)
        return OperatingPoint(best.threshold, best.false_detects, True)
    best = min(curve, key=lambda p: (p.mr, -p.threshold))
    return OperatingPoint(best.threshold, best.false_detects, False)


@dataclass(frozen=True)
class EndpointStats:
    mean_abs_start_delta: float
    mean_abs_end_delta: float
    mean_signed_end_delta: float
    mean_signed_start_delta: float
    n_matched: int
    n_unmatched: int


def _overlap(a, b):
    return min(a[1], b[1]) - max(a[0], b[0]) + 1


def match_detections(detections, references):
    """Pair each reference with the detection it overlaps most (frames, inclusive).

    ``detections`` may be ``Detection`` objects or ``(start, end)`` pairs.
    Returns a list of ``(reference, detection or None)``.
    """
    spans = [(d.start_frame, d.end_frame) if hasattr(d, "start_frame") else tuple(d)
             for d in detections]
    pairs = []
    for ref in references:
        best, best_ov = None, 0
        for span in spans:
            ov = _overlap(ref, span)
            if ov > best_ov:
                best, best_ov = span, ov
        pairs.append((tuple(ref), best))
    return pairs


def endpoint_deltas(detections, references, frame_ms=10):
    """Start/end offsets of matched detections relative to references, in ms.

    Signed deltas are detection minus reference, so a late end is positive.
    """
    pairs = match_detections(detections, references)
    matched = [(r, d) for r, d in pairs if d is not None]
    if not matched:
        raise EvaluationError("no detection overlaps any reference")
    ref = np.array([r for r, _ in matched], dtype=np.float64)
    det = np.array([d for _, d in matched], dtype=np.float64)
    delta = (det - ref) * frame_ms
    return EndpointStats(
        mean_abs_start_delta=float(np.abs(delta[:, 0]).mean()),
        mean_abs_end_delta=float(np.abs(delta[:, 1]).mean()),
        mean_signed_end_delta=float(delta[:, 1].mean()),
        mean_signed_start_delta=float(delta[:, 0].mean()),
        n_matched=len(matched),
        n_unmatched=len(pairs) - len(matched),
    )


def latency(stats, baseline_ms=50):
    return baseline_ms + stats.mean_signed_end_delta


def format_latency(ms):
    return f"latency {ms:.0f}ms"


def summary(curve, stats=None, baseline_ms=50, target_mr=0.15):
    """Flat record of the headline numbers, ready for JSON."""
    op = fa_at_mr(curve, target_mr)
    out = {
        "n_pos": curve.n_pos,
        "n_neg": curve.n_neg,
        "fa_at_mr": {"target_mr": target_mr, "threshold": float(f"{op.threshold:.6g}"),
                     "false_detects": op.false_detects, "qualified": op.qualified},
    }
    if stats is not None:
        out["endpoints_ms"] = {k: float(f"{getattr(stats, k):.6g}") if isinstance(getattr(stats, k), float)
                               else getattr(stats, k) for k in stats.__dataclass_fields__}
        out["latency_ms"] = float(f"{latency(stats, baseline_ms):.6g}")
    return out


def summary_json(record):
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def ablation_table(rows):
    """Text table comparing models: ``rows`` is a list of ``(name, OperatingPoint, n_neg)``.

    The last column compares each row's false detects against the first row.
    """
    header = f"{'model':<24}{'threshold':>10}{'FA@MR':>8}{'FDR':>10}  vs first"
    lines = [header]
    base = rows[0][1].false_detects if rows else 0
    for name, op, n_neg in rows:
        diff = op.false_detects - base
        direction = "same" if diff == 0 else ("fewer" if diff < 0 else "more")
        flag = "" if op.qualified else " (MR target not reached)"
        lines.append(f"{name:<24}{op.threshold:>10.6g}{op.false_detects:>8d}"
                     f"{op.false_detects / n_neg:>10.6g}  {direction} ({diff:+d}){flag}")
    return "\n".join(lines) + "\n"
