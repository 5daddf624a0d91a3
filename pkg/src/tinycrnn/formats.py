"""On-disk formats: feature files, dataset manifests, training history."""

import os
from pathlib import Path

import numpy as np

from .errors import InputError
from .train.synthetic import Dataset

FEAT_MAGIC = b"FEAT"


def write_features(path, feats):
    """Write a (frames, bins) matrix as one ``FEAT t n`` line plus LE float32."""
    feats = np.asarray(feats, dtype="<f4")
    if feats.ndim != 2:
        raise InputError(f"{path}: features must be 2-D, got shape {feats.shape}")
    with open(path, "wb") as fh:
        fh.write(b"FEAT %d %d\n" % feats.shape)
        fh.write(feats.tobytes())


def is_feature_file(path):
    with open(path, "rb") as fh:
        return fh.read(5) == FEAT_MAGIC + b" "


def read_features(path):
    try:
        with open(path, "rb") as fh:
            header = fh.readline()
            body = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    parts = header.split()
    if len(parts) != 3 or parts[0] != FEAT_MAGIC:
        raise InputError(f"{path}: not a feature file (bad header)")
    try:
        t, n = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"{path}: bad shape in header") from exc
    if len(body) != 4 * t * n:
        raise InputError(f"{path}: expected {4 * t * n} bytes of data, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(t, n).astype(np.float32)


def write_dataset(directory, dataset, manifest="manifest.csv"):
    """Store each example as a feature file and list them in a manifest.

    Manifest lines are ``path,label,start_frame,end_frame`` with paths
    relative to the manifest's directory. Returns the manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = len(str(max(len(dataset) - 1, 0)))
    lines = []
    for i in range(len(dataset)):
        name = f"ex{i:0{width}d}.feat"
        write_features(directory / name, dataset.feats[i])
        lines.append(f"{name},{dataset.labels[i]},{dataset.starts[i]},{dataset.ends[i]}")
    out = directory / manifest
    out.write_text("\n".join(lines) + "\n")
    return out


def read_manifest(path):
    """Load a manifest and every feature file it names into a :class:`Dataset`."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.csv"
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    feats, labels, starts, ends = [], [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise InputError(f"{path}:{lineno}: expected path,label,start_frame,end_frame")
        try:
            label, start, end = (int(f) for f in fields[1:])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: non-integer field") from exc
        if label not in (0, 1):
            raise InputError(f"{path}:{lineno}: label must be 0 or 1")
        feat_path = fields[0] if os.path.isabs(fields[0]) else path.parent / fields[0]
        feats.append(read_features(feat_path))
        labels.append(label)
        starts.append(start)
        ends.append(end)
    if not feats:
        raise InputError(f"{path}: manifest is empty")
    if len({f.shape for f in feats}) != 1:
        raise InputError(f"{path}: feature files differ in shape")
    return Dataset(np.stack(feats), np.array(labels), np.array(starts), np.array(ends))
