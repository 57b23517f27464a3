"""Datasets: CIFAR-10 binary batches and a deterministic synthetic glyph set."""

from dataclasses import dataclass

import numpy as np

from ..errors import BadLabel, BadRecordSize

CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return self.images[idx], int(self.labels[idx])
        return Dataset(self.images[idx], self.labels[idx])

    @property
    def classes(self):
        return int(self.labels.max()) + 1 if len(self) else 0


def decode_cifar10(buf):
    """Decode CIFAR-10 binary records: 1 label byte then 3072 pixel bytes (R, G, B planes)."""
    if len(buf) % CIFAR_RECORD:
        raise BadRecordSize(f"{len(buf)} bytes is not a multiple of the {CIFAR_RECORD}-byte record")
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = raw[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if len(bad):
        raise BadLabel(f"record {bad[0]} has label {labels[bad[0]]} > 9")
    images = raw[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return Dataset(images, labels)


def load_cifar10(path):
    with open(path, "rb") as fh:
        return decode_cifar10(fh.read())


def _glyphs(size):
    s = size
    lo, hi = s // 4, s - s // 4
    g = []

    def canvas():
        return np.zeros((s, s))

    a = canvas(); a[lo:hi, s // 2 - 1:s // 2 + 1] = 1; g.append(a)                  # vertical bar
    a = canvas(); a[s // 2 - 1:s // 2 + 1, lo:hi] = 1; g.append(a)                  # horizontal bar
    a = canvas(); idx = np.arange(lo, hi); a[idx, idx] = 1; a[idx[:-1], idx[1:]] = 1; g.append(a)  # diagonal
    a = canvas(); a[idx, s - 1 - idx] = 1; a[idx[:-1], s - 2 - idx[:-1]] = 1; g.append(a)          # anti-diagonal
    a = canvas(); a[lo:hi, lo:lo + 2] = 1; a[lo:lo + 2, lo:hi] = 1; g.append(a)      # top-left corner
    a = canvas(); a[lo:hi, hi - 2:hi] = 1; a[hi - 2:hi, lo:hi] = 1; g.append(a)      # bottom-right corner
    a = canvas(); a[lo:hi, s // 2 - 1:s // 2 + 1] = 1; a[s // 2 - 1:s // 2 + 1, lo:hi] = 1; g.append(a)  # cross
    a = canvas(); a[lo:hi, lo:lo + 2] = 1; a[lo:hi, hi - 2:hi] = 1; a[lo:lo + 2, lo:hi] = 1; a[hi - 2:hi, lo:hi] = 1; g.append(a)  # box
    a = canvas(); a[lo:hi, lo:lo + 2] = 1; a[lo:hi, hi - 2:hi] = 1; g.append(a)      # two vertical bars
    a = canvas(); a[lo:lo + 2, lo:hi] = 1; a[hi - 2:hi, lo:hi] = 1; g.append(a)      # two horizontal bars
    return g


def synth_dataset(n, classes, seed, sigma=0.1, size=16):
    """``n`` single-channel glyph images (one glyph per class) plus Gaussian noise.

    Labels cycle through the classes and are then shuffled; everything is
    drawn from ``numpy.random.default_rng(seed)``.
    """
    glyphs = _glyphs(size)
    if not 2 <= classes <= len(glyphs):
        raise ValueError(f"classes must be in 2..{len(glyphs)}, got {classes}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % classes).astype(np.int64)
    noise = rng.normal(0.0, 1.0, size=(n, 1, size, size))
    images = np.stack([glyphs[c] for c in labels])[:, None] if n else np.zeros((0, 1, size, size))
    images = images + sigma * noise
    return Dataset(images, labels)


def split(data, val_fraction=0.2):
    """Deterministic split: the last ``val_fraction`` of samples is held out."""
    n_val = int(round(len(data) * val_fraction))
    cut = len(data) - n_val
    return data[:cut], data[cut:]


def load_data(spec):
    """``synth:N:CLASSES:SEED`` or a path to a CIFAR-10 binary batch file."""
    if spec.startswith("synth:"):
        parts = spec.split(":")[1:]
        if len(parts) != 3:
            raise ValueError(f"synthetic data spec is synth:N:CLASSES:SEED, got {spec!r}")
        n, classes, seed = (int(p) for p in parts)
        return synth_dataset(n, classes, seed)
    return load_cifar10(spec)
