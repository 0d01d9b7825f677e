"""Synthetic datasets, file formats, and the batch views the trainer consumes.

Point clouds: an eight-component Gaussian ring (centers on a radius-2
circle, isotropic std 0.1) and a five-arm pinwheel (radial Gaussian arms
warped by an angle proportional to radius).  The numeric parameters are
artifact choices, fixed here and documented in the README.

Text: a tiny template grammar with class-exclusive keywords, so the class
of every generated sequence is recoverable by keyword lookup.  The default
grammar has 4 classes, a 60-token vocabulary (reserved ids included), and
lengths 4 to 10.  Sequence and bag-of-words views are emitted together.

File formats (delimited text throughout):
  * points     — header ``x<TAB>y<TAB>component``, one point per row,
                 component -1 when unknown;
  * corpus     — one sequence per line, tokens space-separated, optional
                 leading ``label<TAB>``;
  * bag-of-words — optional leading ``label<TAB>``, then sparse
                 ``id:count`` pairs separated by spaces;
  * vocabulary — one token per line, line number = id, reserved first.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .generator import SequenceExample, Vocabulary, pack_sequences

KEY, FILL = "<K>", "<F>"


# ---- point clouds -----------------------------------------------------------


@dataclass
class PointDataset:
    """N points in the plane with a true component id per point (-1 unknown)."""

    x: np.ndarray
    component: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.component = np.asarray(self.component, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[1] != 2:
            raise DataError(f"points must be (N, 2), got {self.x.shape}")
        if self.component.shape != (self.x.shape[0],):
            raise DataError("component ids must align with points")
        if not np.all(np.isfinite(self.x)):
            raise DataError("non-finite coordinates")

    @property
    def n(self):
        return self.x.shape[0]


def eight_gaussians(n, seed=0):
    """Equal-weight mixture of 8 Gaussians on a radius-2 circle, std 0.1."""
    if n < 8:
        raise DataError("need n >= 8")
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, 8, size=n)
    angles = 2.0 * np.pi * comp / 8.0
    centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    x = centers + 0.1 * rng.standard_normal((n, 2))
    return PointDataset(x, comp)


def pinwheel(n, seed=0, arms=5, radial_std=0.3, tangential_std=0.05, warp=0.25):
    """Spiral arms: radial Gaussians rotated by arm angle + warp * radius."""
    if n < arms:
        raise DataError(f"need n >= {arms}")
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, arms, size=n)
    r = 1.0 + radial_std * rng.standard_normal(n)
    t = tangential_std * rng.standard_normal(n)
    phi = 2.0 * np.pi * comp / arms + warp * r
    x = np.stack([r * np.cos(phi) - t * np.sin(phi),
                  r * np.sin(phi) + t * np.cos(phi)], axis=1)
    return PointDataset(x, comp)


def kde_grid(points, bandwidth=None, bounds=None, resolution=100):
    """Gaussian-kernel density on a regular grid.

    Returns (density, xs, ys) with density[i, j] evaluated at
    (xs[j], ys[i]).  Default bandwidth is the Scott-style rule
    n^(-1/6) * sqrt(mean per-dimension variance); default bounds are the
    data box padded by 3 bandwidths.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise DataError("kde_grid needs at least one 2-d point")
    if bandwidth is None:
        v = pts.var(axis=0).mean()
        bandwidth = pts.shape[0] ** (-1.0 / 6.0) * np.sqrt(max(v, 1e-12))
    if bandwidth <= 0:
        raise DataError("bandwidth must be > 0")
    if bounds is None:
        pad = 3.0 * bandwidth
        bounds = (pts[:, 0].min() - pad, pts[:, 0].max() + pad,
                  pts[:, 1].min() - pad, pts[:, 1].max() + pad)
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    h2 = bandwidth * bandwidth
    norm = 1.0 / (2.0 * np.pi * h2 * pts.shape[0])
    dens = np.zeros(grid.shape[0])
    chunk = 2048
    for lo in range(0, pts.shape[0], chunk):
        d2 = ((grid[:, None, :] - pts[None, lo : lo + chunk, :]) ** 2).sum(axis=2)
        dens += norm * np.exp(-0.5 * d2 / h2).sum(axis=1)
    return dens.reshape(resolution, resolution), xs, ys


# ---- template grammar -------------------------------------------------------

_DEFAULT_PATTERNS = (
    (KEY, FILL, KEY, FILL),
    (FILL, KEY, KEY, FILL, FILL),
    (KEY, FILL, FILL, KEY, FILL, KEY),
    (FILL, FILL, KEY, FILL, KEY, FILL, FILL),
    (KEY, KEY, FILL, FILL, KEY, FILL, FILL, FILL),
    (FILL, KEY, FILL, FILL, KEY, FILL, FILL, KEY, FILL),
    (KEY, FILL, FILL, KEY, FILL, FILL, KEY, FILL, FILL, FILL),
)

_DEFAULT_KEYWORDS = (
    ("rain", "sun", "cloud", "storm", "wind"),
    ("goal", "match", "team", "score", "win"),
    ("bread", "soup", "cheese", "fruit", "meal"),
    ("train", "road", "city", "map", "journey"),
)

_DEFAULT_FILLERS = (
    "the", "a", "an", "we", "they", "it", "is", "was", "are", "very",
    "quite", "today", "now", "here", "there", "and", "or", "but", "with",
    "near", "far", "big", "small", "old", "new", "good", "fine", "bright",
    "dark", "slow", "fast", "often", "never", "still", "again", "almost",
)


@dataclass
class GrammarSpec:
    """Template grammar: class-exclusive keyword sets plus shared fillers.

    Templates are tuples over keyword slots, filler slots, and literal
    tokens; every expansion's length must fall inside [min_len, max_len].
    """

    keywords: tuple = _DEFAULT_KEYWORDS
    fillers: tuple = _DEFAULT_FILLERS
    patterns: tuple = _DEFAULT_PATTERNS
    min_len: int = 4
    max_len: int = 10

    def __post_init__(self):
        if len(self.keywords) < 2:
            raise DataError("grammar needs at least 2 classes")
        flat = [w for ks in self.keywords for w in ks]
        if len(set(flat)) != len(flat):
            raise DataError("keyword sets must be disjoint")
        if set(flat) & set(self.fillers):
            raise DataError("keywords and fillers must not overlap")
        for p in self.patterns:
            if not self.min_len <= len(p) <= self.max_len:
                raise DataError(f"pattern length {len(p)} outside "
                                f"[{self.min_len}, {self.max_len}]")
            for item in p:
                if item not in (KEY, FILL) and item not in self.fillers \
                        and item not in flat:
                    raise DataError(f"template literal {item!r} not in vocabulary")
            if KEY not in p:
                raise DataError("every pattern needs at least one keyword slot")

    @property
    def n_classes(self):
        return len(self.keywords)

    def build_vocab(self):
        content = sorted({w for ks in self.keywords for w in ks} | set(self.fillers))
        return Vocabulary(content)


def default_grammar():
    return GrammarSpec()


@dataclass
class TextCorpus:
    """Sequence and bag-of-words views of one generated corpus."""

    sequences: list
    documents: np.ndarray
    labels: np.ndarray
    vocab: Vocabulary
    spec: Optional[GrammarSpec] = None


def toy_text_corpus(spec, n, seed=0):
    """Sample n labeled sequences from the grammar; emits both views."""
    rng = np.random.default_rng(seed)
    vocab = spec.build_vocab()
    C = spec.n_classes
    sequences = []
    labels = np.empty(n, dtype=np.int64)
    docs = np.zeros((n, len(vocab)), dtype=np.float64)
    for i in range(n):
        c = int(rng.integers(0, C))
        pattern = spec.patterns[rng.integers(0, len(spec.patterns))]
        words = []
        for item in pattern:
            if item == KEY:
                words.append(spec.keywords[c][rng.integers(0, len(spec.keywords[c]))])
            elif item == FILL:
                words.append(spec.fillers[rng.integers(0, len(spec.fillers))])
            else:
                words.append(item)
        ids = vocab.encode(words)
        sequences.append(SequenceExample(ids=ids, label=c))
        labels[i] = c
        np.add.at(docs[i], ids, 1.0)
    return TextCorpus(sequences, docs, labels, vocab, spec)


def keyword_class(spec, words):
    """Class by keyword lookup; -1 if none or more than one class matches."""
    hit = -1
    for c, ks in enumerate(spec.keywords):
        if set(words) & set(ks):
            if hit >= 0:
                return -1
            hit = c
    return hit


def keyword_judge(spec, vocab):
    """Judge over token-id lists for attribute-controlled generation."""

    def judge(seqs):
        return np.asarray([keyword_class(spec, vocab.decode(s)) for s in seqs],
                         dtype=np.int64)

    return judge


# ---- trainer-facing batch views --------------------------------------------


class PointData:
    """Batch view over a PointDataset."""

    def __init__(self, x, labels=None):
        self.x = np.asarray(x, dtype=np.float64)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)

    @classmethod
    def from_dataset(cls, ds, with_labels=True):
        return cls(ds.x, ds.component if with_labels else None)

    @property
    def n(self):
        return self.x.shape[0]

    def batch(self, idx):
        return {"x": self.x[idx]}

    def subset(self, idx):
        labels = None if self.labels is None else self.labels[idx]
        return PointData(self.x[idx], labels)


class SequenceData:
    """Batch view over packed token sequences."""

    def __init__(self, examples, vocab_size, max_len=None):
        self.examples = list(examples)
        self.vocab_size = int(vocab_size)
        self.max_len = max_len
        labels = [ex.label for ex in self.examples]
        self.labels = np.asarray(
            [-1 if l is None else l for l in labels], dtype=np.int64)

    @property
    def n(self):
        return len(self.examples)

    def batch(self, idx):
        sel = [self.examples[int(i)] for i in np.atleast_1d(idx)]
        inputs, targets, mask = pack_sequences(sel, self.vocab_size, self.max_len)
        return {"inputs": inputs, "targets": targets, "mask": mask}

    def subset(self, idx):
        sel = [self.examples[int(i)] for i in np.atleast_1d(idx)]
        return SequenceData(sel, self.vocab_size, self.max_len)


class DocumentData:
    """Batch view over bag-of-words count rows."""

    def __init__(self, counts, labels=None):
        self.counts = np.asarray(counts, dtype=np.float64)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)

    @property
    def n(self):
        return self.counts.shape[0]

    def batch(self, idx):
        return {"counts": self.counts[idx]}

    def subset(self, idx):
        labels = None if self.labels is None else self.labels[idx]
        return DocumentData(self.counts[idx], labels)


def stratified_label_subset(labels, fraction, seed=0):
    """Indices of a class-balanced labeled subset covering ``fraction`` of rows."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    picked = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        k = max(1, int(round(fraction * idx.size)))
        picked.append(rng.permutation(idx)[:k])
    return np.sort(np.concatenate(picked))


# ---- file I/O ---------------------------------------------------------------


def save_points(path, ds):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x\ty\tcomponent\n")
        for (px, py), c in zip(ds.x, ds.component):
            fh.write(f"{px:.10e}\t{py:.10e}\t{c}\n")


def load_points(path):
    path = Path(path)
    rows, comps = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t") != ["x", "y", "component"]:
            raise DataError(f"{path}:1: bad header {header!r}")
        for ln, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{ln}: expected 3 columns, got {len(parts)}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
                comps.append(int(parts[2]))
            except ValueError as exc:
                raise DataError(f"{path}:{ln}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return PointDataset(np.asarray(rows), np.asarray(comps))


def save_corpus(path, sequences, vocab, with_labels=True):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in sequences:
            words = " ".join(vocab.decode(ex.ids))
            if with_labels and ex.label is not None:
                fh.write(f"{ex.label}\t{words}\n")
            else:
                fh.write(words + "\n")


def load_corpus(path, vocab):
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            label = None
            if "\t" in line:
                head, line = line.split("\t", 1)
                try:
                    label = int(head)
                except ValueError:
                    raise DataError(f"{path}:{ln}: bad label {head!r}") from None
                if label < 0:
                    label = None
            words = line.split()
            if not words:
                raise DataError(f"{path}:{ln}: empty sequence")
            out.append(SequenceExample(ids=vocab.encode(words), label=label))
    if not out:
        raise DataError(f"{path}: no sequences")
    return out


def save_bow(path, counts, labels=None):
    counts = np.asarray(counts)
    with open(path, "w", encoding="utf-8") as fh:
        for i, row in enumerate(counts):
            pairs = " ".join(f"{j}:{int(row[j])}" for j in np.flatnonzero(row))
            if labels is not None:
                fh.write(f"{int(labels[i])}\t{pairs}\n")
            else:
                fh.write(pairs + "\n")


def load_bow(path, vocab_size):
    path = Path(path)
    rows, labels, any_label = [], [], False
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            label = -1
            if "\t" in line:
                head, line = line.split("\t", 1)
                try:
                    label = int(head)
                except ValueError:
                    raise DataError(f"{path}:{ln}: bad label {head!r}") from None
                any_label = True
            row = np.zeros(vocab_size)
            for pair in line.split():
                try:
                    tok, cnt = pair.split(":")
                    tok, cnt = int(tok), int(cnt)
                except ValueError:
                    raise DataError(f"{path}:{ln}: bad pair {pair!r}") from None
                if not 0 <= tok < vocab_size:
                    raise DataError(f"{path}:{ln}: token id {tok} out of range")
                row[tok] = cnt
            if row.sum() < 1:
                raise DataError(f"{path}:{ln}: empty document")
            rows.append(row)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no documents")
    return np.asarray(rows), (np.asarray(labels) if any_label else None)
