"""Text, image, and fused sparse feature extraction.

All extractors emit :class:`FeatureVector` instances whose keys are namespaced
("text:", "img:", "mesh:").  Extraction is pure and deterministic: the token
hash is 64-bit FNV-1a reduced mod 2**18 so vectors are stable across runs and
machines, and :func:`fuse` accumulates with ``math.fsum`` so the result does
not depend on argument order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import MalformedField, RegionOutOfBounds

TEXT_NS = "text"
IMG_NS = "img"
MESH_NS = "mesh"
NAMESPACES = (TEXT_NS, IMG_NS, MESH_NS)

HASH_BITS = 18

# Edge pixels are gradient magnitudes above this (gray scale 0..255).
EDGE_THRESHOLD = 24.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def _load_stopwords() -> frozenset[str]:
    text = resources.files("printmod.data").joinpath("stopwords.txt").read_text("utf-8")
    words = [w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#")]
    return frozenset(words)


DEFAULT_STOPWORDS = _load_stopwords()


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a over the UTF-8 bytes of ``text``."""
    h = _FNV_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class TokenizerConfig:
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    ngram_order: int = 2
    hash_bits: int = HASH_BITS

    @property
    def hash_dim(self) -> int:
        return 1 << self.hash_bits


@dataclass
class FeatureVector:
    """Sparse namespaced feature map; weights are finite reals."""

    entries: dict[str, float] = field(default_factory=dict)
    hash_bits: int | None = None

    def __post_init__(self):
        for key, value in self.entries.items():
            ns = key.split(":", 1)[0]
            if ns not in NAMESPACES:
                raise MalformedField(f"unknown feature namespace in {key!r}")
            if not math.isfinite(value):
                raise MalformedField(f"non-finite weight for {key!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def namespaces(self) -> set[str]:
        return {key.split(":", 1)[0] for key in self.entries}

    def namespace_norm(self, ns: str) -> float:
        prefix = ns + ":"
        return math.sqrt(math.fsum(v * v for k, v in self.entries.items() if k.startswith(prefix)))


def tokenize(text: str, config: TokenizerConfig | None = None) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords, keep order."""
    config = config or TokenizerConfig()
    tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
    return [t for t in tokens if t not in config.stopwords]


def _hashed_key(gram: str, bits: int) -> str:
    return f"{TEXT_NS}:h{fnv1a_64(gram) & ((1 << bits) - 1)}"


def text_features(
    title: str,
    description: str,
    tags: frozenset[str] | set[str] = frozenset(),
    config: TokenizerConfig | None = None,
) -> FeatureVector:
    """Hashed unigram+bigram counts from title/description plus exact tag features.

    Bigrams never cross the title/description boundary.  Weights are raw counts;
    normalization happens at :func:`fuse` time.
    """
    config = config or TokenizerConfig()
    counts: dict[str, float] = {}
    for block in (title, description):
        tokens = tokenize(block, config)
        grams = list(tokens)
        if config.ngram_order >= 2:
            grams += [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        for gram in grams:
            key = _hashed_key(gram, config.hash_bits)
            counts[key] = counts.get(key, 0.0) + 1.0
    for tag in sorted(tags):
        counts[f"{TEXT_NS}:tag={tag}"] = 1.0
    return FeatureVector(counts, hash_bits=config.hash_bits)


def _check_region(width: int, height: int, region: tuple[int, int, int, int]) -> None:
    x, y, w, h = region
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise RegionOutOfBounds(f"region {region} outside {width}x{height} asset")


def image_features(
    pixels: np.ndarray,
    region: tuple[int, int, int, int] | None = None,
) -> FeatureVector:
    """4x4x4 RGB histogram (L1-normalized) plus a 3x3 edge-density grid.

    ``pixels`` is an (H, W, 3) uint8 raster; ``region`` is an optional
    (x, y, w, h) crop in pixel coordinates.
    """
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise MalformedField("expected an (H, W, 3) RGB raster")
    height, width = pixels.shape[:2]
    if region is not None:
        _check_region(width, height, region)
        x, y, w, h = region
        pixels = pixels[y : y + h, x : x + w]

    entries: dict[str, float] = {}

    # Color histogram: 4 bins per channel, 64 total, L1-normalized.
    bins = (pixels.astype(np.int64) >> 6).reshape(-1, 3)
    flat = bins[:, 0] * 16 + bins[:, 1] * 4 + bins[:, 2]
    hist = np.bincount(flat, minlength=64).astype(np.float64)
    total = hist.sum()
    if total > 0:
        hist /= total
    for idx in np.nonzero(hist)[0]:
        r, g, b = idx // 16, (idx // 4) % 4, idx % 4
        entries[f"{IMG_NS}:hist:{r}{g}{b}"] = float(hist[idx])

    # Edge density: gradient magnitude of the gray image, thresholded, then
    # the fraction of edge pixels inside each cell of a 3x3 grid.
    gray = pixels.astype(np.float64).mean(axis=2)
    if gray.shape[0] >= 2 and gray.shape[1] >= 2:
        gy, gx = np.gradient(gray)
        edges = np.hypot(gx, gy) > EDGE_THRESHOLD
    else:
        edges = np.zeros_like(gray, dtype=bool)
    ch, cw = edges.shape
    for row in range(3):
        for col in range(3):
            r0, r1 = row * ch // 3, (row + 1) * ch // 3
            c0, c1 = col * cw // 3, (col + 1) * cw // 3
            cell = edges[r0:r1, c0:c1]
            if cell.size == 0:
                continue
            density = float(cell.mean())
            if density > 0.0:
                entries[f"{IMG_NS}:edge:r{row}c{col}"] = density

    return FeatureVector(entries)


def fuse(*vectors: FeatureVector) -> FeatureVector:
    """Merge vectors by addition, then L2-normalize each namespace independently.

    Per-key sums use ``math.fsum`` (correctly rounded), so the output is
    bit-identical regardless of input order.  Empty namespaces are omitted.
    """
    buckets: dict[str, list[float]] = {}
    hash_bits = None
    for vec in vectors:
        if vec.hash_bits is not None:
            if hash_bits is not None and hash_bits != vec.hash_bits:
                raise MalformedField("fused vectors use different hash dimensions")
            hash_bits = vec.hash_bits
        for key, value in vec.entries.items():
            buckets.setdefault(key, []).append(value)

    summed = {key: math.fsum(values) for key, values in buckets.items()}
    squares: dict[str, list[float]] = {}
    for key in sorted(summed):
        value = summed[key]
        squares.setdefault(key.split(":", 1)[0], []).append(value * value)
    norms = {ns: math.sqrt(math.fsum(sq)) for ns, sq in squares.items()}

    entries: dict[str, float] = {}
    for key in sorted(summed):
        value = summed[key]
        if value == 0.0:
            continue
        norm = norms[key.split(":", 1)[0]]
        entries[key] = value / norm
    return FeatureVector(entries, hash_bits=hash_bits)
