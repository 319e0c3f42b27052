"""Online multi-label classifier over the sensitivity taxonomy.

One independent logistic regression per top-level category: probabilities
need not sum to 1, every prediction decomposes exactly into per-feature
contributions (w_j * x_j summing to the logit), and incremental
moderator-weighted updates are single SGD steps.

Determinism note: dot products and update loops iterate features in sorted
key order, so results are bit-identical between a live run and an audit
replay regardless of dict insertion order.
"""

from __future__ import annotations

import json
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import MediaAsset
from .errors import (
    AssetTooSmall,
    EmptySeedSet,
    HashParamMismatch,
    MalformedField,
    NonpositiveWeight,
    UnknownCategory,
)
from .features import HASH_BITS, FeatureVector, fuse, image_features

SEXUAL = "sexual_suggestive"
WEAPONRY = "weaponry"
DRUG_SMOKE = "drug_smoke"
TOP_LEVEL = (SEXUAL, WEAPONRY, DRUG_SMOKE)

DEFAULT_ETA = 0.1
DEFAULT_TOP_K = 5
LOCALIZE_GRID = 3


@dataclass(frozen=True)
class CategoryTaxonomy:
    """Two-level category tree; second-level labels are annotation metadata."""

    children: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        if tuple(self.children.keys()) != TOP_LEVEL:
            raise UnknownCategory(f"top-level categories must be {TOP_LEVEL}")
        seen: set[str] = set()
        for labels in self.children.values():
            for label in labels:
                if label in seen:
                    raise MalformedField(f"second-level label {label!r} has two parents")
                seen.add(label)

    def top_level(self) -> tuple[str, ...]:
        return TOP_LEVEL

    def valid_path(self, path: tuple[str, str | None]) -> bool:
        top, second = path
        if top not in self.children:
            return False
        return second is None or second in self.children[top]


def default_taxonomy() -> CategoryTaxonomy:
    return CategoryTaxonomy(
        children={
            SEXUAL: ("explicit_nudity", "adult_toys", "sexual_activity", "suggestive"),
            WEAPONRY: ("firearms", "blades", "explosives"),
            DRUG_SMOKE: ("drug_paraphernalia", "pills", "smoking"),
        }
    )


@dataclass(frozen=True)
class ModelState:
    """Immutable classifier snapshot; every mutation returns a new version."""

    weights: Mapping[str, Mapping[str, float]]
    bias: Mapping[str, float]
    eta: float = DEFAULT_ETA
    version: int = 1
    update_count: int = 0
    hash_bits: int = HASH_BITS

    @classmethod
    def zero(cls, eta: float = DEFAULT_ETA, hash_bits: int = HASH_BITS) -> "ModelState":
        return cls(
            weights={cat: {} for cat in TOP_LEVEL},
            bias={cat: 0.0 for cat in TOP_LEVEL},
            eta=eta,
            version=1,
            update_count=0,
            hash_bits=hash_bits,
        )


@dataclass(frozen=True)
class Prediction:
    thing_id: str
    probabilities: Mapping[str, float]
    model_version: int
    attributions: Mapping[str, tuple[tuple[str, float], ...]] = field(default_factory=dict)
    regions: Mapping[str, tuple[tuple[float, ...], ...]] = field(default_factory=dict)

    def __post_init__(self):
        for cat, p in self.probabilities.items():
            if not 0.0 <= p <= 1.0:
                raise MalformedField(f"probability for {cat} outside [0, 1]")

    def max_probability(self) -> float:
        return max(self.probabilities.values(), default=0.0)

    def argmax_category(self) -> str:
        # Ties break alphabetically for determinism.
        return min(self.probabilities, key=lambda c: (-self.probabilities[c], c))

    def to_record(self) -> dict:
        return {
            "thing_id": self.thing_id,
            "probabilities": {c: self.probabilities[c] for c in sorted(self.probabilities)},
            "model_version": self.model_version,
            "attributions": {
                c: [[f, v] for f, v in pairs] for c, pairs in sorted(self.attributions.items())
            },
            "regions": {a: [list(row) for row in grid] for a, grid in sorted(self.regions.items())},
        }

    @classmethod
    def from_record(cls, record: dict) -> "Prediction":
        return cls(
            thing_id=record["thing_id"],
            probabilities=dict(record["probabilities"]),
            model_version=record["model_version"],
            attributions={
                c: tuple((f, v) for f, v in pairs)
                for c, pairs in record.get("attributions", {}).items()
            },
            regions={
                a: tuple(tuple(row) for row in grid)
                for a, grid in record.get("regions", {}).items()
            },
        )


@dataclass(frozen=True)
class LabeledExample:
    """One training example: fused features plus binary labels per category."""

    fv: FeatureVector
    labels: Mapping[str, int]
    weight: float = 1.0
    thing_id: str = ""


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def logit(model: ModelState, category: str, fv: FeatureVector) -> float:
    if category not in model.weights:
        raise UnknownCategory(category)
    w = model.weights[category]
    total = model.bias[category]
    for key in sorted(fv.entries):
        wj = w.get(key)
        if wj is not None:
            total += wj * fv.entries[key]
    return total


def logistic_loss(model: ModelState, category: str, fv: FeatureVector, label: int) -> float:
    """Negative log-likelihood of one example; the gradient oracle targets this."""
    z = logit(model, category, fv)
    # log(1 + exp(-|z|)) form avoids overflow for large |z|.
    if label:
        return math.log1p(math.exp(-z)) if z >= 0 else -z + math.log1p(math.exp(z))
    return z + math.log1p(math.exp(-z)) if z >= 0 else math.log1p(math.exp(z))


def _check_hash_params(model: ModelState, fv: FeatureVector) -> None:
    if fv.hash_bits is not None and fv.hash_bits != model.hash_bits:
        raise HashParamMismatch(
            f"feature vector hashed with 2^{fv.hash_bits}, model expects 2^{model.hash_bits}"
        )


def _step(weights: dict[str, float], bias: float, fv: FeatureVector, label: int, eta: float, sample_weight: float) -> float:
    """One in-place SGD step; returns the new bias."""
    z = bias
    for key in sorted(fv.entries):
        wj = weights.get(key)
        if wj is not None:
            z += wj * fv.entries[key]
    residual = label - sigmoid(z)
    scale = eta * sample_weight * residual
    for key in sorted(fv.entries):
        weights[key] = weights.get(key, 0.0) + scale * fv.entries[key]
    return bias + scale


def train_seed(
    examples: Sequence[LabeledExample],
    epochs: int = 5,
    eta: float = DEFAULT_ETA,
    rng_seed: int = 0,
    hash_bits: int = HASH_BITS,
) -> ModelState:
    """Logistic SGD over the seed examples, shuffled deterministically per epoch."""
    if not examples:
        raise EmptySeedSet("no seed examples")
    weights: dict[str, dict[str, float]] = {cat: {} for cat in TOP_LEVEL}
    bias: dict[str, float] = {cat: 0.0 for cat in TOP_LEVEL}
    rng = random.Random(rng_seed)
    order = list(range(len(examples)))
    for _ in range(epochs):
        rng.shuffle(order)
        for idx in order:
            ex = examples[idx]
            for cat in TOP_LEVEL:
                label = int(ex.labels.get(cat, 0))
                bias[cat] = _step(weights[cat], bias[cat], ex.fv, label, eta, ex.weight)
    return ModelState(weights=weights, bias=bias, eta=eta, version=1, update_count=0, hash_bits=hash_bits)


def predict(model: ModelState, fv: FeatureVector, thing_id: str = "", top_k: int = DEFAULT_TOP_K) -> Prediction:
    """Per-category probabilities with top-k attributions; no region grids."""
    _check_hash_params(model, fv)
    probabilities = {cat: sigmoid(logit(model, cat, fv)) for cat in TOP_LEVEL}
    attributions = attribute(model, fv, top_k)
    return Prediction(
        thing_id=thing_id,
        probabilities=probabilities,
        model_version=model.version,
        attributions={cat: tuple(pairs) for cat, pairs in attributions.items()},
    )


def attribute(model: ModelState, fv: FeatureVector, k: int = DEFAULT_TOP_K) -> dict[str, list[tuple[str, float]]]:
    """Top-k per-feature contributions (w_j * x_j) per category.

    The full contribution set plus the bias reconstructs the logit exactly;
    only nonzero contributions are ranked.
    """
    _check_hash_params(model, fv)
    result: dict[str, list[tuple[str, float]]] = {}
    for cat in TOP_LEVEL:
        w = model.weights[cat]
        contribs = []
        for key in sorted(fv.entries):
            wj = w.get(key)
            if wj is None:
                continue
            value = wj * fv.entries[key]
            if value != 0.0:
                contribs.append((key, value))
        contribs.sort(key=lambda pair: (-abs(pair[1]), pair[0]))
        result[cat] = contribs[: max(k, 0)]
    return result


def grid_cell_box(width: int, height: int, row: int, col: int, grid: int = LOCALIZE_GRID) -> tuple[int, int, int, int]:
    """Pixel box (x, y, w, h) of one localization cell; rows/cols are row-major."""
    x0 = col * width // grid
    x1 = (col + 1) * width // grid
    y0 = row * height // grid
    y1 = (row + 1) * height // grid
    return x0, y0, x1 - x0, y1 - y0


def localize(model: ModelState, asset: MediaAsset, category: str | None = None) -> np.ndarray:
    """Score a 3x3 grid of image crops; cells align row-major with the image.

    Crops are featurized in the image namespace only.  With no category the
    cell value is the max across categories, so a single planted signature
    stays visible wherever it lives.
    """
    if asset.width < LOCALIZE_GRID or asset.height < LOCALIZE_GRID:
        raise AssetTooSmall(f"asset {asset.id} is {asset.width}x{asset.height}, need 3x3 minimum")
    if category is not None and category not in model.weights:
        raise UnknownCategory(category)
    cats = (category,) if category else TOP_LEVEL
    grid = np.zeros((LOCALIZE_GRID, LOCALIZE_GRID), dtype=np.float64)
    for row in range(LOCALIZE_GRID):
        for col in range(LOCALIZE_GRID):
            box = grid_cell_box(asset.width, asset.height, row, col)
            fv = fuse(image_features(asset.pixels, region=box))
            grid[row, col] = max(sigmoid(logit(model, cat, fv)) for cat in cats)
    return grid


def update(model: ModelState, fv: FeatureVector, category: str, label: int, sample_weight: float = 1.0) -> ModelState:
    """One weighted SGD step on a single category; returns the next snapshot."""
    if sample_weight <= 0:
        raise NonpositiveWeight(f"sample_weight must be > 0, got {sample_weight}")
    if category not in model.weights:
        raise UnknownCategory(category)
    if label not in (0, 1):
        raise MalformedField(f"label must be 0 or 1, got {label!r}")
    _check_hash_params(model, fv)

    new_weights = {cat: (dict(w) if cat == category else w) for cat, w in model.weights.items()}
    new_bias = dict(model.bias)
    new_bias[category] = _step(new_weights[category], new_bias[category], fv, label, model.eta, sample_weight)
    return ModelState(
        weights=new_weights,
        bias=new_bias,
        eta=model.eta,
        version=model.version + 1,
        update_count=model.update_count + 1,
        hash_bits=model.hash_bits,
    )


# -- serialization -----------------------------------------------------------

def float_to_hex(value: float) -> str:
    return struct.pack(">d", value).hex()


def hex_to_float(text: str) -> float:
    return struct.unpack(">d", bytes.fromhex(text))[0]


def model_to_record(model: ModelState) -> dict:
    """Portable model document; weights as hex-encoded 64-bit IEEE-754."""
    return {
        "format": "printmod-model/1",
        "version": model.version,
        "update_count": model.update_count,
        "eta": float_to_hex(model.eta),
        "hash_bits": model.hash_bits,
        "categories": {
            cat: {
                "bias": float_to_hex(model.bias[cat]),
                "weights": {key: float_to_hex(model.weights[cat][key]) for key in sorted(model.weights[cat])},
            }
            for cat in TOP_LEVEL
        },
    }


def model_from_record(record: dict) -> ModelState:
    if record.get("format") != "printmod-model/1":
        raise MalformedField(f"unknown model format {record.get('format')!r}")
    weights = {}
    bias = {}
    for cat in TOP_LEVEL:
        block = record["categories"][cat]
        bias[cat] = hex_to_float(block["bias"])
        weights[cat] = {key: hex_to_float(h) for key, h in block["weights"].items()}
    return ModelState(
        weights=weights,
        bias=bias,
        eta=hex_to_float(record["eta"]),
        version=record["version"],
        update_count=record["update_count"],
        hash_bits=record["hash_bits"],
    )


def save_model(model: ModelState, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_record(model), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: Path) -> ModelState:
    return model_from_record(json.loads(Path(path).read_text(encoding="utf-8")))
