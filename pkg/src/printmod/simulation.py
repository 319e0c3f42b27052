"""Deterministic synthetic corpus and simulated moderator populations.

Every generated thing carries a hidden per-category ground-truth sensitivity
``s`` that never crosses the service boundary: moderator policy reads it, the
model only ever sees text and pixels.  Positives plant category vocabulary
and a color-signature patch in one grid cell; negatives stay neutral.  All
randomness flows from a single ``numpy`` generator, so corpora and whole
simulation runs are byte-identical per seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .classifier import TOP_LEVEL, Prediction, grid_cell_box
from .corpus import EPOCH, AssetKind, MediaAsset
from .errors import DuplicateTaskForThing, QueueEmpty
from .moderation import (
    Annotation,
    GridCellRef,
    ModeratorProfile,
    ReviewCase,
    ReviewDecision,
    ReviewTask,
)

IMAGE_SIZE = 48
DETECT_CUTOFF = 0.5

PLANTED_VOCAB = {
    "sexual_suggestive": ("lingerie", "boudoir", "burlesque", "risque", "pinup", "negligee"),
    "weaponry": ("rifle", "pistol", "dagger", "ammunition", "holster", "bayonet"),
    "drug_smoke": ("bong", "hookah", "grinder", "stash", "rolling", "vaporizer"),
}
NEUTRAL_VOCAB = (
    "vase", "bracket", "gear", "planter", "hinge", "knob",
    "organizer", "stand", "clip", "mount", "tray", "holder",
)
# Each signature lands in its own 4x4x4 histogram bin (value >> 6), separated
# from the base color's bin, so positives are linearly separable by color.
SIGNATURE_COLORS = {
    "sexual_suggestive": (220, 40, 150),
    "weaponry": (90, 90, 90),
    "drug_smoke": (30, 200, 40),
}
BASE_COLOR = (150, 160, 200)
NEUTRAL_PATCH_COLOR = (170, 210, 170)
DOMINANT_MIX = (0.6, 0.25, 0.15)


@dataclass(frozen=True)
class SimModerator:
    id: str
    audience_group: str
    tolerance: float

    def __post_init__(self):
        if not 0.0 <= self.tolerance <= 1.0:
            raise ValueError(f"tolerance must be in [0, 1], got {self.tolerance}")

    def profile(self) -> ModeratorProfile:
        return ModeratorProfile(id=self.id, audience_group=self.audience_group)


@dataclass(frozen=True)
class SimThing:
    thing_id: str
    raw: dict
    pixels: np.ndarray
    asset_id: str
    sensitivity: dict[str, float]
    labels: dict[str, int]
    signature_cell: tuple[int, int]
    is_positive: bool

    def max_sensitivity(self) -> float:
        return max(self.sensitivity.values())

    def dominant(self) -> str:
        return min(self.sensitivity, key=lambda c: (-self.sensitivity[c], c))


def _patch(pixels: np.ndarray, cell: tuple[int, int], color: tuple[int, int, int]) -> None:
    x, y, w, h = grid_cell_box(pixels.shape[1], pixels.shape[0], cell[0], cell[1])
    pixels[y : y + h, x : x + w] = color


def _pick(rng: np.random.Generator, pool: tuple[str, ...], k: int) -> list[str]:
    idx = rng.permutation(len(pool))[:k]
    return [pool[int(i)] for i in idx]


def _make_thing(rng: np.random.Generator, thing_id: str, positive: bool) -> SimThing:
    sensitivity = {cat: float(rng.uniform(0.0, 0.05)) for cat in TOP_LEVEL}
    pixels = np.empty((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8)
    pixels[:] = BASE_COLOR
    cell = (int(rng.integers(0, 3)), int(rng.integers(0, 3)))

    if positive:
        dom = TOP_LEVEL[int(rng.choice(len(TOP_LEVEL), p=DOMINANT_MIX))]
        sensitivity[dom] = float(rng.uniform(0.6, 1.0))
        planted = _pick(rng, PLANTED_VOCAB[dom], 3)
        filler = _pick(rng, NEUTRAL_VOCAB, 2)
        title = f"{planted[0]} {filler[0]}"
        description = f"printable {planted[1]} {filler[1]} with {planted[2]} detail"
        tags = [planted[0], filler[0]]
        _patch(pixels, cell, SIGNATURE_COLORS[dom])
    else:
        words = _pick(rng, NEUTRAL_VOCAB, 5)
        title = f"{words[0]} {words[1]}"
        description = f"printable {words[2]} {words[3]} with {words[4]} detail"
        tags = words[:2]
        if rng.random() < 0.5:
            _patch(pixels, cell, NEUTRAL_PATCH_COLOR)

    asset_id = f"{thing_id}-img0"
    # Fixed creation time keeps store content independent of wall clock.
    raw = {
        "id": thing_id,
        "title": title,
        "description": description,
        "tags": tags,
        "images": [asset_id],
        "platform_nsfw": positive,
        "created_at": "1970-01-01T00:00:00+00:00",
    }
    dominant = min(sensitivity, key=lambda c: (-sensitivity[c], c))
    labels = {cat: int(positive and cat == dominant) for cat in TOP_LEVEL}
    return SimThing(
        thing_id=thing_id,
        raw=raw,
        pixels=pixels,
        asset_id=asset_id,
        sensitivity=sensitivity,
        labels=labels,
        signature_cell=cell,
        is_positive=positive,
    )


def generate_corpus(rng_seed: int, n_pos: int, n_neg: int) -> list[SimThing]:
    """Positives and negatives interleaved, deterministic per seed."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError("need at least one positive and one negative")
    rng = np.random.default_rng(rng_seed)
    positives = [_make_thing(rng, f"sim-p{i:04d}", True) for i in range(n_pos)]
    negatives = [_make_thing(rng, f"sim-n{i:04d}", False) for i in range(n_neg)]
    corpus: list[SimThing] = []
    for i in range(max(n_pos, n_neg)):
        if i < n_pos:
            corpus.append(positives[i])
        if i < n_neg:
            corpus.append(negatives[i])
    return corpus


def sensitivity_level(s: float, tau: float) -> int:
    """Quantize how far past the moderator's tolerance the content sits."""
    if tau >= 1.0:
        return 5
    return max(1, math.ceil(5 * (s - tau) / (1 - tau)))


def simulate_review(mod: SimModerator, task: ReviewTask, sim: SimThing) -> ReviewDecision:
    """Deterministic moderator policy driven by hidden sensitivity.

    Flag every category with s >= tolerance.  Any flagged category the model
    missed forces Case 2 with a bbox on the signature cell; all-detected
    flags confirm via Case 1; no flags reject the model's top detection.
    """
    s = sim.sensitivity
    p = task.prediction.probabilities
    flagged = [cat for cat in TOP_LEVEL if s[cat] >= mod.tolerance]
    missed = [cat for cat in flagged if p.get(cat, 0.0) < DETECT_CUTOFF]
    height, width = sim.pixels.shape[0], sim.pixels.shape[1]

    if missed:
        annotations = tuple(
            Annotation(
                asset_id=sim.asset_id,
                bbox=grid_cell_box(width, height, sim.signature_cell[0], sim.signature_cell[1]),
                category_path=(cat, None),
                level=sensitivity_level(s[cat], mod.tolerance),
                rationale=f"region shows {cat.replace('_', ' ')} content the detector skipped",
            )
            for cat in missed
        )
        return ReviewDecision(
            task_id=task.task_id,
            moderator_id=mod.id,
            case=ReviewCase.MISSED_PART,
            annotations=annotations,
        )
    if flagged:
        return ReviewDecision(
            task_id=task.task_id,
            moderator_id=mod.id,
            case=ReviewCase.AGREE_FINALIZE,
            selected_categories=tuple(flagged),
        )
    return ReviewDecision(
        task_id=task.task_id,
        moderator_id=mod.id,
        case=ReviewCase.REJECT_DETECTION,
        rejected_regions=(
            GridCellRef(asset_id=sim.asset_id, row=sim.signature_cell[0], col=sim.signature_cell[1]),
        ),
    )


def binary_auc(positive_scores, negative_scores) -> float:
    """Rank AUC (Mann-Whitney): P(score_pos > score_neg) + half ties."""
    wins = 0.0
    for sp in positive_scores:
        for sn in negative_scores:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    total = len(positive_scores) * len(negative_scores)
    return wins / total if total else 0.0


def run_rounds(system, sim_things, populations, rounds: int, rng_seed: int, out_dir=None) -> dict:
    """Drive the live system for a fixed number of rounds.

    Each round evaluates one thing (cycling the corpus), enqueues it, and has
    two distinct moderators review it; disagreement processing and retraining
    happen inside the system's review path.  Returns the metrics trajectory.
    """
    rng = np.random.default_rng(rng_seed)
    by_thing = {sim.thing_id: sim for sim in sim_things}
    for mod in populations:
        system.register_moderator(mod.profile())

    rows: list[dict] = []
    correct = 0
    for rnd in range(rounds):
        sim = sim_things[rnd % len(sim_things)]
        pred: Prediction = system.predict_thing(sim.thing_id)
        max_p = pred.max_probability()
        max_s = sim.max_sensitivity()
        if (max_p >= DETECT_CUTOFF) == (max_s >= DETECT_CUTOFF):
            correct += 1

        try:
            task = system.enqueue_thing(sim.thing_id, rng=rng)
        except DuplicateTaskForThing:
            task = None
        if task is not None:
            pair = rng.choice(len(populations), size=2, replace=False)
            for idx in pair:
                mod = populations[int(idx)]
                try:
                    leased = system.next_task(mod.id)
                except QueueEmpty:
                    continue
                decision = simulate_review(mod, leased, by_thing[leased.thing_id])
                system.submit_review(decision)

        rows.append(
            {
                "round": rnd,
                "thing_id": sim.thing_id,
                "max_p": max_p,
                "max_s": max_s,
                "task_created": task is not None,
                "accuracy_so_far": correct / (rnd + 1),
                "disagreements_total": system.disagreement_count(),
                "model_version": system.model.version,
                "thresholds": system.threshold_snapshot(),
            }
        )

    metrics = {
        "rounds": rounds,
        "rng_seed": rng_seed,
        "accuracy": correct / rounds if rounds else 0.0,
        "disagreements_total": system.disagreement_count(),
        "final_thresholds": system.threshold_snapshot(),
        "rows": rows,
    }
    if out_dir is not None:
        _write_metrics(Path(out_dir), metrics)
    return metrics


class TickClock:
    """Lockstep clock for reproducible runs: every call advances one step."""

    def __init__(self, start: datetime = EPOCH, step_seconds: float = 1.0):
        self._now = start
        self._step = timedelta(seconds=step_seconds)

    def __call__(self) -> datetime:
        now = self._now
        self._now = now + self._step
        return now


def standard_populations(kind: str) -> list[SimModerator]:
    """The two canonical populations used by tests and the CLI."""
    if kind == "homogeneous":
        return [
            SimModerator("mod-std-1", "standard", 0.5),
            SimModerator("mod-std-2", "standard", 0.5),
        ]
    if kind == "mixed":
        # Low tolerance flags more (strict); high tolerance rejects more.
        return [
            SimModerator("mod-strict-1", "strict", 0.2),
            SimModerator("mod-strict-2", "strict", 0.2),
            SimModerator("mod-perm-1", "permissive", 0.8),
            SimModerator("mod-perm-2", "permissive", 0.8),
        ]
    raise ValueError(f"unknown population kind {kind!r}")


def standard_run(
    rounds: int,
    rng_seed: int,
    n_pos: int = 40,
    n_neg: int = 40,
    population: str = "mixed",
    epochs: int = 5,
    out_dir=None,
    data_dir=None,
):
    """Full experiment: fresh system, synthetic corpus, seed train, rounds.

    Returns (system, metrics).  With a lockstep clock and one seed the whole
    run - audit log included - is reproducible event for event.
    """
    from .service.system import ModerationSystem

    system = ModerationSystem(data_dir=data_dir, clock=TickClock())
    things = generate_corpus(rng_seed, n_pos, n_neg)
    for sim in things:
        asset = MediaAsset(
            id=sim.asset_id, thing_id=sim.thing_id, kind=AssetKind.RENDERED_PREVIEW, pixels=sim.pixels
        )
        system.ingest(sim.raw, assets=[asset], enqueue=False)
    overrides = {sim.thing_id: sim.labels for sim in things}
    system.seed_train(n_pos, n_neg, rng_seed=rng_seed, epochs=epochs, labels_override=overrides)
    metrics = run_rounds(system, things, standard_populations(population), rounds, rng_seed, out_dir=out_dir)
    return system, metrics


def _write_metrics(out_dir: Path, metrics: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "trajectory.jsonl").open("w", encoding="utf-8") as fh:
        for row in metrics["rows"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    groups = sorted(metrics["final_thresholds"])
    theta_cols = [f"theta_{g}_{cat}" for g in groups for cat in TOP_LEVEL]
    with (out_dir / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "thing_id", "max_p", "accuracy_so_far", "disagreements_total", *theta_cols])
        for row in metrics["rows"]:
            theta = [row["thresholds"][g]["thresholds"][cat] for g in groups for cat in TOP_LEVEL]
            writer.writerow(
                [row["round"], row["thing_id"], row["max_p"], row["accuracy_so_far"], row["disagreements_total"], *theta]
            )
