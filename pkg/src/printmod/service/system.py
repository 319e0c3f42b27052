"""The wired pipeline: stores, model, queue, thresholds, and audit replay.

Durable state is exactly two files (corpus JSONL + audit log).  Everything
else - model weights, threshold profiles, review history, task queue - is
derived and rebuilt by replaying the audit log on startup.  Replay applies
the same arithmetic as the live path with feature vectors embedded in the
events, so rebuilt weights are bit-identical to the originals.
"""

from __future__ import annotations

import json
import math
import random
from datetime import datetime
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..audit import AuditEvent, AuditLog
from ..classifier import (
    TOP_LEVEL,
    CategoryTaxonomy,
    LabeledExample,
    ModelState,
    Prediction,
    default_taxonomy,
    grid_cell_box,
    localize,
    model_from_record,
    model_to_record,
    predict,
    train_seed,
    update,
)
from ..consent import CONSENT_ADVISORY, GateStatus, evaluate_gate
from ..corpus import (
    MediaAsset,
    ThingDocument,
    ThingStore,
    build_seed_set,
    load_corpus,
    utc_now,
)
from ..errors import BadThreshold, UnknownModerator
from ..features import FeatureVector, fuse, image_features, text_features, tokenize
from ..mesh import mesh_features, parse_stl
from ..moderation import (
    Annotation,
    DisagreementRecord,
    GridCellRef,
    ModeratorProfile,
    ReviewDecision,
    ReviewQueue,
    ReviewTask,
    TaskState,
    ThresholdBook,
    TrainingExample,
    update_threshold,
)

DEFAULT_GROUP = "default"
PAGE_SIZE_DEFAULT = 20
PAGE_SIZE_MAX = 100


def _fv_record(fv: FeatureVector) -> dict:
    return {"entries": {k: fv.entries[k] for k in sorted(fv.entries)}, "hash_bits": fv.hash_bits}


def _fv_from_record(record: Mapping) -> FeatureVector:
    return FeatureVector(dict(record["entries"]), hash_bits=record.get("hash_bits"))


def clamp_threshold(value) -> float:
    """Probability-shaped inputs clamp to profile bounds; garbage is an error."""
    try:
        theta = float(value)
    except (TypeError, ValueError):
        raise BadThreshold(f"threshold {value!r} is not a number") from None
    if math.isnan(theta) or theta < 0.0 or theta > 1.0:
        raise BadThreshold(f"threshold {theta!r} outside [0, 1]")
    return min(max(theta, 0.05), 0.95)


class ModerationSystem:
    """Single-process pipeline facade; all mutations funnel through here."""

    def __init__(
        self,
        data_dir: Path | str | None = None,
        clock: Callable[[], datetime] = utc_now,
        taxonomy: CategoryTaxonomy | None = None,
    ):
        self.data_dir = Path(data_dir) if data_dir else None
        self.clock = clock
        self.taxonomy = taxonomy or default_taxonomy()
        audit_path = self.data_dir / "audit.log" if self.data_dir else None
        corpus_path = self.data_dir / "corpus.jsonl" if self.data_dir else None

        self._replaying = False
        self.audit = AuditLog(audit_path)
        self.store = ThingStore(corpus_path, clock=clock, audit_hook=self._audit_hook)
        self.model = ModelState.zero()
        self.thresholds = ThresholdBook()
        self.thresholds.ensure(DEFAULT_GROUP)
        self.queue = ReviewQueue(
            thing_fv=self._thing_fv,
            annotation_fv=self._annotation_fv,
            region_fv=self._region_fv,
            asset_size=self._asset_size,
            clock=clock,
            audit_hook=self._audit_hook,
            taxonomy=self.taxonomy,
        )
        self._fv_cache: dict[tuple[str, int], FeatureVector] = {}
        self._pending_examples: dict[str, list[TrainingExample]] = {}
        self._processed_pairs: set[tuple] = set()
        self._disagreements = 0
        self._replay()

    # -- audit plumbing ------------------------------------------------------

    def _audit_hook(self, kind: str, payload: dict) -> None:
        if not self._replaying:
            self.audit.append(kind, payload)

    def _replay(self) -> None:
        self._replaying = True
        try:
            for event in self.audit.events():
                self._apply_event(event)
        finally:
            self._replaying = False

    def _apply_event(self, event: AuditEvent) -> None:
        kind, payload = event.kind, event.payload
        if kind == "thing_ingested":
            self.store.restore_document(ThingDocument.from_record(payload["record"]))
        elif kind == "moderator_registered":
            profile = ModeratorProfile(id=payload["id"], audience_group=payload["audience_group"])
            self.queue.register_moderator(profile)
            self.thresholds.ensure(profile.audience_group)
        elif kind == "seed_trained":
            self.model = model_from_record(payload["model"])
        elif kind == "model_updated":
            fv = _fv_from_record(payload["fv"])
            self.model = update(self.model, fv, payload["category"], payload["label"], payload["weight"])
        elif kind == "threshold_updated":
            record = DisagreementRecord(
                thing_id=payload["thing_id"],
                category=payload["category"],
                flagging_moderator=payload["flagging_moderator"],
                rejecting_moderator=payload["rejecting_moderator"],
                level=payload["level"],
                timestamp=datetime.fromisoformat(payload["timestamp"]),
            )
            profile = self.thresholds.ensure(payload["audience_group"])
            self.thresholds.put(update_threshold(profile, record, payload["eta_t"]))
            self._processed_pairs.add(self._pair_key(record))
            self._disagreements += 1
        elif kind == "task_enqueued":
            self.queue.restore_task(payload)
        elif kind == "review_submitted":
            self.queue.restore_review(payload)
        elif kind == "thing_needs_discussion":
            self.queue.restore_frozen(payload["thing_id"])
        # task_leased events need no replay: leases do not survive restarts.

    # -- featurization -------------------------------------------------------

    def _featurize(self, doc: ThingDocument) -> FeatureVector:
        key = (doc.id, doc.version)
        cached = self._fv_cache.get(key)
        if cached is not None:
            return cached
        parts = [text_features(doc.title, doc.description, doc.tags)]
        for asset in self.store.assets_for(doc.id):
            parts.append(image_features(asset.pixels))
        for mesh_ref in doc.meshes:
            path = self.store.mesh_path(mesh_ref)
            if path is not None:
                parts.append(mesh_features(parse_stl(path.read_bytes())))
        fv = fuse(*parts)
        self._fv_cache[key] = fv
        return fv

    def _thing_fv(self, thing_id: str) -> FeatureVector:
        return self._featurize(self.store.get(thing_id))

    def _annotation_fv(self, thing_id: str, ann: Annotation) -> FeatureVector:
        doc = self.store.get(thing_id)
        asset = self.store.asset(ann.asset_id)
        return fuse(
            text_features(doc.title, doc.description, doc.tags),
            image_features(asset.pixels, region=ann.bbox),
        )

    def _region_fv(self, thing_id: str, cell: GridCellRef) -> FeatureVector:
        asset = self.store.asset(cell.asset_id)
        box = grid_cell_box(asset.width, asset.height, cell.row, cell.col)
        return fuse(image_features(asset.pixels, region=box))

    def _asset_size(self, asset_id: str) -> tuple[int, int] | None:
        if not self.store.has_asset(asset_id):
            return None
        asset = self.store.asset(asset_id)
        return (asset.width, asset.height)

    # -- registry ------------------------------------------------------------

    def register_moderator(self, profile: ModeratorProfile) -> None:
        try:
            existing = self.queue.moderator(profile.id)
        except UnknownModerator:
            existing = None
        if existing == profile:
            return
        self.queue.register_moderator(profile)
        self.thresholds.ensure(profile.audience_group)
        self._audit_hook("moderator_registered", {"id": profile.id, "audience_group": profile.audience_group})

    def load_moderators_file(self, path: Path) -> int:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        for entry in entries:
            self.register_moderator(ModeratorProfile(id=entry["id"], audience_group=entry["audience_group"]))
        return len(entries)

    def is_moderator(self, moderator_id: str | None) -> bool:
        if not moderator_id:
            return False
        try:
            self.queue.moderator(moderator_id)
        except UnknownModerator:
            return False
        return True

    # -- ingestion and prediction --------------------------------------------

    def ingest(
        self,
        raw: dict,
        assets: Sequence[MediaAsset] = (),
        enqueue: bool = True,
        rng: random.Random | None = None,
    ) -> dict:
        doc = self.store.ingest_document(raw)
        for asset in assets:
            self.store.add_asset(asset)
        self._fv_cache.pop((doc.id, doc.version), None)
        gate = evaluate_gate(doc)
        prediction = self.predict_thing(doc.id)
        # Re-ingesting while a review is open is fine: the document version
        # advances and the response reports the task already in flight.
        task_id = self.queue.open_task_for(doc.id)
        if task_id is None and enqueue and not self.queue.is_frozen(doc.id):
            task = self.queue.enqueue(prediction, rng=rng)
            task_id = task.task_id if task else None
        return {
            "thing": doc.to_record(),
            "prediction": prediction.to_record(),
            "gate": gate.to_record(),
            # Creators of scan-tagged uploads see the consent ask up front.
            "advisory": CONSENT_ADVISORY if gate.status is GateStatus.BLOCKED else None,
            "task_id": task_id,
        }

    def ingest_corpus(self, corpus_path: Path) -> int:
        return load_corpus(self.store, corpus_path)

    def predict_thing(self, thing_id: str) -> Prediction:
        doc = self.store.get(thing_id)
        fv = self._featurize(doc)
        base = predict(self.model, fv, thing_id=thing_id)
        regions = {}
        for asset in self.store.assets_for(thing_id):
            if asset.width >= 3 and asset.height >= 3:
                grid = localize(self.model, asset)
                regions[asset.id] = tuple(tuple(float(v) for v in row) for row in grid)
        if not regions:
            return base
        return Prediction(
            thing_id=base.thing_id,
            probabilities=base.probabilities,
            model_version=base.model_version,
            attributions=base.attributions,
            regions=regions,
        )

    def enqueue_thing(self, thing_id: str, rng: random.Random | None = None) -> ReviewTask | None:
        return self.queue.enqueue(self.predict_thing(thing_id), rng=rng)

    # -- training ------------------------------------------------------------

    def seed_train(
        self,
        n_pos: int,
        n_neg: int,
        rng_seed: int = 42,
        epochs: int = 5,
        labels_override: Mapping[str, Mapping[str, int]] | None = None,
    ) -> ModelState:
        """Train the initial model from the platform-labeled seed sample.

        Without an override, the platform NSFW flag maps to a
        ``sexual_suggestive`` positive and nothing else.
        """
        seed_set = build_seed_set(self.store, n_pos, n_neg, rng_seed)
        examples = []
        for thing_id in seed_set.positives + seed_set.negatives:
            doc = self.store.get(thing_id)
            if labels_override and thing_id in labels_override:
                labels = dict(labels_override[thing_id])
            else:
                labels = {cat: 0 for cat in TOP_LEVEL}
                if doc.platform_nsfw:
                    labels["sexual_suggestive"] = 1
            examples.append(LabeledExample(fv=self._featurize(doc), labels=labels, thing_id=thing_id))
        model = train_seed(examples, epochs=epochs, rng_seed=rng_seed)
        self.model = model
        self._audit_hook(
            "seed_trained",
            {
                "model": model_to_record(model),
                "n_pos": n_pos,
                "n_neg": n_neg,
                "rng_seed": rng_seed,
                "epochs": epochs,
            },
        )
        return model

    # -- review flow ---------------------------------------------------------

    def next_task(self, moderator_id: str) -> ReviewTask:
        return self.queue.next_task(moderator_id)

    @staticmethod
    def _pair_key(record: DisagreementRecord) -> tuple:
        return (record.thing_id, record.category, record.flagging_moderator, record.rejecting_moderator)

    def submit_review(self, decision: ReviewDecision) -> dict:
        examples = self.queue.submit_review(decision)
        task = self.queue.task(decision.task_id)
        self._pending_examples.setdefault(task.task_id, []).extend(examples)
        completed = task.state is TaskState.COMPLETED
        applied = 0
        if completed:
            batch = self._pending_examples.pop(task.task_id, [])
            for ex in batch:
                self.model = update(self.model, ex.fv, ex.category, ex.label, ex.weight)
                self._audit_hook(
                    "model_updated",
                    {
                        "category": ex.category,
                        "label": ex.label,
                        "weight": ex.weight,
                        "thing_id": ex.thing_id,
                        "source": ex.source,
                        "fv": _fv_record(ex.fv),
                        "model_version": self.model.version,
                    },
                )
            applied = len(batch)
            self._process_disagreements(task.thing_id)
        return {
            "task_id": task.task_id,
            "state": task.state.value,
            "examples_emitted": len(examples),
            "examples_applied": applied,
            "model_version": self.model.version,
        }

    def _process_disagreements(self, thing_id: str) -> None:
        for record in self.queue.detect_disagreements(thing_id):
            key = self._pair_key(record)
            if key in self._processed_pairs:
                continue
            self._processed_pairs.add(key)
            self._disagreements += 1
            group = self.queue.moderator(record.rejecting_moderator).audience_group
            profile = self.thresholds.ensure(group)
            updated = update_threshold(profile, record)
            self.thresholds.put(updated)
            self._audit_hook(
                "threshold_updated",
                {
                    "audience_group": group,
                    "category": record.category,
                    "level": record.level,
                    "thing_id": record.thing_id,
                    "flagging_moderator": record.flagging_moderator,
                    "rejecting_moderator": record.rejecting_moderator,
                    "timestamp": record.timestamp.isoformat(),
                    "eta_t": 0.1,
                    "theta_after": updated.thresholds[record.category],
                },
            )

    def disagreement_count(self) -> int:
        return self._disagreements

    def threshold_snapshot(self) -> dict:
        return self.thresholds.snapshot()

    # -- read paths ----------------------------------------------------------

    def search(
        self,
        terms: str = "",
        audience_group: str = DEFAULT_GROUP,
        threshold_override=None,
        page: int = 1,
        page_size: int = PAGE_SIZE_DEFAULT,
        requester_is_moderator: bool = False,
    ) -> dict:
        profile = self.thresholds.get(audience_group)
        override = clamp_threshold(threshold_override) if threshold_override is not None else None
        applied = {cat: (override if override is not None else profile.get(cat)) for cat in TOP_LEVEL}
        page = max(1, int(page))
        page_size = max(1, min(int(page_size), PAGE_SIZE_MAX))
        query_tokens = set(tokenize(terms)) if terms else set()
        items = []
        for doc in self.store.things():
            if query_tokens:
                hay = set(tokenize(f"{doc.title} {doc.description}")) | set(doc.tags)
                if not query_tokens <= hay:
                    continue
            gate = evaluate_gate(doc)
            if gate.status is GateStatus.BLOCKED and not requester_is_moderator:
                continue
            prediction = self.predict_thing(doc.id)
            flags = sorted(cat for cat, p in prediction.probabilities.items() if p >= applied[cat])
            items.append(
                {
                    "thing_id": doc.id,
                    "title": doc.title,
                    "tags": sorted(doc.tags),
                    "probabilities": {cat: prediction.probabilities[cat] for cat in sorted(prediction.probabilities)},
                    "flags": flags,
                    "gate": gate.to_record(),
                }
            )
        total = len(items)
        start = (page - 1) * page_size
        return {
            "items": items[start : start + page_size],
            "applied_thresholds": applied,
            "audience_group": audience_group,
            "page": page,
            "page_size": page_size,
            "total": total,
        }

    def threshold_examples(self, theta, n: int = 5, rng_seed: int = 0) -> dict:
        theta_eff = clamp_threshold(theta)
        n = max(1, min(int(n), PAGE_SIZE_MAX))
        qualifying = []
        for doc in self.store.things():
            if evaluate_gate(doc).status is GateStatus.BLOCKED:
                continue
            prediction = self.predict_thing(doc.id)
            if prediction.max_probability() >= theta_eff:
                qualifying.append((doc, prediction))
        rng = random.Random(rng_seed)
        sample = rng.sample(qualifying, min(n, len(qualifying)))
        return {
            "threshold": theta_eff,
            "examples": [
                {
                    "thing_id": doc.id,
                    "title": doc.title,
                    "max_probability": prediction.max_probability(),
                    "flags": sorted(cat for cat, p in prediction.probabilities.items() if p >= theta_eff),
                }
                for doc, prediction in sample
            ],
        }

    def explanation(self, thing_id: str, requester_is_moderator: bool = False) -> dict:
        doc = self.store.get(thing_id)
        gate = evaluate_gate(doc)
        prediction = self.predict_thing(thing_id)
        reviews = self.queue.reviews_for_thing(thing_id)
        annotations = [
            {
                "moderator_id": review.moderator_id,
                "case": review.case.value,
                "asset_id": ann.asset_id,
                "bbox": list(ann.bbox),
                "category_path": list(ann.category_path),
                "level": ann.level,
                "rationale": ann.rationale,
            }
            for review in reviews
            for ann in review.annotations
        ]
        return {
            "thing_id": thing_id,
            "title": doc.title,
            "prediction": prediction.to_record(),
            "model_version": self.model.version,
            "annotations": annotations,
            "reviews": [
                {"moderator_id": r.moderator_id, "case": r.case.value, "submitted_at": r.submitted_at.isoformat()}
                for r in reviews
            ],
            "gate": gate.to_record(),
            "needs_discussion": self.queue.is_frozen(thing_id),
        }

    def export_audit(self, out_path: Path) -> int:
        return self.audit.export_jsonl(out_path)
