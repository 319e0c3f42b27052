"""Human-in-the-loop review core.

Review tasks flow pending -> leased -> completed, with at most one active
lease at a time.  A task completes once ``reviews_required`` distinct
moderators have each submitted exactly one decision; the serial lease makes
"reviewed by multiple moderators" a sequence, not a race.

The three decision cases and what they teach the model:

* ``agree_finalize``  - confirm flagged categories; positive examples at
  weight 1.0 on the thing's full feature vector.
* ``missed_part``     - bounding-box annotation of something the model
  missed; positive example per annotation at weight level/3 on
  text + crop features.
* ``reject_detection``- grid cells the moderator judges clean; negative
  example per cell crop at weight 1.0.

Disagreements (one review flags a category, another rejects it) drive the
rejecting moderator's audience-group threshold upward - the group that
tolerates the content sees less of it flagged, instead of the content being
globally censored.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Callable, Mapping, Sequence

from .classifier import (
    LOCALIZE_GRID,
    TOP_LEVEL,
    CategoryTaxonomy,
    ModelState,
    Prediction,
    default_taxonomy,
    update,
)
from .corpus import utc_now
from .errors import (
    DuplicateTaskForThing,
    InvalidDecision,
    LeaseViolation,
    NotFound,
    QueueEmpty,
    StaleTask,
    UnknownCategory,
    UnknownGroup,
    UnknownModerator,
)
from .features import FeatureVector

LEASE_SECONDS = 15 * 60
ENQUEUE_FLOOR = 0.3
AUDIT_RATE = 0.02
REVIEWS_REQUIRED = 2
THETA_MIN = 0.05
THETA_MAX = 0.95
THETA_DEFAULT = 0.5
ETA_T = 0.1
# Flagging reviews without annotations (Case 1) carry no sensitivity level;
# they count as the baseline level, the one whose weight is 1.0.
DEFAULT_LEVEL = 3
# A thing with this many reviews entangled in disagreements is frozen for
# human discussion rather than resolved automatically.
DISCUSSION_CONFLICTS = 3


class TaskState(str, Enum):
    PENDING = "pending"
    LEASED = "leased"
    COMPLETED = "completed"


class ReviewCase(str, Enum):
    AGREE_FINALIZE = "agree_finalize"
    MISSED_PART = "missed_part"
    REJECT_DETECTION = "reject_detection"


def sample_weight_for_level(level: int) -> float:
    return level / 3


@dataclass(frozen=True)
class GridCellRef:
    """One cell of an asset's 3x3 localization grid, row-major."""

    asset_id: str
    row: int
    col: int

    def __post_init__(self):
        if not (0 <= self.row < LOCALIZE_GRID and 0 <= self.col < LOCALIZE_GRID):
            raise InvalidDecision(f"grid cell ({self.row}, {self.col}) outside {LOCALIZE_GRID}x{LOCALIZE_GRID}")

    def to_record(self) -> dict:
        return {"asset_id": self.asset_id, "row": self.row, "col": self.col}

    @classmethod
    def from_record(cls, record: Mapping) -> "GridCellRef":
        return cls(asset_id=record["asset_id"], row=int(record["row"]), col=int(record["col"]))


@dataclass(frozen=True)
class Annotation:
    asset_id: str
    bbox: tuple[int, int, int, int]  # x, y, w, h in pixels
    category_path: tuple[str, str | None]
    level: int
    rationale: str

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0 or x < 0 or y < 0:
            raise InvalidDecision(f"bbox {self.bbox} must have positive size and nonnegative origin")
        if self.level not in (1, 2, 3, 4, 5):
            raise InvalidDecision(f"level must be 1-5, got {self.level}")
        if not self.rationale.strip():
            raise InvalidDecision("annotation rationale must be nonempty")

    def to_record(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "bbox": list(self.bbox),
            "category_path": list(self.category_path),
            "level": self.level,
            "rationale": self.rationale,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Annotation":
        path = record["category_path"]
        second = path[1] if len(path) > 1 else None
        return cls(
            asset_id=record["asset_id"],
            bbox=tuple(int(v) for v in record["bbox"]),
            category_path=(path[0], second),
            level=int(record["level"]),
            rationale=record["rationale"],
        )


@dataclass(frozen=True)
class ReviewDecision:
    task_id: str
    moderator_id: str
    case: ReviewCase
    selected_categories: tuple[str, ...] = ()
    annotations: tuple[Annotation, ...] = ()
    rejected_regions: tuple[GridCellRef, ...] = ()

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "moderator_id": self.moderator_id,
            "case": self.case.value,
            "selected_categories": list(self.selected_categories),
            "annotations": [a.to_record() for a in self.annotations],
            "rejected_regions": [r.to_record() for r in self.rejected_regions],
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ReviewDecision":
        try:
            case = ReviewCase(record["case"])
        except ValueError as exc:
            raise InvalidDecision(f"unknown review case {record.get('case')!r}") from exc
        return cls(
            task_id=record["task_id"],
            moderator_id=record["moderator_id"],
            case=case,
            selected_categories=tuple(record.get("selected_categories", ())),
            annotations=tuple(Annotation.from_record(a) for a in record.get("annotations", ())),
            rejected_regions=tuple(GridCellRef.from_record(r) for r in record.get("rejected_regions", ())),
        )


@dataclass(frozen=True)
class ModeratorProfile:
    id: str
    audience_group: str


@dataclass(frozen=True)
class StoredReview:
    """A completed decision plus context fixed at submit time."""

    task_id: str
    thing_id: str
    moderator_id: str
    case: ReviewCase
    selected_categories: tuple[str, ...]
    annotations: tuple[Annotation, ...]
    rejected_regions: tuple[GridCellRef, ...]
    rejected_category: str | None
    submitted_at: datetime

    def flagged_categories(self) -> frozenset[str]:
        if self.case is ReviewCase.AGREE_FINALIZE:
            return frozenset(self.selected_categories)
        if self.case is ReviewCase.MISSED_PART:
            return frozenset(a.category_path[0] for a in self.annotations)
        return frozenset()

    def flag_level(self, category: str) -> int:
        levels = [a.level for a in self.annotations if a.category_path[0] == category]
        return max(levels) if levels else DEFAULT_LEVEL

    def rejects(self, category: str) -> bool:
        # A rejection is non-vacuous: it targets the category the model
        # actually detected (argmax at submit time) and adds nothing for it.
        return (
            self.case is ReviewCase.REJECT_DETECTION
            and self.rejected_category == category
            and category not in self.flagged_categories()
        )

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "thing_id": self.thing_id,
            "moderator_id": self.moderator_id,
            "case": self.case.value,
            "selected_categories": list(self.selected_categories),
            "annotations": [a.to_record() for a in self.annotations],
            "rejected_regions": [r.to_record() for r in self.rejected_regions],
            "rejected_category": self.rejected_category,
            "submitted_at": self.submitted_at.isoformat(),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "StoredReview":
        return cls(
            task_id=record["task_id"],
            thing_id=record["thing_id"],
            moderator_id=record["moderator_id"],
            case=ReviewCase(record["case"]),
            selected_categories=tuple(record["selected_categories"]),
            annotations=tuple(Annotation.from_record(a) for a in record["annotations"]),
            rejected_regions=tuple(GridCellRef.from_record(r) for r in record["rejected_regions"]),
            rejected_category=record["rejected_category"],
            submitted_at=datetime.fromisoformat(record["submitted_at"]),
        )


@dataclass
class ReviewTask:
    task_id: str
    thing_id: str
    prediction: Prediction
    state: TaskState = TaskState.PENDING
    lease: tuple[str, datetime] | None = None
    created_at: datetime = field(default_factory=utc_now)
    reviewed_by: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "thing_id": self.thing_id,
            "prediction": self.prediction.to_record(),
            "state": self.state.value,
            "created_at": self.created_at.isoformat(),
            "reviewed_by": list(self.reviewed_by),
        }


@dataclass(frozen=True)
class DisagreementRecord:
    thing_id: str
    category: str
    flagging_moderator: str
    rejecting_moderator: str
    level: int
    timestamp: datetime

    def to_record(self) -> dict:
        return {
            "thing_id": self.thing_id,
            "category": self.category,
            "flagging_moderator": self.flagging_moderator,
            "rejecting_moderator": self.rejecting_moderator,
            "level": self.level,
            "timestamp": self.timestamp.isoformat(),
        }


@dataclass(frozen=True)
class TrainingExample:
    fv: FeatureVector
    category: str
    label: int
    weight: float
    thing_id: str
    source: str


@dataclass(frozen=True)
class ThresholdProfile:
    audience_group: str
    thresholds: Mapping[str, float]
    update_count: int = 0

    @classmethod
    def default(cls, audience_group: str) -> "ThresholdProfile":
        return cls(audience_group=audience_group, thresholds={cat: THETA_DEFAULT for cat in TOP_LEVEL})

    def get(self, category: str) -> float:
        if category not in self.thresholds:
            raise UnknownCategory(category)
        return self.thresholds[category]

    def to_record(self) -> dict:
        return {
            "audience_group": self.audience_group,
            "thresholds": {cat: self.thresholds[cat] for cat in sorted(self.thresholds)},
            "update_count": self.update_count,
        }


def apply_threshold(prediction: Prediction, profile: ThresholdProfile) -> frozenset[str]:
    """Categories flagged for this audience; p == theta flags (conservative)."""
    return frozenset(
        cat for cat, p in prediction.probabilities.items() if p >= profile.get(cat)
    )


def update_threshold(profile: ThresholdProfile, disagreement: DisagreementRecord, eta_t: float = ETA_T) -> ThresholdProfile:
    """Raise the group's cutoff for the disputed category, capped at 0.95."""
    category = disagreement.category
    current = profile.get(category)
    raised = min(current + eta_t * (disagreement.level / 5), THETA_MAX)
    thresholds = dict(profile.thresholds)
    thresholds[category] = raised
    return replace(profile, thresholds=thresholds, update_count=profile.update_count + 1)


def detect_disagreements(
    reviews: Sequence[StoredReview], category: str | None = None
) -> list[DisagreementRecord]:
    """Pair every flagging review with every rejecting review per category.

    Records are ordered (category, flagging review, rejecting review) by
    submission order, so detection over the same reviews is deterministic.
    """
    categories = (category,) if category is not None else TOP_LEVEL
    records: list[DisagreementRecord] = []
    ordered = sorted(reviews, key=lambda r: (r.submitted_at, r.task_id, r.moderator_id))
    for cat in categories:
        if cat not in TOP_LEVEL:
            raise UnknownCategory(cat)
        flagging = [r for r in ordered if cat in r.flagged_categories()]
        rejecting = [r for r in ordered if r.rejects(cat)]
        for fl in flagging:
            for rj in rejecting:
                if fl.moderator_id == rj.moderator_id:
                    continue
                records.append(
                    DisagreementRecord(
                        thing_id=fl.thing_id,
                        category=cat,
                        flagging_moderator=fl.moderator_id,
                        rejecting_moderator=rj.moderator_id,
                        level=fl.flag_level(cat),
                        timestamp=max(fl.submitted_at, rj.submitted_at),
                    )
                )
    return records


def retrain(examples: Sequence[TrainingExample], model: ModelState) -> ModelState:
    """Fold review-emitted examples into the model, one SGD step each."""
    for ex in examples:
        model = update(model, ex.fv, ex.category, ex.label, ex.weight)
    return model


class ThresholdBook:
    """Per-audience-group threshold profiles; groups appear on registration."""

    def __init__(self):
        self._profiles: dict[str, ThresholdProfile] = {}

    def ensure(self, audience_group: str) -> ThresholdProfile:
        if audience_group not in self._profiles:
            self._profiles[audience_group] = ThresholdProfile.default(audience_group)
        return self._profiles[audience_group]

    def get(self, audience_group: str) -> ThresholdProfile:
        try:
            return self._profiles[audience_group]
        except KeyError:
            raise UnknownGroup(audience_group) from None

    def put(self, profile: ThresholdProfile) -> None:
        self._profiles[profile.audience_group] = profile

    def groups(self) -> list[str]:
        return sorted(self._profiles)

    def snapshot(self) -> dict[str, dict]:
        return {group: self._profiles[group].to_record() for group in self.groups()}


class ReviewQueue:
    """Task queue with serial leases and multi-moderator completion.

    Feature providers are injected so the queue stays free of corpus and
    imaging concerns:

    * ``thing_fv(thing_id)``              - full fused vector of the thing
    * ``annotation_fv(thing_id, ann)``    - text + bbox-crop features
    * ``region_fv(thing_id, cell)``       - grid-cell crop features
    * ``asset_size(asset_id)``            - (width, height) or None
    """

    def __init__(
        self,
        *,
        thing_fv: Callable[[str], FeatureVector],
        annotation_fv: Callable[[str, Annotation], FeatureVector],
        region_fv: Callable[[str, GridCellRef], FeatureVector],
        asset_size: Callable[[str], tuple[int, int] | None] | None = None,
        clock: Callable[[], datetime] = utc_now,
        audit_hook: Callable[[str, dict], None] | None = None,
        taxonomy: CategoryTaxonomy | None = None,
        reviews_required: int = REVIEWS_REQUIRED,
        lease_seconds: int = LEASE_SECONDS,
    ):
        self._thing_fv = thing_fv
        self._annotation_fv = annotation_fv
        self._region_fv = region_fv
        self._asset_size = asset_size
        self._clock = clock
        self._audit = audit_hook or (lambda kind, payload: None)
        self._taxonomy = taxonomy or default_taxonomy()
        self._reviews_required = reviews_required
        self._lease = timedelta(seconds=lease_seconds)
        self._seq = 0
        self._tasks: dict[str, ReviewTask] = {}
        self._order: list[str] = []
        self._open_by_thing: dict[str, str] = {}
        self._reviews_by_thing: dict[str, list[StoredReview]] = {}
        self._frozen: set[str] = set()
        self._moderators: dict[str, ModeratorProfile] = {}

    # -- registry ------------------------------------------------------------

    def register_moderator(self, profile: ModeratorProfile) -> None:
        self._moderators[profile.id] = profile

    def moderator(self, moderator_id: str) -> ModeratorProfile:
        try:
            return self._moderators[moderator_id]
        except KeyError:
            raise UnknownModerator(moderator_id) from None

    def moderators(self) -> list[ModeratorProfile]:
        return [self._moderators[mid] for mid in sorted(self._moderators)]

    # -- queue ---------------------------------------------------------------

    def enqueue(
        self,
        prediction: Prediction,
        enqueue_floor: float = ENQUEUE_FLOOR,
        audit_rate: float = AUDIT_RATE,
        rng: random.Random | None = None,
    ) -> ReviewTask | None:
        thing_id = prediction.thing_id
        if thing_id in self._frozen:
            return None
        open_id = self._open_by_thing.get(thing_id)
        if open_id is not None:
            raise DuplicateTaskForThing(f"thing {thing_id} already has open task {open_id}")
        if prediction.max_probability() < enqueue_floor:
            # Audit draw happens only below the floor, so confident detections
            # never consume randomness.
            if rng is None or rng.random() >= audit_rate:
                return None
        self._seq += 1
        task = ReviewTask(
            task_id=f"task-{self._seq:06d}",
            thing_id=thing_id,
            prediction=prediction,
            created_at=self._clock(),
        )
        self._tasks[task.task_id] = task
        self._order.append(task.task_id)
        self._open_by_thing[thing_id] = task.task_id
        self._audit("task_enqueued", task.to_record())
        return task

    def _expire_leases(self, now: datetime) -> None:
        for task in self._tasks.values():
            if task.state is TaskState.LEASED and task.lease is not None and task.lease[1] <= now:
                task.lease = None
                task.state = TaskState.PENDING

    def next_task(self, moderator_id: str) -> ReviewTask:
        self.moderator(moderator_id)
        now = self._clock()
        self._expire_leases(now)
        for task_id in self._order:
            task = self._tasks[task_id]
            if task.state is not TaskState.PENDING:
                continue
            if moderator_id in task.reviewed_by:
                continue
            task.state = TaskState.LEASED
            task.lease = (moderator_id, now + self._lease)
            self._audit(
                "task_leased",
                {"task_id": task.task_id, "moderator_id": moderator_id, "expiry": task.lease[1].isoformat()},
            )
            return task
        raise QueueEmpty(f"no pending task available for {moderator_id}")

    def task(self, task_id: str) -> ReviewTask:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise NotFound(f"no task {task_id}") from None

    def pending_count(self) -> int:
        self._expire_leases(self._clock())
        return sum(1 for t in self._tasks.values() if t.state is TaskState.PENDING)

    def is_frozen(self, thing_id: str) -> bool:
        return thing_id in self._frozen

    def open_task_for(self, thing_id: str) -> str | None:
        return self._open_by_thing.get(thing_id)

    def reviews_for_thing(self, thing_id: str) -> list[StoredReview]:
        return list(self._reviews_by_thing.get(thing_id, ()))

    # -- review submission ---------------------------------------------------

    def _validate_decision(self, decision: ReviewDecision, task: ReviewTask) -> None:
        case = decision.case
        if case is ReviewCase.AGREE_FINALIZE:
            if not decision.selected_categories:
                raise InvalidDecision("agree_finalize requires at least one selected category")
            if decision.annotations or decision.rejected_regions:
                raise InvalidDecision("agree_finalize carries no annotations or rejected regions")
            for cat in decision.selected_categories:
                if cat not in self._taxonomy.children:
                    raise InvalidDecision(f"unknown category {cat!r}")
        elif case is ReviewCase.MISSED_PART:
            if not decision.annotations:
                raise InvalidDecision("missed_part requires at least one annotation")
            if decision.selected_categories or decision.rejected_regions:
                raise InvalidDecision("missed_part carries only annotations")
            for ann in decision.annotations:
                if not self._taxonomy.valid_path(ann.category_path):
                    raise InvalidDecision(f"category path {ann.category_path} not in taxonomy")
                self._check_bbox(ann)
        elif case is ReviewCase.REJECT_DETECTION:
            if not decision.rejected_regions:
                raise InvalidDecision("reject_detection requires at least one rejected region")
            if decision.selected_categories or decision.annotations:
                raise InvalidDecision("reject_detection carries only rejected regions")
            if self._asset_size is not None:
                for cell in decision.rejected_regions:
                    if self._asset_size(cell.asset_id) is None:
                        raise InvalidDecision(f"unknown asset {cell.asset_id!r}")

    def _check_bbox(self, ann: Annotation) -> None:
        if self._asset_size is None:
            return
        size = self._asset_size(ann.asset_id)
        if size is None:
            raise InvalidDecision(f"unknown asset {ann.asset_id!r}")
        x, y, w, h = ann.bbox
        if x + w > size[0] or y + h > size[1]:
            raise InvalidDecision(f"bbox {ann.bbox} exceeds asset bounds {size}")

    def _emit_examples(self, decision: ReviewDecision, task: ReviewTask) -> list[TrainingExample]:
        thing_id = task.thing_id
        examples: list[TrainingExample] = []
        if decision.case is ReviewCase.AGREE_FINALIZE:
            fv = self._thing_fv(thing_id)
            for cat in decision.selected_categories:
                examples.append(TrainingExample(fv, cat, 1, 1.0, thing_id, decision.case.value))
        elif decision.case is ReviewCase.MISSED_PART:
            for ann in decision.annotations:
                fv = self._annotation_fv(thing_id, ann)
                examples.append(
                    TrainingExample(
                        fv, ann.category_path[0], 1, sample_weight_for_level(ann.level), thing_id, decision.case.value
                    )
                )
        else:
            category = task.prediction.argmax_category()
            for cell in decision.rejected_regions:
                fv = self._region_fv(thing_id, cell)
                examples.append(TrainingExample(fv, category, 0, 1.0, thing_id, decision.case.value))
        return examples

    def submit_review(self, decision: ReviewDecision) -> list[TrainingExample]:
        task = self.task(decision.task_id)
        if task.state is TaskState.COMPLETED:
            raise StaleTask(f"task {task.task_id} already completed")
        now = self._clock()
        if task.lease is None or task.lease[0] != decision.moderator_id:
            raise LeaseViolation(f"task {task.task_id} not leased to {decision.moderator_id}")
        if task.lease[1] <= now:
            task.lease = None
            task.state = TaskState.PENDING
            raise LeaseViolation(f"lease on {task.task_id} expired")
        if decision.moderator_id in task.reviewed_by:
            raise InvalidDecision(f"{decision.moderator_id} already reviewed {task.task_id}")
        self.moderator(decision.moderator_id)
        self._validate_decision(decision, task)

        examples = self._emit_examples(decision, task)
        rejected_category = (
            task.prediction.argmax_category() if decision.case is ReviewCase.REJECT_DETECTION else None
        )
        review = StoredReview(
            task_id=task.task_id,
            thing_id=task.thing_id,
            moderator_id=decision.moderator_id,
            case=decision.case,
            selected_categories=decision.selected_categories,
            annotations=decision.annotations,
            rejected_regions=decision.rejected_regions,
            rejected_category=rejected_category,
            submitted_at=now,
        )
        self._reviews_by_thing.setdefault(task.thing_id, []).append(review)
        task.reviewed_by = task.reviewed_by + (decision.moderator_id,)
        task.lease = None
        if len(task.reviewed_by) >= self._reviews_required:
            task.state = TaskState.COMPLETED
            self._open_by_thing.pop(task.thing_id, None)
        else:
            task.state = TaskState.PENDING
        self._audit("review_submitted", review.to_record())
        self._maybe_freeze(task.thing_id)
        return examples

    def _maybe_freeze(self, thing_id: str) -> None:
        if thing_id in self._frozen:
            return
        reviews = self.reviews_for_thing(thing_id)
        records = detect_disagreements(reviews)
        involved = {rec.flagging_moderator for rec in records} | {rec.rejecting_moderator for rec in records}
        # A review conflicts if its moderator sits on either side of any
        # disagreement pair; count reviews, not moderators.
        conflicted = {(r.task_id, r.moderator_id) for r in reviews if r.moderator_id in involved}
        if len(conflicted) >= DISCUSSION_CONFLICTS:
            self._frozen.add(thing_id)
            self._audit("thing_needs_discussion", {"thing_id": thing_id, "conflicting_reviews": len(conflicted)})

    def detect_disagreements(self, thing_id: str, category: str | None = None) -> list[DisagreementRecord]:
        return detect_disagreements(self.reviews_for_thing(thing_id), category)

    # -- audit replay --------------------------------------------------------
    # Restore methods rebuild queue state from logged payloads without
    # re-running enqueue randomness, lease clocks, or emitting new events.
    # Leases never survive a restart: restored tasks come back pending.

    def restore_task(self, record: Mapping) -> ReviewTask:
        task = ReviewTask(
            task_id=record["task_id"],
            thing_id=record["thing_id"],
            prediction=Prediction.from_record(record["prediction"]),
            state=TaskState.PENDING,
            created_at=datetime.fromisoformat(record["created_at"]),
        )
        self._tasks[task.task_id] = task
        self._order.append(task.task_id)
        self._open_by_thing[task.thing_id] = task.task_id
        suffix = task.task_id.rsplit("-", 1)[-1]
        if suffix.isdigit():
            self._seq = max(self._seq, int(suffix))
        return task

    def restore_review(self, record: Mapping) -> StoredReview:
        review = StoredReview.from_record(record)
        self._reviews_by_thing.setdefault(review.thing_id, []).append(review)
        task = self._tasks.get(review.task_id)
        if task is not None and review.moderator_id not in task.reviewed_by:
            task.reviewed_by = task.reviewed_by + (review.moderator_id,)
            if len(task.reviewed_by) >= self._reviews_required:
                task.state = TaskState.COMPLETED
                task.lease = None
                if self._open_by_thing.get(task.thing_id) == task.task_id:
                    del self._open_by_thing[task.thing_id]
        return review

    def restore_frozen(self, thing_id: str) -> None:
        self._frozen.add(thing_id)
