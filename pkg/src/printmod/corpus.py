"""Document model, ingestion, and the labeled seed set.

A "thing" is one shared 3D design: text metadata plus image and mesh assets.
Documents are immutable versions; re-ingesting an id appends a new version to
the JSONL store and emits an audit event.  Store iteration is always sorted
by id so downstream runs are reproducible.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .consent import ConsentMetadata
from .errors import (
    EmptyDocument,
    InsufficientNegatives,
    InsufficientPositives,
    MalformedField,
    MissingId,
    NotFound,
)

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class AssetKind(enum.Enum):
    RENDERED_PREVIEW = "rendered_preview"
    USER_PHOTO = "user_photo"


@dataclass(frozen=True)
class ThingDocument:
    id: str
    title: str = ""
    description: str = ""
    tags: frozenset[str] = frozenset()
    images: tuple[str, ...] = ()
    meshes: tuple[str, ...] = ()
    consent: ConsentMetadata | None = None
    platform_nsfw: bool | None = None
    created_at: datetime = EPOCH
    version: int = 1

    def content_record(self) -> dict:
        """Version-independent content; identical raw input gives identical bytes."""
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "tags": sorted(self.tags),
            "images": list(self.images),
            "meshes": list(self.meshes),
            "consent": self.consent.to_record() if self.consent else None,
            "platform_nsfw": self.platform_nsfw,
            "created_at": self.created_at.isoformat(),
        }

    def content_bytes(self) -> bytes:
        return json.dumps(self.content_record(), sort_keys=True, separators=(",", ":")).encode()

    def to_record(self) -> dict:
        record = self.content_record()
        record["version"] = self.version
        return record

    @classmethod
    def from_record(cls, record: dict) -> "ThingDocument":
        consent = record.get("consent")
        return cls(
            id=record["id"],
            title=record.get("title", ""),
            description=record.get("description", ""),
            tags=frozenset(record.get("tags", [])),
            images=tuple(record.get("images", [])),
            meshes=tuple(record.get("meshes", [])),
            consent=ConsentMetadata.from_record(consent) if consent else None,
            platform_nsfw=record.get("platform_nsfw"),
            created_at=datetime.fromisoformat(record["created_at"]),
            version=record.get("version", 1),
        )


@dataclass(eq=False)
class MediaAsset:
    id: str
    thing_id: str
    kind: AssetKind
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise MalformedField(f"asset {self.id}: expected an (H, W, 3) RGB raster")
        if self.width <= 0 or self.height <= 0:
            raise MalformedField(f"asset {self.id}: zero-sized raster")

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class SeedSet:
    positives: tuple[str, ...]
    negatives: tuple[str, ...]
    rng_seed: int

    def __post_init__(self):
        overlap = set(self.positives) & set(self.negatives)
        if overlap:
            raise MalformedField(f"seed set ids on both sides: {sorted(overlap)[:3]}")

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)


def normalize_tags(raw_tags) -> frozenset[str]:
    """Lowercase + trim + deduplicate; drops entries that normalize to empty."""
    if raw_tags is None:
        return frozenset()
    if isinstance(raw_tags, str) or not hasattr(raw_tags, "__iter__"):
        raise MalformedField("tags must be a list of strings")
    normalized = set()
    for tag in raw_tags:
        if not isinstance(tag, str):
            raise MalformedField(f"tag {tag!r} is not a string")
        cleaned = tag.strip().lower()
        if cleaned:
            normalized.add(cleaned)
    return frozenset(normalized)


def _string_list(raw, name: str) -> tuple[str, ...]:
    if raw is None:
        return ()
    if isinstance(raw, str) or not hasattr(raw, "__iter__"):
        raise MalformedField(f"{name} must be a list of strings")
    items = list(raw)
    if any(not isinstance(item, str) for item in items):
        raise MalformedField(f"{name} entries must be strings")
    return tuple(items)


def document_from_raw(raw: dict, now: datetime | None = None, version: int = 1) -> ThingDocument:
    """Validate and normalize one external record into a ThingDocument."""
    if not isinstance(raw, dict):
        raise MalformedField("raw document must be a JSON object")
    doc_id = raw.get("id")
    if not doc_id or not isinstance(doc_id, str):
        raise MissingId("document has no usable id")

    title = raw.get("title", "") or ""
    description = raw.get("description", "") or ""
    if not isinstance(title, str) or not isinstance(description, str):
        raise MalformedField("title and description must be strings")
    tags = normalize_tags(raw.get("tags"))
    images = _string_list(raw.get("images"), "images")
    meshes = _string_list(raw.get("meshes"), "meshes")

    platform_nsfw = raw.get("platform_nsfw")
    if platform_nsfw is not None and not isinstance(platform_nsfw, bool):
        raise MalformedField("platform_nsfw must be a boolean when present")

    consent_raw = raw.get("consent")
    consent = ConsentMetadata.from_record(consent_raw) if consent_raw else None

    if not description and not images and not meshes:
        raise EmptyDocument(f"document {doc_id!r} has no text, images, or meshes")

    created_raw = raw.get("created_at")
    if created_raw is not None:
        try:
            created_at = datetime.fromisoformat(created_raw)
        except (TypeError, ValueError):
            raise MalformedField(f"bad created_at: {created_raw!r}") from None
    else:
        created_at = now or utc_now()

    return ThingDocument(
        id=doc_id,
        title=title,
        description=description,
        tags=tags,
        images=images,
        meshes=meshes,
        consent=consent,
        platform_nsfw=platform_nsfw,
        created_at=created_at,
        version=version,
    )


class ThingStore:
    """Single-writer document store with optional JSONL persistence.

    ``audit_hook``, when set, is called with (kind, payload) for every
    state-changing action so the owning system can append audit events.
    """

    def __init__(
        self,
        path: Path | None = None,
        clock: Callable[[], datetime] = utc_now,
        audit_hook: Callable[[str, dict], None] | None = None,
    ):
        self.path = Path(path) if path else None
        self.clock = clock
        self.audit_hook = audit_hook
        self._docs: dict[str, ThingDocument] = {}
        self._assets: dict[str, MediaAsset] = {}
        self._assets_by_thing: dict[str, list[str]] = {}
        self._mesh_paths: dict[str, Path] = {}
        if self.path and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = ThingDocument.from_record(json.loads(line))
                self._docs[doc.id] = doc  # later versions win

    def _persist(self, doc: ThingDocument) -> None:
        if not self.path:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(doc.to_record(), sort_keys=True) + "\n")

    # -- documents -----------------------------------------------------------

    def ingest_document(self, raw: dict) -> ThingDocument:
        prior = self._docs.get(raw.get("id")) if isinstance(raw, dict) else None
        version = prior.version + 1 if prior else 1
        doc = document_from_raw(raw, now=self.clock(), version=version)
        self._docs[doc.id] = doc
        self._persist(doc)
        if self.audit_hook:
            self.audit_hook(
                "thing_ingested",
                {"record": doc.to_record(), "replaced_version": prior.version if prior else None},
            )
        return doc

    def restore_document(self, doc: ThingDocument) -> None:
        """Audit-replay path: place a document without persisting or auditing."""
        prior = self._docs.get(doc.id)
        if prior is None or doc.version >= prior.version:
            self._docs[doc.id] = doc

    def get(self, thing_id: str) -> ThingDocument:
        doc = self._docs.get(thing_id)
        if doc is None:
            raise NotFound(f"no document {thing_id!r}")
        return doc

    def __contains__(self, thing_id: str) -> bool:
        return thing_id in self._docs

    def __len__(self) -> int:
        return len(self._docs)

    def things(self) -> Iterator[ThingDocument]:
        for thing_id in sorted(self._docs):
            yield self._docs[thing_id]

    def ids(self) -> list[str]:
        return sorted(self._docs)

    # -- assets and meshes ---------------------------------------------------

    def add_asset(self, asset: MediaAsset) -> None:
        if asset.thing_id not in self._docs:
            raise NotFound(f"asset {asset.id} references unknown thing {asset.thing_id!r}")
        self._assets[asset.id] = asset
        self._assets_by_thing.setdefault(asset.thing_id, [])
        if asset.id not in self._assets_by_thing[asset.thing_id]:
            self._assets_by_thing[asset.thing_id].append(asset.id)

    def asset(self, asset_id: str) -> MediaAsset:
        found = self._assets.get(asset_id)
        if found is None:
            raise NotFound(f"no asset {asset_id!r}")
        return found

    def has_asset(self, asset_id: str) -> bool:
        return asset_id in self._assets

    def assets_for(self, thing_id: str) -> list[MediaAsset]:
        return [self._assets[a] for a in self._assets_by_thing.get(thing_id, [])]

    def register_mesh(self, ref: str, path: Path) -> None:
        self._mesh_paths[ref] = Path(path)

    def mesh_path(self, ref: str) -> Path | None:
        return self._mesh_paths.get(ref)


def load_corpus(store: ThingStore, corpus_path: Path, asset_kind: AssetKind = AssetKind.RENDERED_PREVIEW) -> int:
    """Ingest a JSONL corpus file; PNGs and STL paths resolve next to it.

    Each line is one document record.  An image id ``a`` is read from
    ``<dir>/<a>.png`` when present; mesh refs resolve relative to the corpus
    directory.  Returns the number of documents ingested.
    """
    from PIL import Image  # deferred: only the loader needs Pillow

    corpus_path = Path(corpus_path)
    base = corpus_path.parent
    count = 0
    with corpus_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedField(f"bad JSON line in {corpus_path}: {exc}") from None
            doc = store.ingest_document(raw)
            count += 1
            for asset_id in doc.images:
                png = base / f"{asset_id}.png"
                if png.exists():
                    with Image.open(png) as img:
                        pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
                    store.add_asset(MediaAsset(id=asset_id, thing_id=doc.id, kind=asset_kind, pixels=pixels))
            for mesh_ref in doc.meshes:
                mesh_file = base / mesh_ref
                if mesh_file.exists():
                    store.register_mesh(mesh_ref, mesh_file)
    return count


def build_seed_set(store: ThingStore, n_pos: int, n_neg: int, rng_seed: int) -> SeedSet:
    """Uniform random platform-labeled seed sample, deterministic per seed.

    Positives are drawn from platform-NSFW documents, negatives from the rest
    (label absent counts as negative), both without replacement.
    """
    positives_pool = [d.id for d in store.things() if d.platform_nsfw is True]
    negatives_pool = [d.id for d in store.things() if not d.platform_nsfw]
    if len(positives_pool) < n_pos:
        raise InsufficientPositives(f"need {n_pos} platform-NSFW things, have {len(positives_pool)}")
    if len(negatives_pool) < n_neg:
        raise InsufficientNegatives(f"need {n_neg} non-NSFW things, have {len(negatives_pool)}")
    rng = random.Random(rng_seed)
    positives = tuple(rng.sample(positives_pool, n_pos))
    negatives = tuple(rng.sample(negatives_pool, n_neg))
    return SeedSet(positives=positives, negatives=negatives, rng_seed=rng_seed)
