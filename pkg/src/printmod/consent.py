"""Subject-consent gate for 3D-scanned human content.

Scan-tagged documents without recorded subject consent are blocked from
public visibility (not removed): creators keep the document and can add the
consent metadata later.  Every blocked result carries a machine-readable
reason and a human-readable explanation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import MalformedField

if TYPE_CHECKING:
    from .corpus import ThingDocument

# Tags that mark a document as a 3D scan of a (potentially human) subject.
# Configuration, not policy: compared against normalized (lowercased) tags.
SCAN_MARKER_TAGS = frozenset({"3d_scan", "3d_scanning", "body_scan", "bodyscan"})

CONSENT_MISSING = "CONSENT_MISSING"

CONSENT_ADVISORY = (
    "This design looks like a 3D scan of a person. Confirm that the scanned "
    "subject agreed to sharing it publicly; without recorded consent the "
    "design stays hidden from public search."
)

BLOCKED_EXPLANATION = (
    "Hidden from public search: the design is tagged as a 3D scan but has no "
    "recorded agreement from the scanned subject. Add consent metadata to "
    "make it visible; the design itself was not removed."
)


class GateStatus(enum.Enum):
    NOT_APPLICABLE = "not_applicable"
    EXEMPT = "exempt"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class ConsentMetadata:
    subject_consent: bool
    statement: str | None = None
    attested_by: str | None = None
    attested_at: str | None = None

    def __post_init__(self):
        if self.subject_consent and not (self.attested_by and self.attested_at):
            raise MalformedField("subject_consent=true requires attested_by and attested_at")

    @classmethod
    def from_record(cls, raw: dict) -> "ConsentMetadata":
        if not isinstance(raw, dict) or "subject_consent" not in raw:
            raise MalformedField("consent record needs a subject_consent field")
        if not isinstance(raw["subject_consent"], bool):
            raise MalformedField("subject_consent must be a boolean")
        return cls(
            subject_consent=raw["subject_consent"],
            statement=raw.get("statement"),
            attested_by=raw.get("attested_by"),
            attested_at=raw.get("attested_at"),
        )

    def to_record(self) -> dict:
        return {
            "subject_consent": self.subject_consent,
            "statement": self.statement,
            "attested_by": self.attested_by,
            "attested_at": self.attested_at,
        }


@dataclass(frozen=True)
class GateResult:
    status: GateStatus
    reason: str | None = None
    explanation: str | None = None

    def to_record(self) -> dict:
        return {
            "status": self.status.value,
            "reason": self.reason,
            "explanation": self.explanation,
        }


def requires_consent(doc: "ThingDocument", markers: frozenset[str] = SCAN_MARKER_TAGS) -> bool:
    """True when the document's normalized tags intersect the scan-marker set."""
    return bool(doc.tags & markers)


def evaluate_gate(doc: "ThingDocument", markers: frozenset[str] = SCAN_MARKER_TAGS) -> GateResult:
    """Pure visibility decision for one document."""
    if not requires_consent(doc, markers):
        return GateResult(GateStatus.NOT_APPLICABLE)
    if doc.consent is not None and doc.consent.subject_consent:
        return GateResult(GateStatus.EXEMPT)
    return GateResult(GateStatus.BLOCKED, reason=CONSENT_MISSING, explanation=BLOCKED_EXPLANATION)
