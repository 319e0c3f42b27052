import pytest

from printmod.consent import (
    CONSENT_MISSING,
    ConsentMetadata,
    GateStatus,
    evaluate_gate,
    requires_consent,
)
from printmod.corpus import document_from_raw
from printmod.errors import MalformedField


def _doc(**kwargs):
    raw = {"id": "t1", "description": "a printed thing"}
    raw.update(kwargs)
    return document_from_raw(raw)


def test_scan_tag_requires_consent():
    assert requires_consent(_doc(tags=["3d_scan"]))


def test_plain_tags_do_not():
    assert not requires_consent(_doc(tags=["vase"]))
    assert not requires_consent(_doc())


def test_marker_matches_after_normalization():
    # Raw tag "3D_Scanning" lowercases into the marker set on ingest.
    assert requires_consent(_doc(tags=["3D_Scanning"]))


def test_all_marker_variants():
    for tag in ["3d_scan", "3d_scanning", "body_scan", "bodyscan"]:
        assert requires_consent(_doc(tags=[tag])), tag


def test_gate_not_applicable():
    result = evaluate_gate(_doc(tags=["vase"]))
    assert result.status is GateStatus.NOT_APPLICABLE
    assert result.reason is None


def test_gate_exempt_with_consent():
    consent = {
        "subject_consent": True,
        "statement": "the subject agreed to public sharing",
        "attested_by": "creator-9",
        "attested_at": "2024-02-02T00:00:00+00:00",
    }
    result = evaluate_gate(_doc(tags=["3d_scan"], consent=consent))
    assert result.status is GateStatus.EXEMPT


def test_gate_blocked_without_consent():
    result = evaluate_gate(_doc(tags=["3d_scan"]))
    assert result.status is GateStatus.BLOCKED
    assert result.reason == CONSENT_MISSING
    assert result.explanation


def test_gate_blocked_when_consent_denied():
    result = evaluate_gate(_doc(tags=["body_scan"], consent={"subject_consent": False}))
    assert result.status is GateStatus.BLOCKED
    assert result.reason == CONSENT_MISSING


def test_blocked_always_explains():
    for tags in (["3d_scan"], ["bodyscan", "art"], ["3D_Scanning"]):
        result = evaluate_gate(_doc(tags=tags))
        assert result.status is GateStatus.BLOCKED
        assert isinstance(result.explanation, str) and result.explanation.strip()


def test_gate_record_shape():
    record = evaluate_gate(_doc(tags=["3d_scan"])).to_record()
    assert record["status"] == "blocked"
    assert record["reason"] == CONSENT_MISSING
    assert record["explanation"]


def test_consent_attestation_required():
    with pytest.raises(MalformedField):
        ConsentMetadata(subject_consent=True)
    with pytest.raises(MalformedField):
        ConsentMetadata(subject_consent=True, attested_by="creator-9")
    # Consent = false needs no attestation.
    ConsentMetadata(subject_consent=False)


def test_consent_record_validation():
    with pytest.raises(MalformedField):
        ConsentMetadata.from_record({})
    with pytest.raises(MalformedField):
        ConsentMetadata.from_record({"subject_consent": "yes"})
    meta = ConsentMetadata.from_record(
        {"subject_consent": True, "attested_by": "c1", "attested_at": "2024-01-01T00:00:00+00:00"}
    )
    assert ConsentMetadata.from_record(meta.to_record()) == meta
