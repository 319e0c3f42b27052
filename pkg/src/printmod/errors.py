"""Domain error types shared across the pipeline.

Every error carries a machine-readable ``code`` so API responses and audit
payloads can reference the failure without parsing prose.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all domain errors."""

    code = "pipeline_error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


# -- corpus ------------------------------------------------------------------

class MissingId(PipelineError):
    code = "missing_id"


class EmptyDocument(PipelineError):
    code = "empty_document"


class MalformedField(PipelineError):
    code = "malformed_field"


class InsufficientPositives(PipelineError):
    code = "insufficient_positives"


class InsufficientNegatives(PipelineError):
    code = "insufficient_negatives"


class NotFound(PipelineError):
    code = "not_found"


# -- mesh --------------------------------------------------------------------

class MalformedStl(PipelineError):
    code = "malformed_stl"


class EmptyMesh(PipelineError):
    code = "empty_mesh"


# -- features ----------------------------------------------------------------

class RegionOutOfBounds(PipelineError):
    code = "region_out_of_bounds"


# -- classifier --------------------------------------------------------------

class EmptySeedSet(PipelineError):
    code = "empty_seed_set"


class HashParamMismatch(PipelineError):
    code = "hash_param_mismatch"


class AssetTooSmall(PipelineError):
    code = "asset_too_small"


class NonpositiveWeight(PipelineError):
    code = "nonpositive_weight"


class UnknownCategory(PipelineError):
    code = "unknown_category"


# -- moderation --------------------------------------------------------------

class DuplicateTaskForThing(PipelineError):
    code = "duplicate_task_for_thing"


class QueueEmpty(PipelineError):
    code = "queue_empty"


class LeaseViolation(PipelineError):
    code = "lease_violation"


class InvalidDecision(PipelineError):
    code = "invalid_decision"


class StaleTask(PipelineError):
    code = "stale_task"


class UnknownModerator(PipelineError):
    code = "unknown_moderator"


# -- service -----------------------------------------------------------------

class BadThreshold(PipelineError):
    code = "bad_threshold"


class UnknownGroup(PipelineError):
    code = "unknown_group"


# -- audit -------------------------------------------------------------------

class AuditChainBroken(PipelineError):
    code = "audit_chain_broken"
