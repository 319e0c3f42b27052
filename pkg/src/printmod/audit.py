"""Append-only audit log with a verifiable hash chain.

Every state-changing action in the pipeline is recorded here.  Records are
length-prefixed on disk; each hash covers the previous hash plus the
canonical record bytes, so the whole history can be verified end to end and
replayed to rebuild derived state.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import AuditChainBroken

GENESIS_HASH = "0" * 64


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def chain_hash(prev_hash: str, seq: int, kind: str, payload: dict) -> str:
    body = _canonical({"seq": seq, "kind": kind, "payload": payload})
    return hashlib.sha256(prev_hash.encode("ascii") + body).hexdigest()


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    kind: str
    payload: dict
    prev_hash: str
    hash: str

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }

    @classmethod
    def from_record(cls, record: dict) -> "AuditEvent":
        return cls(
            seq=record["seq"],
            kind=record["kind"],
            payload=record["payload"],
            prev_hash=record["prev_hash"],
            hash=record["hash"],
        )


class AuditLog:
    """Single-writer event log; in-memory with optional on-disk append."""

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path else None
        self._events: list[AuditEvent] = []
        self._last_hash = GENESIS_HASH
        if self.path and self.path.exists():
            for event in read_log(self.path):
                self._events.append(event)
                self._last_hash = event.hash
            self.verify()

    def __len__(self) -> int:
        return len(self._events)

    @property
    def last_hash(self) -> str:
        return self._last_hash

    def append(self, kind: str, payload: dict) -> AuditEvent:
        seq = len(self._events)
        digest = chain_hash(self._last_hash, seq, kind, payload)
        event = AuditEvent(seq=seq, kind=kind, payload=payload, prev_hash=self._last_hash, hash=digest)
        self._events.append(event)
        self._last_hash = digest
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            body = _canonical(event.to_record())
            with self.path.open("ab") as fh:
                fh.write(struct.pack(">I", len(body)))
                fh.write(body)
        return event

    def events(self) -> list[AuditEvent]:
        return list(self._events)

    def verify(self) -> None:
        """Raise AuditChainBroken unless seqs are gapless and hashes chain."""
        prev = GENESIS_HASH
        for i, event in enumerate(self._events):
            if event.seq != i:
                raise AuditChainBroken(f"seq gap at position {i}: got {event.seq}")
            if event.prev_hash != prev:
                raise AuditChainBroken(f"prev_hash mismatch at seq {i}")
            expected = chain_hash(prev, event.seq, event.kind, event.payload)
            if event.hash != expected:
                raise AuditChainBroken(f"hash mismatch at seq {i}")
            prev = event.hash

    def export_jsonl(self, out_path: Path) -> int:
        """Write the log as JSON-lines for inspection; returns record count."""
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", encoding="utf-8") as fh:
            for event in self._events:
                fh.write(json.dumps(event.to_record(), sort_keys=True) + "\n")
        return len(self._events)


def read_log(path: Path) -> Iterator[AuditEvent]:
    """Stream length-prefixed records from an audit log file."""
    path = Path(path)
    with path.open("rb") as fh:
        while True:
            prefix = fh.read(4)
            if not prefix:
                return
            if len(prefix) != 4:
                raise AuditChainBroken("truncated length prefix")
            (length,) = struct.unpack(">I", prefix)
            body = fh.read(length)
            if len(body) != length:
                raise AuditChainBroken("truncated record body")
            yield AuditEvent.from_record(json.loads(body.decode("utf-8")))
