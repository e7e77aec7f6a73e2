"""In-process duplex transport with exact byte/round accounting.

The two parties never touch each other's state directly; every message
goes through a Channel, which charges 4 bytes of length prefix plus the
payload to the sender's counter under the current phase label.  Rounds
count dependency alternations: one `exchange` (both directions in
parallel) or one blocking `send` is one round.  A NetworkModel turns a
ledger into estimated seconds; it is a cost model, not a stopwatch.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

LENGTH_PREFIX = 4


class ClosedChannelError(RuntimeError):
    pass


@dataclass
class PhaseCost:
    bytes0: int = 0
    bytes1: int = 0
    rounds: int = 0


class CostLedger:
    """Per-phase monotone counters of bytes sent by each party and rounds."""

    def __init__(self):
        self.phases: dict[str, PhaseCost] = {}

    def _get(self, label: str) -> PhaseCost:
        pc = self.phases.get(label)
        if pc is None:
            pc = self.phases[label] = PhaseCost()
        return pc

    def charge(self, label: str, party: int, nbytes: int):
        pc = self._get(label)
        if party == 0:
            pc.bytes0 += LENGTH_PREFIX + nbytes
        else:
            pc.bytes1 += LENGTH_PREFIX + nbytes

    def add_round(self, label: str):
        self._get(label).rounds += 1

    def total_bytes(self) -> int:
        return sum(pc.bytes0 + pc.bytes1 for pc in self.phases.values())

    def total_rounds(self) -> int:
        return sum(pc.rounds for pc in self.phases.values())

    def as_dict(self) -> dict:
        return {
            label: {"bytes0": pc.bytes0, "bytes1": pc.bytes1, "rounds": pc.rounds}
            for label, pc in sorted(self.phases.items())
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


@dataclass(frozen=True)
class NetworkModel:
    bandwidth_bps: float  # bits per second
    latency_s: float      # one-way

    def __post_init__(self):
        if self.bandwidth_bps <= 0 or self.latency_s < 0:
            raise ValueError("bandwidth must be > 0 and latency >= 0")


LAN = NetworkModel(bandwidth_bps=3e9, latency_s=0.8e-3)
WAN = NetworkModel(bandwidth_bps=200e6, latency_s=40e-3)


def estimate_time(ledger: CostLedger, model: NetworkModel) -> float:
    """sum over phases of bytes*8/bandwidth plus rounds*latency."""
    total = 0.0
    for pc in ledger.phases.values():
        total += (pc.bytes0 + pc.bytes1) * 8 / model.bandwidth_bps
        total += pc.rounds * model.latency_s
    return total


class Channel:
    """Duplex endpoint pair for one protocol run."""

    def __init__(self, ledger: CostLedger | None = None):
        self.ledger = ledger if ledger is not None else CostLedger()
        self.closed = False

    def close(self):
        self.closed = True

    def _check(self):
        if self.closed:
            raise ClosedChannelError("endpoint closed")

    def exchange(self, label: str, payload0: bytes, payload1: bytes) -> tuple[bytes, bytes]:
        """Both parties send simultaneously; returns (received_by_0, received_by_1)."""
        self._check()
        self.ledger.charge(label, 0, len(payload0))
        self.ledger.charge(label, 1, len(payload1))
        self.ledger.add_round(label)
        return payload1, payload0

    def send(self, label: str, sender: int, payload: bytes) -> bytes:
        """One-way blocking send; the peer's receipt ends the round."""
        self._check()
        self.ledger.charge(label, sender, len(payload))
        self.ledger.add_round(label)
        return payload


# ---------------------------------------------------------------------------
# transcript of revealed values

REVEAL_KINDS = ("masked", "count", "reduction_mask", "output")


@dataclass
class Reveal:
    kind: str
    label: str
    value: object  # int, or tuple of ints


class Transcript:
    """Log of every opened value, tagged with why it was allowed to open.

    Masked Beaver openings are uniform by construction; to keep large runs
    cheap they are folded into a count and a rolling digest unless
    ``record_masked`` is set (audit mode keeps them all).
    """

    def __init__(self, record_masked: bool = False):
        self.record_masked = record_masked
        self.reveals: list[Reveal] = []
        self.masked_opens = 0
        self._digest = hashlib.sha256()

    def log(self, kind: str, label: str, raw_bytes: bytes, value=None):
        if kind not in REVEAL_KINDS:
            raise ValueError(f"unknown reveal kind {kind!r}")
        self._digest.update(kind.encode())
        self._digest.update(raw_bytes)
        if kind == "masked":
            self.masked_opens += 1
            if not self.record_masked:
                return
        self.reveals.append(Reveal(kind, label, value))

    def __len__(self):
        return len(self.reveals) + (0 if self.record_masked else self.masked_opens)

    def digest(self) -> str:
        return self._digest.hexdigest()

    def declared(self) -> list[Reveal]:
        """Reveals that are intentional disclosures, not protocol masks."""
        return [r for r in self.reveals if r.kind != "masked"]


def audit_transcript(transcript: Transcript) -> dict:
    """Classify every reveal; anything outside the declared set is flagged.

    Returns counters per kind plus a list of unclassified entries (always
    empty for a conforming run).
    """
    counts = {k: 0 for k in REVEAL_KINDS}
    unclassified = []
    for r in transcript.reveals:
        if r.kind in counts:
            counts[r.kind] += 1
        else:  # pragma: no cover - Transcript.log already rejects these
            unclassified.append(r)
    counts["masked"] += transcript.masked_opens if not transcript.record_masked else 0
    return {"counts": counts, "unclassified": unclassified}
