"""Messages exchanged by committee members during a session."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass


class Kind(str, enum.Enum):
    SHARE = "SHARE_DELIVERY"
    COMMIT = "COMMIT"
    DISPUTE = "DISPUTE"
    DISPUTE_OPENING = "DISPUTE_OPENING"
    READY = "READY"
    GATE_DONE = "GATE_DONE"
    OPEN_SHARE = "OPEN_SHARE"
    ACCUSE = "ACCUSE"
    RESULT_ATTEST = "RESULT_ATTEST"


@dataclass(frozen=True)
class MpcMessage:
    session: str
    invocation: int
    kind: Kind
    sender: int
    payload: tuple = ()

    @property
    def p2p(self) -> bool:
        return self.kind is Kind.SHARE

    def to_json(self) -> dict:
        return {"session": self.session, "invocation": self.invocation, "kind": self.kind.value,
                "sender": self.sender, "payload": _jsonable(self.payload)}


def _jsonable(x):
    if isinstance(x, (tuple, list)):
        return [_jsonable(v) for v in x]
    return x


def result_hash(result) -> str:
    return hashlib.sha256(json.dumps(list(result), separators=(",", ":")).encode()).hexdigest()


def cheater_result(output_count: int, cheater: int) -> tuple:
    """All-zero dummy outputs followed by flag 1 and the cheater's committee index."""
    return (0,) * output_count + (1, cheater)


def success_result(outputs) -> tuple:
    return tuple(outputs) + (0, 0)
