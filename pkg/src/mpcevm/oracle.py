"""Cleartext reference answers for the bundled circuits.

These deliberately avoid the circuit and engine code: each one is the obvious
computation written directly over Python integers.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence


def voting(weights: Sequence[int], ballots: Sequence[Sequence[int]]) -> list:
    """Winner id of a weighted tally; on a tie the lower proposal id wins."""
    proposals = len(ballots[0]) if ballots else 2
    tally = [sum(w * b[j] for w, b in zip(weights, ballots)) for j in range(proposals)]
    best = 0
    for j in range(1, proposals):
        if tally[j] > tally[best]:
            best = j
    return [best]


def auction(counts: Sequence[int], bids: Sequence[int]) -> list:
    """[highest bid, winner index]; bids of uncounted bidders are zero.

    Ties follow the bracket: neighbours meet first, winners then meet in arrival
    order, and in every match the earlier entrant keeps a tie.  For ten bidders
    the last match is (winner of 4..7) against (winner of 8,9 vs winner of 0..3).
    """
    entrants = deque((b * c, i) for i, (b, c) in enumerate(zip(bids, counts)))
    rounds = deque()
    while len(entrants) >= 2:
        a, b = entrants.popleft(), entrants.popleft()
        rounds.append(a if a[0] >= b[0] else b)
    rounds.extend(entrants)
    while len(rounds) > 1:
        a, b = rounds.popleft(), rounds.popleft()
        rounds.append(a if a[0] >= b[0] else b)
    top, idx = rounds[0]
    return [top, idx]


def mult(a: int, b: int) -> list:
    return [a * b]


def compare(a: int, b: int) -> list:
    return [a, 0] if a >= b else [b, 1]


def probe(c: int, x: Sequence[int]) -> list:
    left, right = x[0] * x[1], x[2] + c * x[3]
    return [left, 0] if left >= right else [right, 1]


def expected(circuit_kind: str, params: Sequence[int], inputs: Sequence[Sequence[int]]):
    """Oracle output for a circuit built by ``circuit_kind``, or None if unknown."""
    if circuit_kind == "voting":
        return voting(params, inputs)
    if circuit_kind == "auction":
        return auction(params, [row[0] if row else 0 for row in inputs])
    if circuit_kind == "mult":
        return mult(inputs[0][0], inputs[1][0])
    if circuit_kind == "compare":
        return compare(inputs[0][0], inputs[1][0])
    if circuit_kind == "probe":
        return probe(params[0], [inputs[i][0] for i in range(4)])
    return None
