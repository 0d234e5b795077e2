"""Arithmetic circuits over secret-shared wires.

Gates are numbered in topological order; a wire is ``(gate_id, port)``.  Only
COMPARE has two ports: port 0 carries the larger value and port 1 its id.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field as dc_field, replace
from typing import NamedTuple, Optional, Sequence, Union

from .field import DEFAULT_PRIME


class InvalidCircuit(ValueError):
    pass


class UnknownCircuit(LookupError):
    pass


class Wire(NamedTuple):
    gate: int
    port: int = 0


@dataclass(frozen=True)
class Const:
    """A public constant used where COMPARE expects an id operand."""

    value: int


Operand = Union[Wire, Const]


@dataclass(frozen=True)
class InputSecret:
    id: int
    party: int
    slot: int

    def wires(self):
        return ()


@dataclass(frozen=True)
class InputPublic:
    id: int
    slot: int

    def wires(self):
        return ()


@dataclass(frozen=True)
class Add:
    id: int
    a: Wire
    b: Wire

    def wires(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class MultByConst:
    id: int
    a: Wire
    public_ref: int

    def wires(self):
        return (self.a,)


@dataclass(frozen=True)
class Mult:
    id: int
    a: Wire
    b: Wire

    def wires(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Compare:
    id: int
    a: Wire
    id_a: Operand
    b: Wire
    id_b: Operand

    def wires(self):
        return tuple(w for w in (self.a, self.id_a, self.b, self.id_b) if isinstance(w, Wire))


@dataclass(frozen=True)
class Output:
    id: int
    src: Wire
    output_slot: int

    def wires(self):
        return (self.src,)


Gate = Union[InputSecret, InputPublic, Add, MultByConst, Mult, Compare, Output]


def n_ports(gate) -> int:
    if isinstance(gate, Output):
        return 0
    return 2 if isinstance(gate, Compare) else 1


@dataclass(frozen=True)
class Circuit:
    name: str
    gates: tuple
    n_parties: int
    secret_input_shape: tuple
    public_input_count: int
    output_count: int
    cid: Optional[int] = None

    def count(self, kind) -> int:
        return sum(1 for g in self.gates if isinstance(g, kind))

    def outputs(self) -> list:
        return sorted((g for g in self.gates if isinstance(g, Output)), key=lambda g: g.output_slot)


def validate(c: Circuit) -> None:
    if len(c.secret_input_shape) != c.n_parties:
        raise InvalidCircuit("secret_input_shape must list one slot count per party")
    slots = set()
    out_slots = set()
    for pos, g in enumerate(c.gates):
        if g.id != pos:
            raise InvalidCircuit(f"gate at position {pos} has id {g.id}")
        for w in g.wires():
            if not 0 <= w.gate < g.id:
                raise InvalidCircuit(f"gate {g.id} references gate {w.gate} out of order")
            if not 0 <= w.port < n_ports(c.gates[w.gate]):
                raise InvalidCircuit(f"gate {g.id} references missing port {w}")
        if isinstance(g, InputSecret):
            if not 0 <= g.party < c.n_parties or not 0 <= g.slot < c.secret_input_shape[g.party]:
                raise InvalidCircuit(f"input gate {g.id} outside declared shape")
            if (g.party, g.slot) in slots:
                raise InvalidCircuit(f"secret input {(g.party, g.slot)} defined twice")
            slots.add((g.party, g.slot))
        elif isinstance(g, InputPublic) and not 0 <= g.slot < c.public_input_count:
            raise InvalidCircuit(f"public input gate {g.id} slot out of range")
        elif isinstance(g, MultByConst) and not 0 <= g.public_ref < c.public_input_count:
            raise InvalidCircuit(f"gate {g.id} public operand out of range")
        elif isinstance(g, Output):
            if g.output_slot in out_slots or not 0 <= g.output_slot < c.output_count:
                raise InvalidCircuit(f"bad output slot {g.output_slot}")
            out_slots.add(g.output_slot)
    if len(out_slots) != c.output_count:
        raise InvalidCircuit(f"expected {c.output_count} outputs, found {len(out_slots)}")


class CircuitBuilder:
    def __init__(self, n_parties: int, public_input_count: int = 0):
        self.n_parties = n_parties
        self.public_input_count = public_input_count
        self.shape = [0] * n_parties
        self.gates = []
        self._outputs = 0

    def _push(self, cls, *args):
        g = cls(len(self.gates), *args)
        self.gates.append(g)
        return g

    def input_secret(self, party: int, slot: Optional[int] = None) -> Wire:
        if slot is None:
            slot = self.shape[party]
        self.shape[party] = max(self.shape[party], slot + 1)
        return Wire(self._push(InputSecret, party, slot).id)

    def input_public(self, slot: int) -> Wire:
        return Wire(self._push(InputPublic, slot).id)

    def add(self, a: Wire, b: Wire) -> Wire:
        return Wire(self._push(Add, a, b).id)

    def mult_by_const(self, a: Wire, public_ref: int) -> Wire:
        return Wire(self._push(MultByConst, a, public_ref).id)

    def mult(self, a: Wire, b: Wire) -> Wire:
        return Wire(self._push(Mult, a, b).id)

    def compare(self, a: Wire, id_a, b: Wire, id_b) -> tuple:
        id_a = Const(id_a) if isinstance(id_a, int) else id_a
        id_b = Const(id_b) if isinstance(id_b, int) else id_b
        g = self._push(Compare, a, id_a, b, id_b)
        return Wire(g.id, 0), Wire(g.id, 1)

    def output(self, src: Wire, slot: Optional[int] = None) -> None:
        if slot is None:
            slot = self._outputs
        self._push(Output, src, slot)
        self._outputs += 1

    def build(self, name: str) -> Circuit:
        c = Circuit(name, tuple(self.gates), self.n_parties, tuple(self.shape),
                    self.public_input_count, self._outputs)
        validate(c)
        return c


class CircuitRegistry:
    """Append-only map from dense ids to immutable circuits."""

    def __init__(self):
        self._circuits = []

    def register(self, c: Circuit) -> int:
        validate(c)
        cid = len(self._circuits)
        self._circuits.append(replace(c, cid=cid))
        return cid

    def get(self, cid: int) -> Circuit:
        if not isinstance(cid, int) or not 0 <= cid < len(self._circuits):
            raise UnknownCircuit(cid)
        return self._circuits[cid]

    def __contains__(self, cid):
        return isinstance(cid, int) and 0 <= cid < len(self._circuits)

    def __len__(self):
        return len(self._circuits)


def build_voting_circuit(n: int, proposals: int = 2) -> Circuit:
    """Weighted tally of 0/1 ballots ``x[i][j]`` with public weights ``w[i]``; outputs the winner id."""
    if n < 1 or proposals < 2:
        raise InvalidCircuit("need at least one voter and two proposals")
    b = CircuitBuilder(n, public_input_count=n)
    x = [[b.input_secret(i, j) for j in range(proposals)] for i in range(n)]
    tallies = [b.mult_by_const(x[0][j], 0) for j in range(proposals)]
    for i in range(1, n):
        for j in range(proposals):
            tallies[j] = b.add(tallies[j], b.mult_by_const(x[i][j], i))
    best, best_id = b.compare(tallies[0], 0, tallies[1], 1)
    for j in range(2, proposals):
        best, best_id = b.compare(best, best_id, tallies[j], j)
    b.output(best_id)
    return b.build(f"voting_{n}x{proposals}")


def build_auction_circuit(n: int = 10) -> Circuit:
    """First-price auction: pairwise leaf comparisons, then a FIFO tournament.

    For ``n = 10`` the pairing is:
    leaves (0,1)..(8,9), then (L0,L1), (L2,L3), (L4,C5), (C6,C7).
    """
    if n < 2:
        raise InvalidCircuit("need at least two bidders")
    b = CircuitBuilder(n, public_input_count=n)
    xs = [b.input_secret(i, 0) for i in range(n)]
    bids = [b.mult_by_const(xs[i], i) for i in range(n)]
    pending = deque()
    for i in range(0, n - 1, 2):
        pending.append(b.compare(bids[i], i, bids[i + 1], i + 1))
    if n % 2:
        pending.append((bids[n - 1], Const(n - 1)))
    while len(pending) > 1:
        (va, ia), (vb, ib) = pending.popleft(), pending.popleft()
        pending.append(b.compare(va, ia, vb, ib))
    max_bid, winner = pending[0]
    if isinstance(winner, Const):  # n == 1 cannot happen; keeps types honest
        raise InvalidCircuit("degenerate tournament")
    b.output(max_bid, 0)
    b.output(winner, 1)
    return b.build(f"auction_{n}")


def build_mult_circuit() -> Circuit:
    """Two parties, one secret each, output their product."""
    b = CircuitBuilder(2)
    b.output(b.mult(b.input_secret(0, 0), b.input_secret(1, 0)))
    return b.build("mult_2")


def build_compare_circuit() -> Circuit:
    """Two parties, one secret each; outputs the larger value and its owner."""
    b = CircuitBuilder(2)
    mx, mid = b.compare(b.input_secret(0, 0), 0, b.input_secret(1, 0), 1)
    b.output(mx, 0)
    b.output(mid, 1)
    return b.build("compare_2")


def build_probe_circuit(n_parties: int = 4) -> Circuit:
    """Small circuit touching every gate kind: ``max(x0*x1, x2 + c*x3)`` and its side.

    Party ``i`` owns ``x_i`` (parties beyond 4 contribute nothing); public input 0 is ``c``.
    """
    if n_parties < 4:
        raise InvalidCircuit("probe circuit needs four input parties")
    b = CircuitBuilder(n_parties, public_input_count=1)
    x = [b.input_secret(i, 0) for i in range(4)]
    left = b.mult(x[0], x[1])
    right = b.add(x[2], b.mult_by_const(x[3], 0))
    mx, side = b.compare(left, 0, right, 1)
    b.output(mx, 0)
    b.output(side, 1)
    return b.build(f"probe_{n_parties}")


BUILDERS = {
    "voting": build_voting_circuit,
    "auction": build_auction_circuit,
    "mult": lambda: build_mult_circuit(),
    "compare": lambda: build_compare_circuit(),
    "probe": build_probe_circuit,
}


def topo_ready_set(c: Circuit, completed) -> set:
    completed = set(completed)
    return {g.id for g in c.gates
            if g.id not in completed and all(w.gate in completed for w in g.wires())}


def evaluate_plain(c: Circuit, secret_inputs: Sequence[Sequence[int]],
                   public_inputs: Sequence[int], p: int = DEFAULT_PRIME) -> list:
    """Reference evaluation on cleartext values; COMPARE keeps the first operand on ties."""
    vals = {}
    outputs = [None] * c.output_count

    def operand(o):
        return o.value % p if isinstance(o, Const) else vals[o]

    for g in c.gates:
        if isinstance(g, InputSecret):
            vals[Wire(g.id)] = secret_inputs[g.party][g.slot] % p
        elif isinstance(g, InputPublic):
            vals[Wire(g.id)] = public_inputs[g.slot] % p
        elif isinstance(g, Add):
            vals[Wire(g.id)] = (vals[g.a] + vals[g.b]) % p
        elif isinstance(g, MultByConst):
            vals[Wire(g.id)] = vals[g.a] * public_inputs[g.public_ref] % p
        elif isinstance(g, Mult):
            vals[Wire(g.id)] = vals[g.a] * vals[g.b] % p
        elif isinstance(g, Compare):
            a, b = vals[g.a], vals[g.b]
            first = a >= b
            vals[Wire(g.id, 0)] = a if first else b
            vals[Wire(g.id, 1)] = operand(g.id_a) if first else operand(g.id_b)
        elif isinstance(g, Output):
            outputs[g.output_slot] = vals[g.src]
    return outputs
