"""Lowering of a circuit into the op sequence every party executes.

Linear gates become affine ops over wires.  MULT becomes a scheduled re-share
multiplication.  COMPARE expands into a masked-opening comparison:

* ``k`` shared random bits, each from a random value ``u`` whose square is opened,
* a bounded random high mask,
* public opening of ``2^k + a - b + r`` and its low ``k`` bits,
* a Brent-Kung prefix product giving the borrow of ``c_low - r_low``,
* selection ``max = b + z(a - b)`` with ``z = [a >= b]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .. import circuit as C
from ..field import PrimeField


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class LinPub:
    """Coefficient ``scale * pub[name] + offset`` resolved once ``name`` is opened."""

    name: str
    scale: int = 1
    offset: int = 0


@dataclass(frozen=True)
class OpConst:
    id: int
    value: int

    def deps(self):
        return ()


@dataclass(frozen=True)
class OpInput:
    id: int
    owner: int
    slot: int

    def deps(self):
        return ()


@dataclass(frozen=True)
class OpRandom:
    id: int
    bound: Optional[int] = None

    def deps(self):
        return ()


@dataclass(frozen=True)
class OpAffine:
    id: int
    terms: tuple  # ((coef, wire), ...); coef is int or LinPub
    const: object = 0

    def deps(self):
        return tuple(w for _, w in self.terms)

    def pub_deps(self):
        names = [c.name for c, _ in self.terms if isinstance(c, LinPub)]
        if isinstance(self.const, LinPub):
            names.append(self.const.name)
        return names


@dataclass(frozen=True)
class OpMult:
    id: int
    a: int
    b: int

    def deps(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class OpOpen:
    id: int
    wire: int
    name: str

    def deps(self):
        return (self.wire,)


@dataclass(frozen=True)
class OpDerive:
    id: int
    fn: str
    inputs: tuple
    outputs: tuple
    arg: int = 0

    def deps(self):
        return ()


@dataclass(frozen=True)
class OpOutput:
    id: int
    wire: int
    slot: int

    def deps(self):
        return (self.wire,)


OPENING_OPS = (OpOpen, OpOutput)


@dataclass(frozen=True)
class Plan:
    ops: tuple
    output_count: int
    bit_width: int
    mask_bits: int
    # per op: ids of the ops it waits for (wires and opened public names), and the reverse map
    waits_on: tuple = ()
    dependents: tuple = ()

    def mult_ids(self) -> list:
        return [op.id for op in self.ops if isinstance(op, OpMult)]


def _dependency_graph(ops) -> tuple:
    producer = {}
    for op in ops:
        if isinstance(op, OpOpen):
            producer[op.name] = op.id
        elif isinstance(op, OpDerive):
            for nm in op.outputs:
                producer[nm] = op.id
    waits, rev = [], [[] for _ in ops]
    for op in ops:
        ds = set(op.deps())
        if isinstance(op, OpAffine):
            ds.update(producer[nm] for nm in op.pub_deps())
        elif isinstance(op, OpDerive):
            ds.update(producer[nm] for nm in op.inputs)
        waits.append(tuple(sorted(ds)))
        for d in ds:
            rev[d].append(op.id)
    return tuple(waits), tuple(tuple(r) for r in rev)


def mask_bits_for(p: int, bit_width: int, n: int) -> int:
    """Bits of per-dealer high mask so that ``2^(k+1) + 2^k + n*2^(k+kappa) < p``."""
    kappa = (p.bit_length() - 1) - bit_width - max(1, (n - 1).bit_length()) - 1
    if kappa < 1:
        raise PlanError(f"bit width {bit_width} leaves no masking headroom in a {p.bit_length()}-bit field")
    return kappa


def derive(fn: str, inputs: Sequence[int], arg: int, field: PrimeField) -> list:
    """Public post-processing of opened values."""
    p = field.p
    if fn == "inv_sqrt":
        (y,) = inputs
        s = field.sqrt(y)
        if not s:
            raise PlanError("opened square is zero or a non-residue")
        return [pow(s, p - 2, p)]
    if fn == "low_bits":
        (c,) = inputs
        low = c % (1 << arg)
        return [(low >> i) & 1 for i in range(arg)] + [low]
    raise PlanError(f"unknown derive function {fn}")


class _Lowering:
    def __init__(self, field: PrimeField, bit_width: int, n: int):
        self.field = field
        self.k = bit_width
        self.n = n
        self.kappa = mask_bits_for(field.p, bit_width, n)
        self.ops = []
        self._tag = 0

    def emit(self, cls, *args) -> int:
        op = cls(len(self.ops), *args)
        self.ops.append(op)
        return op.id

    def affine(self, terms, const=0) -> int:
        p = self.field.p
        norm = tuple((c if isinstance(c, LinPub) else c % p, w) for c, w in terms)
        return self.emit(OpAffine, norm, const if isinstance(const, LinPub) else const % p)

    def mult(self, a, b) -> int:
        return self.emit(OpMult, a, b)

    def prefix_products(self, xs: list) -> list:
        """Brent-Kung: out[i] = xs[0] * ... * xs[i], depth about 2 log2 len."""
        if len(xs) == 1:
            return list(xs)
        pairs = [self.mult(xs[2 * i], xs[2 * i + 1]) for i in range(len(xs) // 2)]
        sub = self.prefix_products(pairs)
        out = [xs[0]]
        for i in range(1, len(xs)):
            if i % 2 == 1:
                out.append(sub[i // 2])
            else:
                out.append(self.mult(sub[i // 2 - 1], xs[i]))
        return out

    def compare(self, a: int, b: int, id_a, id_b) -> tuple:
        p, k = self.field.p, self.k
        tag = f"cmp{self._tag}"
        self._tag += 1
        inv2 = pow(2, p - 2, p)
        bits = []
        for i in range(k):
            u = self.emit(OpRandom, None)
            sq = self.mult(u, u)
            sq_name, root_name = f"{tag}.sq{i}", f"{tag}.ir{i}"
            self.emit(OpOpen, sq, sq_name)
            self.emit(OpDerive, "inv_sqrt", (sq_name,), (root_name,), 0)
            bits.append(self.affine([(LinPub(root_name, inv2, 0), u)], inv2))
        r_low = self.affine([(1 << i, bits[i]) for i in range(k)])
        r_high = self.emit(OpRandom, 1 << self.kappa)
        d = self.affine([(1, a), (-1, b)], 1 << k)
        masked = self.affine([(1, d), (1, r_low), (1 << k, r_high)])
        c_name = f"{tag}.c"
        self.emit(OpOpen, masked, c_name)
        cbit = [f"{tag}.c{i}" for i in range(k)]
        clow = f"{tag}.clow"
        self.emit(OpDerive, "low_bits", (c_name,), tuple(cbit) + (clow,), k)
        # q_i = 1 - (c_i xor r_i); c_i is public so this is affine in the shared bit.
        q = [self.affine([(LinPub(cbit[i], 2, -1), bits[i])], LinPub(cbit[i], -1, 1)) for i in range(k)]
        pref = self.prefix_products(q[::-1])
        P = {k - 1 - m: w for m, w in enumerate(pref)}  # P[i] = prod_{j >= i} q_j
        # borrow u = sum_i (1 - c_i)(P[i+1] - P[i]), with P[k] = 1
        terms = []
        for i in range(k):
            terms.append((LinPub(cbit[i], 1, -1), P[i]))
            if i + 1 < k:
                terms.append((LinPub(cbit[i], -1, 1), P[i + 1]))
        borrow = self.affine(terms, LinPub(cbit[k - 1], -1, 1))
        inv2k = pow(1 << k, p - 2, p)
        z = self.affine([(inv2k, d), (inv2k, r_low), (-1, borrow)], LinPub(clow, -inv2k, 0))
        diff = self.affine([(1, a), (-1, b)])
        mx = self.affine([(1, b), (1, self.mult(z, diff))])
        if isinstance(id_a, C.Const) and isinstance(id_b, C.Const):
            mid = self.affine([(id_a.value - id_b.value, z)], id_b.value)
        else:
            wa = self.affine([], id_a.value) if isinstance(id_a, C.Const) else id_a
            wb = self.affine([], id_b.value) if isinstance(id_b, C.Const) else id_b
            did = self.affine([(1, wa), (-1, wb)])
            mid = self.affine([(1, wb), (1, self.mult(z, did))])
        return mx, mid


def build_plan(c: C.Circuit, public_inputs: Sequence[int], field: PrimeField,
               bit_width: int, n: int) -> Plan:
    if len(public_inputs) != c.public_input_count:
        raise PlanError(f"circuit expects {c.public_input_count} public inputs, got {len(public_inputs)}")
    lo = _Lowering(field, bit_width, n)
    wire = {}
    for g in c.gates:
        if isinstance(g, C.InputSecret):
            wire[C.Wire(g.id)] = lo.emit(OpInput, g.party, g.slot)
        elif isinstance(g, C.InputPublic):
            wire[C.Wire(g.id)] = lo.emit(OpConst, public_inputs[g.slot] % field.p)
        elif isinstance(g, C.Add):
            wire[C.Wire(g.id)] = lo.affine([(1, wire[g.a]), (1, wire[g.b])])
        elif isinstance(g, C.MultByConst):
            wire[C.Wire(g.id)] = lo.affine([(public_inputs[g.public_ref], wire[g.a])])
        elif isinstance(g, C.Mult):
            wire[C.Wire(g.id)] = lo.mult(wire[g.a], wire[g.b])
        elif isinstance(g, C.Compare):
            ida = g.id_a if isinstance(g.id_a, C.Const) else wire[g.id_a]
            idb = g.id_b if isinstance(g.id_b, C.Const) else wire[g.id_b]
            mx, mid = lo.compare(wire[g.a], wire[g.b], ida, idb)
            wire[C.Wire(g.id, 0)], wire[C.Wire(g.id, 1)] = mx, mid
        elif isinstance(g, C.Output):
            lo.emit(OpOutput, wire[g.src], g.output_slot)
    waits, rev = _dependency_graph(lo.ops)
    return Plan(tuple(lo.ops), c.output_count, bit_width, lo.kappa, waits, rev)
