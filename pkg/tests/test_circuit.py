import pytest
from hypothesis import given, strategies as st

from mpcevm import oracle
from mpcevm import circuit as C

bids = st.lists(st.integers(0, 2**32 - 1), min_size=10, max_size=10)
flags = st.lists(st.integers(0, 1), min_size=10, max_size=10)


def test_registry_dense_ids_and_unknown():
    reg = C.CircuitRegistry()
    assert reg.register(C.build_mult_circuit()) == 0
    assert reg.register(C.build_compare_circuit()) == 1
    assert reg.get(1).cid == 1 and 1 in reg and 2 not in reg
    with pytest.raises(C.UnknownCircuit):
        reg.get(2)


def test_forward_reference_rejected():
    gates = (C.InputSecret(0, 0, 0), C.Add(1, C.Wire(0), C.Wire(2)), C.Output(2, C.Wire(1), 0))
    with pytest.raises(C.InvalidCircuit):
        C.validate(C.Circuit("bad", gates, 1, (1,), 0, 1))


def test_duplicate_output_slot_rejected():
    b = C.CircuitBuilder(1)
    x = b.input_secret(0)
    b.output(x, 0)
    b.output(x, 0)
    with pytest.raises(C.InvalidCircuit):
        b.build("dup")


def test_builder_gate_counts():
    v = C.build_voting_circuit(10)
    assert v.count(C.InputSecret) == 20 and v.count(C.Compare) == 1 and v.count(C.Mult) == 0
    a = C.build_auction_circuit(10)
    assert a.count(C.Compare) == 9 and a.output_count == 2
    assert C.build_mult_circuit().count(C.Mult) == 1
    p = C.build_probe_circuit(4)
    assert {type(g) for g in p.gates} == {C.InputSecret, C.InputPublic, C.Add, C.MultByConst,
                                          C.Mult, C.Compare, C.Output} - {C.InputPublic}


def test_auction_bracket_pairing():
    a = C.build_auction_circuit(10)
    cmps = [g for g in a.gates if isinstance(g, C.Compare)]
    leaves, internal = cmps[:5], cmps[5:]
    leaf_ids = [g.id for g in leaves]
    assert [(g.a.gate, g.b.gate) for g in internal[:2]] == [tuple(leaf_ids[0:2]), tuple(leaf_ids[2:4])]
    assert (internal[2].a.gate, internal[2].b.gate) == (leaf_ids[4], internal[0].id)
    assert (internal[3].a.gate, internal[3].b.gate) == (internal[1].id, internal[2].id)


def test_auction_examples():
    a = C.build_auction_circuit(10)
    ones = [1] * 10
    assert C.evaluate_plain(a, [[b] for b in [5, 9, 3, 7, 1, 8, 2, 6, 4, 0]], ones) == [9, 1]
    top, _ = C.evaluate_plain(a, [[b] for b in [5, 9, 3, 7, 1, 8, 2, 6, 4, 0]], [0] * 10)
    assert top == 0
    tie = [1, 2, 3, 7, 1, 2, 3, 7, 1, 2]
    top, idx = C.evaluate_plain(a, [[b] for b in tie], ones)
    assert top == 7 and idx in (3, 7) and [top, idx] == oracle.auction(ones, tie)


@given(bids, flags)
def test_auction_matches_oracle(bs, counts):
    a = C.build_auction_circuit(10)
    assert C.evaluate_plain(a, [[b] for b in bs], counts) == oracle.auction(counts, bs)


@given(st.lists(st.integers(0, 1000), min_size=10, max_size=10),
       st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=10, max_size=10))
def test_voting_matches_oracle(weights, ballots):
    v = C.build_voting_circuit(10)
    assert C.evaluate_plain(v, [list(b) for b in ballots], weights) == oracle.voting(weights, ballots)


def test_topo_ready_set_after_leaves():
    a = C.build_auction_circuit(10)
    cmps = [g.id for g in a.gates if isinstance(g, C.Compare)]
    done = {g.id for g in a.gates if g.id < cmps[0] or g.id in cmps[:5]}
    assert C.topo_ready_set(a, done) == set(cmps[5:7])


def test_topo_ready_set_initial_is_inputs():
    p = C.build_probe_circuit(4)
    ready = C.topo_ready_set(p, set())
    assert all(isinstance(p.gates[i], (C.InputSecret, C.InputPublic)) for i in ready)
    assert len(ready) == 4
