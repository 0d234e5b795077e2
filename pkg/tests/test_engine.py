import pytest
from hypothesis import given, settings, strategies as st

from mpcevm import circuit as C
from mpcevm import oracle
from mpcevm.engine.local import run_offchain
from mpcevm.engine.messages import cheater_result, success_result
from mpcevm.engine.party import FaultBehavior, FaultSpec, ShapeMismatch, make_session_config
from mpcevm.engine.plan import PlanError, build_plan, derive, mask_bits_for
from mpcevm.field import DEFAULT_PRIME, PrimeField

F = PrimeField()


def test_mult_honest():
    run = run_offchain(C.build_mult_circuit(), [], [[6], [7]], n=4, t=1, seed=1)
    assert run.result == success_result([42])


def test_compare_example():
    run = run_offchain(C.build_compare_circuit(), [], [[5], [9]], n=4, t=1, seed=2)
    assert run.result == success_result([9, 1])


@settings(max_examples=12)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1), st.integers(0, 1000))
def test_compare_matches_oracle(a, b, seed):
    run = run_offchain(C.build_compare_circuit(), [], [[a], [b]], n=4, t=1, seed=seed)
    assert list(run.result[:-2]) == oracle.compare(a, b)


def test_compare_tie_keeps_first():
    run = run_offchain(C.build_compare_circuit(), [], [[17], [17]], n=4, t=1, seed=3)
    assert run.result == success_result([17, 0])


def test_probe_honest_matches_oracle():
    run = run_offchain(C.build_probe_circuit(4), [4], [[3], [5], [7], [2]], n=4, t=1, seed=4)
    assert list(run.result[:-2]) == oracle.probe(4, [3, 5, 7, 2])


@pytest.mark.parametrize("behavior,activation", [
    ("INCONSISTENT_DEALING", "input"),
    ("INCONSISTENT_DEALING", "reshare"),
    ("CORRUPT_OPENING", "open"),
])
def test_detected_faults_name_the_cheater(behavior, activation):
    fault = FaultSpec(2, FaultBehavior(behavior), activation)
    run = run_offchain(C.build_probe_circuit(4), [4], [[3], [5], [7], [2]], n=4, t=1, seed=6, faults=[fault])
    assert run.result == cheater_result(2, 2)


@pytest.mark.parametrize("behavior,activation", [
    ("FORGE_ATTESTATION", "attest"),
    ("SILENT", "start"),
    ("SILENT", "attest"),
])
def test_tolerated_faults_keep_the_result(behavior, activation):
    fault = FaultSpec(3, FaultBehavior(behavior), activation)
    run = run_offchain(C.build_probe_circuit(4), [4], [[3], [5], [7], [2]], n=4, t=1, seed=7, faults=[fault])
    # a forged or missing attestation never reaches t+1 matching votes; the honest result does
    assert run.result is not None
    if run.result[-2] == 1:
        assert run.result[-1] == 3
    else:
        assert list(run.result[:-2]) == oracle.probe(4, [3, 5, 7, 2])


def test_fault_activation_validated():
    with pytest.raises(ValueError):
        FaultSpec(0, FaultBehavior.FORGE_ATTESTATION, "input")
    assert FaultSpec(0, "SILENT").activation == "start"


def test_queue_cap_respected_offchain():
    run = run_offchain(C.build_probe_circuit(4), [4], [[3], [5], [7], [2]], n=4, t=1, seed=8,
                       max_parallel_mults=2)
    assert run.max_running <= 2
    assert run.result is not None and run.result[-2] == 0


def test_same_seed_same_run():
    a = run_offchain(C.build_mult_circuit(), [], [[3], [11]], n=4, t=1, seed=9)
    b = run_offchain(C.build_mult_circuit(), [], [[3], [11]], n=4, t=1, seed=9)
    assert a.result == b.result and a.rounds == b.rounds and a.queue_log == b.queue_log


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        make_session_config("s", 0, C.build_voting_circuit(10), [1] * 10, n=4, t=1)


def test_plan_public_input_count_checked():
    with pytest.raises(PlanError):
        build_plan(C.build_probe_circuit(4), [], F, 32, 4)


def test_mask_headroom():
    k = 32
    kappa = mask_bits_for(DEFAULT_PRIME, k, 10)
    assert 2 ** (k + 1) + 2 ** k + 10 * 2 ** (k + kappa) < DEFAULT_PRIME
    with pytest.raises(PlanError):
        mask_bits_for(DEFAULT_PRIME, 60, 10)


def test_derive_low_bits():
    assert derive("low_bits", [0b1011], 4, F) == [1, 1, 0, 1, 0b1011]
