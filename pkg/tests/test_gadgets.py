import random

import pytest

from zkti.field_r1cs import DEFAULT_PRIME, ConstraintSystem, Witness, WitnessError, is_satisfied
from zkti.gadgets import (
    assert_leq,
    bit_decompose,
    compare,
    exponential_check,
    is_zero,
    permutation_check,
    range_check,
    select,
)

P = DEFAULT_PRIME


def satisfied(cs):
    return is_satisfied(cs, cs.public_values(), cs.witness_assignment()).ok


def with_mutation(cs, index, value):
    x = cs.witness_assignment().assignment
    x[index] = value % P
    return is_satisfied(cs, [x[i] for i in cs.public_indices()], Witness(x)).ok


def test_bit_decompose_examples():
    cs = ConstraintSystem()
    bv = bit_decompose(cs, cs.witness(13), 4)
    assert [cs.val(b) for b in bv.bits] == [1, 0, 1, 1]
    assert satisfied(cs)
    cs = ConstraintSystem()
    bv = bit_decompose(cs, cs.witness(0), 4)
    assert [cs.val(b) for b in bv.bits] == [0, 0, 0, 0]


def test_bit_decompose_cost():
    cs = ConstraintSystem(prover=False)
    bit_decompose(cs, cs.witness(), 23)
    assert cs.num_constraints == 24


def test_bit_decompose_flipped_bit_rejected():
    for v in (0, 1, 5, 200, 4095):
        cs = ConstraintSystem()
        bv = bit_decompose(cs, cs.witness(v), 12)
        for b in bv.bits:
            assert not with_mutation(cs, b.index, 1 - cs.val(b))


def test_bit_decompose_out_of_range_witness():
    cs = ConstraintSystem()
    with pytest.raises(WitnessError):
        bit_decompose(cs, cs.witness(16), 4)


def test_range_check_recomposes():
    cs = ConstraintSystem()
    lc = range_check(cs, cs.witness(77), 8)
    assert cs.val(lc) == 77


def compare_bit(a, b, width):
    cs = ConstraintSystem()
    bit = compare(cs, cs.witness(a), cs.witness(b), width)
    assert satisfied(cs)
    return cs.val(bit), cs


@pytest.mark.parametrize("a,b,expected", [(3, 5, 1), (5, 3, 0), (7, 7, 1), (0, 255, 1), (255, 0, 0)])
def test_compare_examples(a, b, expected):
    assert compare_bit(a, b, 8)[0] == expected


def test_compare_cost_and_bit_is_forced():
    bit, cs = compare_bit(3, 5, 8)
    assert cs.num_constraints == 10
    cs2 = ConstraintSystem()
    out = compare(cs2, cs2.witness(3), cs2.witness(5), 8)
    assert not with_mutation(cs2, out.index, 0)


def test_compare_exhaustive_small():
    for a in range(32):
        for b in range(32):
            assert compare_bit(a, b, 5)[0] == int(a <= b)


def test_assert_leq():
    cs = ConstraintSystem()
    assert_leq(cs, cs.witness(4), cs.witness(9), 4)
    assert satisfied(cs)
    cs = ConstraintSystem()
    with pytest.raises(WitnessError):
        assert_leq(cs, cs.witness(9), cs.witness(4), 4)


def test_assert_leq_rejects_forged_bits():
    # a > b cannot be hidden by choosing bits: b - a wraps to a huge field element
    cs = ConstraintSystem()
    a, b = cs.witness(4), cs.witness(9)
    assert_leq(cs, a, b, 4)
    assert not with_mutation(cs, a.index, 10)


def exp_system(a, b, max_bits=6):
    cs = ConstraintSystem()
    exponential_check(cs, cs.witness(a), cs.witness(b), max_bits)
    return cs


def test_exponential_examples():
    assert satisfied(exp_system(5, 32))
    assert satisfied(exp_system(0, 1))
    assert not satisfied(exp_system(5, 31))


def test_exponential_unique_solution():
    rng = random.Random(5)
    for a in range(32):
        candidates = set(range(70)) | {2**a - 1, 2**a + 1, 2 ** (a + 1), P - 2**a} | {rng.randrange(P) for _ in range(5)}
        for b in candidates:
            assert satisfied(exp_system(a, b)) == (b == 2**a)


def test_exponential_cost():
    cs = ConstraintSystem(prover=False)
    exponential_check(cs, cs.witness(), cs.witness(), 6)
    assert cs.num_constraints <= 3 * 6 + 2


def perm_system(inputs, claimed, r, z):
    cs = ConstraintSystem()
    rv, zv = cs.public("r", r), cs.public("z", z)
    ins = [(cs.witness(a), cs.witness(b)) for a, b in inputs]
    outs = [(cs.witness(a), cs.witness(b)) for a, b in claimed]
    permutation_check(cs, ins, outs, rv, zv)
    return cs


def test_permutation_identity_and_swap():
    rng = random.Random(1)
    for _ in range(20):
        r, z = rng.randrange(P), rng.randrange(P)
        assert satisfied(perm_system([(1, 2), (3, 4)], [(1, 2), (3, 4)], r, z))
        assert satisfied(perm_system([(1, 2), (3, 4)], [(3, 4), (1, 2)], r, z))


def test_permutation_rejects_changed_pair():
    rng = random.Random(2)
    assert not satisfied(perm_system([(1, 2), (3, 4)], [(1, 2), (3, 5)], rng.randrange(P), rng.randrange(P)))


def test_permutation_soundness_random():
    rng = random.Random(3)
    accepted = 0
    for _ in range(1000):
        ins = [(rng.randrange(256), rng.randrange(256)) for _ in range(2)]
        claimed = [(rng.randrange(256), rng.randrange(256)) for _ in range(2)]
        if sorted(ins) == sorted(claimed):
            continue
        accepted += satisfied(perm_system(ins, claimed, rng.randrange(P), rng.randrange(P)))
    assert accepted == 0


def test_permutation_cost_and_deferred_hints():
    cs = ConstraintSystem()
    r, z = cs.public("r"), cs.public("z")
    ins = [(cs.witness(1), cs.witness(2)), (cs.witness(3), cs.witness(4))]
    permutation_check(cs, ins, list(reversed(ins)), r, z)
    assert cs.num_constraints == 6
    cs.set_value(r, 12345)
    cs.set_value(z, 678)
    cs.resolve_deferred()
    assert satisfied(cs)


def test_is_zero_and_select():
    for v, expected in ((0, 1), (9, 0)):
        cs = ConstraintSystem()
        flag = is_zero(cs, cs.witness(v))
        assert cs.val(flag) == expected and satisfied(cs)
        assert not with_mutation(cs, flag.index, 1 - expected)
    cs = ConstraintSystem()
    out = select(cs, cs.witness(1), cs.witness(7), cs.witness(9))
    assert cs.val(out) == 7 and satisfied(cs)
    assert not with_mutation(cs, out.index, 9)
