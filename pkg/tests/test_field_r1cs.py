import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zkti.field_r1cs import (
    DEFAULT_PRIME,
    LC,
    ONE,
    ConstraintSystem,
    Field,
    FieldElement,
    FieldError,
    R1CSError,
    VarKind,
    Witness,
    WitnessError,
    alloc,
    check_prime_for_precision,
    enforce,
    fe_arith,
    is_satisfied,
)

from oracles import BN254

P = DEFAULT_PRIME
elements = st.integers(min_value=0, max_value=P - 1)


def fe(v):
    return FieldElement(v, P)


def test_default_prime_is_bn254_scalar_field():
    assert P == BN254
    assert P.bit_length() == 254


def test_add_wraps():
    assert fe_arith("add", fe(P - 1), fe(1)) == fe(0)


def test_inverse_law_random():
    rng = random.Random(3)
    for _ in range(200):
        x = fe(rng.randrange(1, P))
        assert fe_arith("mul", x, fe_arith("inv", x)) == fe(1)


def test_precision_bound():
    assert 2 ** (3 * 23 + 1) < P
    check_prime_for_precision(P, 23)
    with pytest.raises(FieldError):
        check_prime_for_precision(P, 90)


def test_ops_and_errors():
    assert fe_arith("sub", fe(0), fe(1)) == fe(P - 1)
    assert fe_arith("neg", fe(5)) == fe(P - 5)
    assert fe_arith("pow", fe(2), fe(10)) == fe(1024)
    with pytest.raises(FieldError):
        fe_arith("inv", fe(0))
    with pytest.raises(ValueError):
        fe_arith("frobnicate", fe(1))
    assert FieldElement(P + 5, P).value == 5
    assert FieldElement(-1, P).value == P - 1


def test_field_call_reduces():
    f = Field(P)
    assert f(-1) == fe(P - 1)
    assert f.signed(P - 3) == -3


@settings(max_examples=300, deadline=None)
@given(elements, elements, elements)
def test_field_axioms(a, b, c):
    x, y, z = fe(a), fe(b), fe(c)
    assert (x + y) + z == x + (y + z)
    assert (x * y) * z == x * (y * z)
    assert x * (y + z) == x * y + x * z
    assert x + y == y + x
    if a:
        assert x * x.inv() == fe(1)


def test_field_axioms_bulk():
    rng = random.Random(11)
    for _ in range(10_000):
        a, b, c = (rng.randrange(P) for _ in range(3))
        assert (a + b) % P * c % P == (a * c + b * c) % P
        x, y, z = fe(a), fe(b), fe(c)
        assert (x * y) * z == x * (y * z)


def test_alloc_indices():
    cs = ConstraintSystem()
    v = alloc(cs, "public", "x")
    assert v.index == 1 and v.kind == VarKind.PUBLIC
    w = alloc(cs, "witness")
    assert w.index == 2
    for _ in range(8):
        alloc(cs, "witness")
    assert alloc(cs, "witness").index == 11


def product_system(x, y, z):
    cs = ConstraintSystem()
    xv, yv, zv = cs.witness(x), cs.witness(y), cs.witness(z)
    enforce(cs, xv, yv, zv)
    return cs


def test_product_satisfied_and_not():
    cs = product_system(3, 4, 12)
    assert is_satisfied(cs, [], cs.witness_assignment()).ok
    cs = product_system(3, 4, 11)
    res = is_satisfied(cs, [], cs.witness_assignment())
    assert not res.ok and res.failing_index == 0


def test_linear_constraint_via_one():
    cs = ConstraintSystem()
    x, y, z = cs.witness(2), cs.witness(5), cs.witness(7)
    cs.enforce(x + y, ONE, z)
    assert is_satisfied(cs, [], cs.witness_assignment())


def test_empty_system():
    cs = ConstraintSystem()
    assert is_satisfied(cs, [], cs.witness_assignment()).ok


def test_public_inputs_are_checked():
    cs = ConstraintSystem()
    x = cs.public("x", 6)
    y = cs.witness(2)
    cs.enforce(y, 3, x)
    wit = cs.witness_assignment()
    assert is_satisfied(cs, [6], wit)
    assert not is_satisfied(cs, [7], wit)
    with pytest.raises(R1CSError):
        is_satisfied(cs, [], wit)
    with pytest.raises(R1CSError):
        is_satisfied(cs, [6], Witness([1, 6]))


def test_gate_count_equals_enforce_calls():
    cs = ConstraintSystem()
    xs = [cs.witness(i) for i in range(5)]
    for a, b in zip(xs, xs[1:]):
        cs.enforce(a, b, cs.witness(cs.val(a) * cs.val(b)))
    assert cs.num_constraints == 4
    assert is_satisfied(cs, [], cs.witness_assignment())


def test_unallocated_variable_rejected_and_rolled_back():
    cs = ConstraintSystem()
    x = cs.witness(1)
    cs.enforce(x, x, x)
    with pytest.raises(R1CSError):
        cs.enforce(x, LC({99: 1}), x)
    assert cs.num_constraints == 1
    assert is_satisfied(cs, [], cs.witness_assignment())


def test_missing_witness_value():
    cs = ConstraintSystem()
    cs.witness(None)
    with pytest.raises(WitnessError):
        cs.witness_assignment()


def test_lc_normalized_sorted_and_deduplicated():
    cs = ConstraintSystem()
    a, b = cs.witness(1), cs.witness(2)
    lc = LC.of(b) + a + b - b + LC.of(a) * (P - 1)
    assert lc.normalized(P) == [(b.index, 1)]
    cs.enforce(b + a, ONE, LC.of(a) * 3)
    row = cs.constraint(0)
    assert [v for v, _ in row.a] == sorted(v for v, _ in row.a)


def test_failure_reports_region_and_is_order_independent():
    rows = [(3, 4, 12), (2, 2, 4), (5, 5, 24), (1, 1, 1)]
    results = []
    for order in ([0, 1, 2, 3], [3, 2, 1, 0]):
        cs = ConstraintSystem()
        with cs.region("outer"):
            for k in order:
                x, y, z = rows[k]
                with cs.region(f"row{k}"):
                    cs.enforce(cs.witness(x), cs.witness(y), cs.witness(z))
        res = is_satisfied(cs, [], cs.witness_assignment())
        results.append(res.ok)
        assert res.region == "outer/row2"
    assert results == [False, False]


def test_digest_depends_on_structure_only():
    def build(vals):
        cs = ConstraintSystem()
        x, y = cs.witness(vals[0]), cs.witness(vals[1])
        cs.enforce(x, y, LC.of(x) * 2)
        return cs.digest()

    assert build((1, 2)) == build((5, 7))
    structural = ConstraintSystem(prover=False)
    x, y = structural.witness(), structural.witness()
    structural.enforce(x, y, LC.of(x) * 2)
    assert structural.digest() == build((1, 2))
    other = ConstraintSystem(prover=False)
    x, y = other.witness(), other.witness()
    other.enforce(x, y, LC.of(x) * 3)
    assert other.digest() != structural.digest()
