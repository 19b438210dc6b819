"""Bit decomposition, comparison, power-of-two and pair-permutation gadgets.

Every gadget emits constraints into a :class:`ConstraintSystem` and, in
prover mode, assigns the witness values it introduces. Inputs may be
variables or linear combinations.
"""

from __future__ import annotations

from dataclasses import dataclass

from .field_r1cs import LC, ONE, ConstraintSystem, VarId, WitnessError

DEFAULT_EXP_BITS = 6


@dataclass
class BitVector:
    bits: list  # VarId or LC (a forced-constant bit is stored as an LC)
    width: int

    def lc(self) -> LC:
        acc = LC()
        for i, b in enumerate(self.bits):
            acc = acc + LC.of(b) * (1 << i)
        return acc

    @property
    def msb(self):
        return self.bits[-1]


def _bits_of(cs: ConstraintSystem, v, width: int, what: str) -> list[int] | None:
    x = cs.val(v)
    if x is None:
        return None
    if x >> width:
        raise WitnessError(f"{what}: value does not fit in {width} bits")
    return [(x >> i) & 1 for i in range(width)]


def booleanity(cs: ConstraintSystem, b) -> None:
    cs.enforce(b, ONE - LC.of(b), 0)


def bit_decompose(cs: ConstraintSystem, v, width: int) -> BitVector:
    """Decompose ``v`` into ``width`` LSB-first bits: ``width`` booleanity rows plus one recomposition row."""
    vals = _bits_of(cs, v, width, "bit_decompose")
    bits = []
    for i in range(width):
        b = cs.witness(None if vals is None else vals[i])
        booleanity(cs, b)
        bits.append(b)
    bv = BitVector(bits, width)
    cs.enforce(bv.lc(), ONE, v)
    return bv


def range_check(cs: ConstraintSystem, v, width: int) -> LC:
    """Constrain ``0 <= v < 2**width``; returns the recomposed bits as an LC (width+1 rows)."""
    return bit_decompose(cs, v, width).lc()


def compare(cs: ConstraintSystem, a, b, width: int) -> VarId:
    """Return a bit that is 1 iff ``a <= b`` (both ``width``-bit). Costs width+2 rows."""
    m = LC.of(b) - a + (1 << width)
    av, bv = cs.val(a), cs.val(b)
    if av is not None and (av >> width or bv >> width):
        raise WitnessError(f"compare: operands do not fit in {width} bits")
    return bit_decompose(cs, m, width + 1).msb


def assert_leq(cs: ConstraintSystem, a, b, width: int) -> None:
    """Enforce ``a <= b`` for ``width``-bit operands.

    This is compare with its top bit fixed to 1: the low ``width`` bits of
    ``b - a + 2^width`` are exactly ``b - a``, so only those are decomposed.
    """
    d = LC.of(b) - a
    if cs.prover:
        dv = cs.val(d)
        if dv is not None and dv >> width:
            raise WitnessError("assert_leq: a > b or operands out of range")
    bit_decompose(cs, d, width)


def is_zero(cs: ConstraintSystem, x) -> VarId:
    """Bit that is 1 iff ``x == 0`` (two rows)."""
    xv = cs.val(x)
    flag = cs.witness(None if xv is None else int(xv == 0))
    inv = cs.witness(None if xv is None else (pow(xv, -1, cs.prime) if xv else 0))
    cs.enforce(x, inv, ONE - flag)
    cs.enforce(x, flag, 0)
    return flag


def select(cs: ConstraintSystem, bit, if_one, if_zero) -> VarId:
    """``bit ? if_one : if_zero`` as a fresh variable (one row)."""
    t, f = LC.of(if_one), LC.of(if_zero)
    bv = cs.val(bit)
    out = cs.witness(None if bv is None else (cs.val(t) if bv else cs.val(f)))
    cs.enforce(bit, t - f, LC.of(out) - f)
    return out


def mul(cs: ConstraintSystem, a, b) -> VarId:
    av, bv = cs.val(a), cs.val(b)
    out = cs.witness(None if av is None or bv is None else av * bv)
    cs.enforce(a, b, out)
    return out


def exponential_check(cs: ConstraintSystem, a, b, max_bits: int = DEFAULT_EXP_BITS) -> None:
    """Enforce ``b == 2**a`` by repeated squaring over the bits of ``a``.

    The first chain step is linear (b_1 = 1 + a_0) and the last step writes
    straight into ``b``, giving 2*max_bits rows in total.
    """
    bits = bit_decompose(cs, a, max_bits).bits
    prev = ONE + LC.of(bits[0])  # b_1
    for i in range(1, max_bits):
        k = (1 << (1 << i)) - 1  # 2^(2^i) - 1
        step = ONE + LC.of(bits[i]) * k
        if i == max_bits - 1:
            cs.enforce(prev, step, b)
        else:
            pv, sv = cs.val(prev), cs.val(step)
            nxt = cs.witness(None if pv is None else pv * sv)
            cs.enforce(prev, step, nxt)
            prev = LC.of(nxt)
    if max_bits == 1:
        cs.enforce(prev, ONE, b)


def permutation_check(cs: ConstraintSystem, input_pairs, claimed_pairs, r, z) -> None:
    """Enforce that ``claimed_pairs`` is a reordering of ``input_pairs`` (two pairs each).

    ``r`` and ``z`` are challenge variables. Their values may still be unset
    while the witness is being built, in which case the fingerprints are
    deferred until the challenges are fixed. Six rows.
    """
    r_lc, z_lc = LC.of(r), LC.of(z)
    ready = cs.prover and cs.val(r_lc) is not None and cs.val(z_lc) is not None

    def hint(fn):
        v = cs.witness(fn() if ready else None)
        if cs.prover and not ready:
            cs.defer(v, fn)
        return v

    fps = []
    for a, b in list(input_pairs) + list(claimed_pairs):
        a_lc, b_lc = LC.of(a), LC.of(b)
        c = hint(lambda a_lc=a_lc, b_lc=b_lc: cs.val(a_lc) + cs.val(z_lc) * cs.val(b_lc))
        cs.enforce(z_lc, b_lc, LC.of(c) - a_lc)
        fps.append(c)
    c1, c2, c3, c4 = fps
    t = hint(lambda: (cs.val(r_lc) - cs.val(c1)) * (cs.val(r_lc) - cs.val(c2)))
    cs.enforce(r_lc - c1, r_lc - c2, t)
    cs.enforce(r_lc - c3, r_lc - c4, t)
