"""Positive floating point at precision ``w``: native ops and constraint circuits.

A nonzero value is ``s * 2**e`` with ``s`` in ``[2^(w-1), 2^w)`` and ``e`` a
signed 8-bit exponent. Native arithmetic rounds the shifted significand
down; the auxiliary values each operation returns are exactly what the
circuits need as hints.

Each core circuit (``synth_float_mul`` / ``_div`` / ``_add``) assumes both
operands are nonzero and normalized. The guarded wrappers handle the zero
flag with selectors around an unmodified core circuit: a zero operand is
swapped for the constant 1.0 before the core runs and the result is then
routed by selector. In-circuit zero floats are always canonical (s = e = 0).

Slack check. The core relation is ``0 <= x - y`` and ``2^(w-1) (x - y) <= x``
(relative error at most delta). The second half is the 2w-bit compare; the
first is a range check on the slack ``d = x - y``, which also keeps the
compare inputs inside their declared width.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .field_r1cs import LC, ONE, ConstraintSystem, VarId, WitnessError
from .gadgets import (
    assert_leq,
    compare,
    exponential_check,
    is_zero,
    mul,
    permutation_check,
    select,
)

E_MIN, E_MAX = -128, 127
W_MIN, W_MAX = 4, 80


class FloatError(ArithmeticError):
    pass


class FloatOverflow(FloatError):
    pass


@dataclass(frozen=True)
class Precision:
    w: int = 23

    def __post_init__(self):
        if not W_MIN <= self.w <= W_MAX:
            raise ValueError(f"precision w={self.w} outside supported range [{W_MIN}, {W_MAX}]")

    @property
    def delta(self) -> Fraction:
        return Fraction(1, 1 << (self.w - 1))

    @property
    def delta_inv(self) -> int:
        return 1 << (self.w - 1)


@dataclass(frozen=True)
class Float:
    s: int
    e: int
    is_zero: bool
    w: int

    def __post_init__(self):
        if self.is_zero:
            if self.s or self.e:
                object.__setattr__(self, "s", 0)
                object.__setattr__(self, "e", 0)
            return
        if not (1 << (self.w - 1)) <= self.s < (1 << self.w):
            raise FloatError(f"significand {self.s} not normalized for w={self.w}")
        if not E_MIN <= self.e <= E_MAX:
            raise FloatOverflow(f"exponent {self.e} outside [{E_MIN}, {E_MAX}]")

    @property
    def value(self) -> Fraction:
        return float_decode(self)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        if self.is_zero:
            return f"Float(0, w={self.w})"
        return f"Float(s={self.s}, e={self.e}, w={self.w})"


@dataclass(frozen=True)
class FloatAux:
    theta: int = 0
    mid: int = 1
    lam: int | None = None
    permuted: bool = False
    mid_prime: int | None = None
    cutoff: bool = False


def zero(w: int) -> Float:
    return Float(0, 0, True, w)


def _make(s: int, e: int, w: int) -> Float:
    if not E_MIN <= e <= E_MAX:
        raise FloatOverflow(f"exponent {e} outside [{E_MIN}, {E_MAX}]")
    return Float(s, e, False, w)


def float_encode(x, w: int = 23) -> Float:
    """Nearest float to the exact rational ``x`` (ties to even significand)."""
    x = Fraction(x)
    if x < 0:
        raise FloatError("negative values are not representable")
    if x == 0:
        return zero(w)
    # floor(log2 x); the bit-length difference is off by at most one
    k = x.numerator.bit_length() - x.denominator.bit_length()
    if x < Fraction(2) ** k:
        k -= 1
    e = k - (w - 1)
    scaled = x / Fraction(2) ** e
    s = round(scaled)  # Fraction.__round__ is half-to-even
    if s == 1 << w:
        s >>= 1
        e += 1
    return _make(s, e, w)


def float_decode(f: Float) -> Fraction:
    if f.is_zero:
        return Fraction(0)
    return f.s * Fraction(2) ** f.e


def float_from_int(n: int, w: int = 23) -> Float:
    """Truncating int->float (keeps the top ``w`` bits), matching the in-circuit conversion."""
    if n < 0:
        raise FloatError("negative values are not representable")
    if n == 0:
        return zero(w)
    g = n.bit_length()
    if g <= w:
        return _make(n << (w - g), g - w, w)
    return _make(n >> (g - w), g - w, w)


def float_mul_native(a: Float, b: Float) -> tuple[Float, FloatAux | None]:
    w = a.w
    if a.is_zero or b.is_zero:
        return zero(w), None
    x = a.s * b.s
    theta = w - 1 if x < 1 << (2 * w - 1) else w
    return _make(x >> theta, a.e + b.e + theta, w), FloatAux(theta, 1 << theta)


def float_div_native(a: Float, b: Float) -> tuple[Float, FloatAux | None]:
    w = a.w
    if b.is_zero:
        raise ZeroDivisionError("float division by zero")
    if a.is_zero:
        return zero(w), None
    theta = w - 1 if a.s >= b.s else w
    s = (a.s << theta) // b.s
    return _make(s, a.e - b.e - theta, w), FloatAux(theta, 1 << theta)


def float_add_native(a: Float, b: Float) -> tuple[Float, FloatAux | None]:
    w = a.w
    if a.is_zero:
        return b, None
    if b.is_zero:
        return a, None
    permuted = a.e < b.e
    if permuted:
        a, b = b, a
    lam = a.e - b.e
    if lam > w:
        return a, FloatAux(0, 1, lam, permuted, 1, True)
    x = (a.s << lam) + b.s
    theta = lam if x >> lam < 1 << w else lam + 1
    return _make(x >> theta, b.e + theta, w), FloatAux(theta, 1 << theta, lam, permuted, 1 << lam, False)


def mul_value(a: Float, b: Float) -> Float:
    return float_mul_native(a, b)[0]


def div_value(a: Float, b: Float) -> Float:
    return float_div_native(a, b)[0]


def add_value(a: Float, b: Float) -> Float:
    return float_add_native(a, b)[0]


def float_leq(a: Float, b: Float) -> bool:
    """``a <= b`` on values; zero is below every nonzero float."""
    if a.is_zero:
        return True
    if b.is_zero:
        return False
    return (a.e, a.s) <= (b.e, b.s)


def relative_error(approx: Float, exact: Fraction) -> Fraction:
    exact = Fraction(exact)
    if exact == 0:
        return Fraction(0) if approx.is_zero else Fraction(1)
    return abs(float_decode(approx) - exact) / exact


EXP_OFFSET = 128
EXP_BITS = 8


@dataclass
class FloatVar:
    """In-circuit float: linear forms for significand, exponent and zero flag.

    ``z`` is the integer 0 for floats that are nonzero by construction.
    """

    s: object
    e: object
    z: object
    w: int

    @property
    def known_nonzero(self) -> bool:
        return isinstance(self.z, int) and self.z == 0

    @property
    def known_zero(self) -> bool:
        return isinstance(self.z, int) and self.z == 1


def exp_bits_for(w: int) -> int:
    return max(6, w.bit_length())


def bits_lc(cs: ConstraintSystem, value: int | None, width: int) -> LC:
    """Allocate ``width`` boolean witnesses for ``value`` and return their weighted sum (width rows)."""
    if value is not None and (value < 0 or value >> width):
        raise WitnessError(f"value does not fit in {width} bits")
    acc = LC()
    for i in range(width):
        b = cs.witness(None if value is None else (value >> i) & 1)
        cs.enforce(b, ONE - b, 0)
        acc = acc + b * (1 << i)
    return acc


def normalized_significand(cs: ConstraintSystem, value: int | None, w: int) -> LC:
    """Significand in ``[2^(w-1), 2^w)`` as a forced-top-bit bit sum (w-1 rows)."""
    low = None if value is None else value - (1 << (w - 1))
    return bits_lc(cs, low, w - 1) + (1 << (w - 1))


def const_float(f: Float) -> FloatVar:
    if f.is_zero:
        return FloatVar(0, 0, 1, f.w)
    return FloatVar(f.s, f.e, 0, f.w)


def float_value(cs: ConstraintSystem, fv: FloatVar) -> Float | None:
    """Native value of an in-circuit float (prover mode), else None."""
    if not cs.prover:
        return None
    z = cs.val(fv.z)
    if z is None:
        return None
    if z:
        return zero(fv.w)
    return Float(cs.val(fv.s), cs.signed(fv.e), False, fv.w)


def alloc_float(cs: ConstraintSystem, value: Float | None, w: int, label: str = "",
                public: bool = False, zero_flag: bool = True) -> FloatVar:
    """Allocate raw (s, e[, z]) variables. No range constraints are emitted."""
    alloc = cs.public if public else (lambda label="", value=None: cs.witness(value, label))
    known = value is not None
    s = alloc(label=f"{label}.s", value=value.s if known else None)
    e = alloc(label=f"{label}.e", value=value.e if known else None)
    if not zero_flag:
        return FloatVar(s, e, 0, w)
    z = alloc(label=f"{label}.z", value=int(value.is_zero) if known else None)
    return FloatVar(s, e, z, w)


def constrain_float(cs: ConstraintSystem, fv: FloatVar) -> FloatVar:
    """Range-constrain an allocated float: z boolean, and s normalized (or s = e = 0 when z = 1).

    Returns a float whose significand is the checked bit sum.
    """
    w = fv.w
    val = float_value(cs, fv)
    if fv.known_nonzero:
        s = normalized_significand(cs, None if val is None else val.s, w)
        cs.enforce_equal(fv.s, s)
        return FloatVar(s, fv.e, 0, w)
    cs.enforce(fv.z, ONE - LC.of(fv.z), 0)
    # t = s - (1 - z) 2^(w-1) lies in [0, 2^(w-1)) in both cases
    t = None if val is None else (0 if val.is_zero else val.s - (1 << (w - 1)))
    low = bits_lc(cs, t, w - 1)
    cs.enforce_equal(fv.s, low + (ONE - LC.of(fv.z)) * (1 << (w - 1)))
    cs.enforce(fv.z, fv.e, 0)
    cs.enforce(fv.z, low, 0)
    return FloatVar(low + (ONE - LC.of(fv.z)) * (1 << (w - 1)), fv.e, fv.z, w)


# core circuits


def _slack(cs: ConstraintSystem, x, y_value: int | None, d_bits: int, w: int) -> LC:
    xv = cs.val(x)
    d = bits_lc(cs, None if xv is None else xv - y_value, d_bits)
    assert_leq(cs, d * (1 << (w - 1)), x, 2 * w)
    return d


def _theta_mid(cs: ConstraintSystem, theta, w: int) -> LC:
    cs.enforce(LC.of(theta) - w, LC.of(theta) - (w - 1), 0)
    # mid = 2^theta interpolated between the two admissible shifts
    return (LC.of(theta) - (w - 1)) * (1 << w) - (LC.of(theta) - w) * (1 << (w - 1))


def synth_float_mul(cs: ConstraintSystem, a: FloatVar, b: FloatVar, c: FloatVar, theta) -> None:
    w = a.w
    mid = _theta_mid(cs, theta, w)
    cs.enforce_equal(c.e, LC.of(a.e) + b.e + theta)
    x = mul(cs, a.s, b.s)
    sv, mv = cs.val(c.s), cs.val(mid)
    d = _slack(cs, x, None if sv is None else sv * mv, w, w)
    cs.enforce(c.s, mid, LC.of(x) - d)


def synth_float_div(cs: ConstraintSystem, a: FloatVar, b: FloatVar, c: FloatVar, theta) -> None:
    w = a.w
    mid = _theta_mid(cs, theta, w)
    cs.enforce_equal(c.e, LC.of(a.e) - b.e - theta)
    x = mul(cs, a.s, mid)
    sv, bv = cs.val(c.s), cs.val(b.s)
    d = _slack(cs, x, None if sv is None else sv * bv, w, w)
    cs.enforce(c.s, b.s, LC.of(x) - d)


def _new_result(cs: ConstraintSystem, c: Float | None, w: int) -> FloatVar:
    s = normalized_significand(cs, None if c is None else c.s, w)
    e = cs.witness(None if c is None else c.e)
    return FloatVar(s, e, 0, w)


def _operands(cs, a: FloatVar, b: FloatVar):
    av, bv = float_value(cs, a), float_value(cs, b)
    if av is None or bv is None:
        return None, None
    return av, bv


def float_mul_core(cs: ConstraintSystem, a: FloatVar, b: FloatVar) -> FloatVar:
    av, bv = _operands(cs, a, b)
    c, aux = float_mul_native(av, bv) if av is not None else (None, None)
    out = _new_result(cs, c, a.w)
    theta = cs.witness(None if aux is None else aux.theta)
    synth_float_mul(cs, a, b, out, theta)
    return out


def float_div_core(cs: ConstraintSystem, a: FloatVar, b: FloatVar) -> FloatVar:
    av, bv = _operands(cs, a, b)
    c, aux = float_div_native(av, bv) if av is not None else (None, None)
    out = _new_result(cs, c, a.w)
    theta = cs.witness(None if aux is None else aux.theta)
    synth_float_div(cs, a, b, out, theta)
    return out


@dataclass
class AddHints:
    """Witness variables carried by one addition: the ordered operands and shifts."""

    ea: VarId
    sa: VarId
    eb: VarId
    sb: VarId
    theta: VarId
    mid_prime: VarId


def synth_float_add(cs: ConstraintSystem, a: FloatVar, b: FloatVar, c: FloatVar, hints: AddHints, r, z) -> None:
    w = a.w
    ea, sa, eb, sb = hints.ea, hints.sa, hints.eb, hints.sb
    # 1. claimed ordering is a permutation of the inputs
    permutation_check(cs, [(a.e, a.s), (b.e, b.s)], [(ea, sa), (eb, sb)], r, z)
    # 2. e_b <= e_a, which also range-checks lambda = e_a - e_b into 8 bits
    assert_leq(cs, eb, ea, EXP_BITS)
    lam = LC.of(ea) - eb
    # 3. cutoff: when lambda > w the smaller operand is dropped and c = a
    le = compare(cs, lam, w, EXP_BITS)
    lam_eff = mul(cs, lam, le)
    sb_eff = mul(cs, sb, le)
    # 4. mid' = 2^lambda_eff
    exponential_check(cs, lam_eff, hints.mid_prime, exp_bits_for(w))
    # 5. theta in {lambda_eff, lambda_eff + 1} and mid = 2^theta
    th = LC.of(hints.theta) - lam_eff
    cs.enforce(th, th - 1, 0)
    mv = cs.val(hints.mid_prime)
    tv = cs.val(th)
    mid = cs.witness(None if mv is None else mv << tv)
    cs.enforce(hints.mid_prime, th + 1, mid)
    # 6. exponent of the result
    cs.enforce_equal(c.e, LC.of(eb) + lam - lam_eff + hints.theta)
    # 7. x = s_a 2^lambda + s_b,  y = s_c mid,  relative-error check
    x = cs.witness(None if mv is None else cs.val(sa) * mv + cs.val(sb_eff))
    cs.enforce(sa, hints.mid_prime, LC.of(x) - sb_eff)
    sv, midv = cs.val(c.s), cs.val(mid)
    d = _slack(cs, x, None if sv is None else sv * midv, w + 1, w)
    cs.enforce(c.s, mid, LC.of(x) - d)


def float_add_core(cs: ConstraintSystem, a: FloatVar, b: FloatVar, r, z) -> FloatVar:
    w = a.w
    av, bv = _operands(cs, a, b)
    if av is not None:
        c, aux = float_add_native(av, bv)
        hi, lo = (bv, av) if aux.permuted else (av, bv)
        hv = (hi.e, hi.s, lo.e, lo.s, aux.theta, aux.mid_prime)
    else:
        c, hv = None, (None,) * 6
    out = _new_result(cs, c, w)
    hints = AddHints(*(cs.witness(v) for v in hv))
    synth_float_add(cs, a, b, out, hints, r, z)
    return out


# zero-flag handling


def _substitute_one(fv: FloatVar) -> FloatVar:
    """Replace a zero operand by 1.0 = (2^(w-1), -(w-1)); linear because zero is canonical."""
    if fv.known_nonzero:
        return fv
    w = fv.w
    return FloatVar(LC.of(fv.s) + LC.of(fv.z) * (1 << (w - 1)), LC.of(fv.e) - LC.of(fv.z) * (w - 1), 0, w)


def _gate_nonzero(cs: ConstraintSystem, keep, fv: FloatVar, z_out) -> FloatVar:
    """``keep ? fv : 0`` for a core result."""
    return FloatVar(mul(cs, keep, fv.s), mul(cs, keep, fv.e), z_out, fv.w)


def float_mul(cs: ConstraintSystem, a: FloatVar, b: FloatVar) -> FloatVar:
    if a.known_nonzero and b.known_nonzero:
        return float_mul_core(cs, a, b)
    c = float_mul_core(cs, _substitute_one(a), _substitute_one(b))
    if a.known_nonzero:
        zc = b.z
    elif b.known_nonzero:
        zc = a.z
    else:
        zab = mul(cs, a.z, b.z)
        zc = LC.of(a.z) + b.z - zab
    return _gate_nonzero(cs, ONE - LC.of(zc), c, zc)


def float_div(cs: ConstraintSystem, a: FloatVar, b: FloatVar) -> FloatVar:
    if not b.known_nonzero:
        cs.enforce(b.z, ONE, 0)
        b = FloatVar(b.s, b.e, 0, b.w)
    if a.known_nonzero:
        return float_div_core(cs, a, b)
    c = float_div_core(cs, _substitute_one(a), b)
    return _gate_nonzero(cs, ONE - LC.of(a.z), c, a.z)


def select_float(cs: ConstraintSystem, bit, t: FloatVar, f: FloatVar) -> FloatVar:
    """``bit ? t : f``; the zero flag is selected too unless both are known nonzero."""
    s = select(cs, bit, t.s, f.s)
    e = select(cs, bit, t.e, f.e)
    if t.known_nonzero and f.known_nonzero:
        z = 0
    elif isinstance(t.z, int) and isinstance(f.z, int):
        z = LC.of(bit) * (t.z - f.z) + f.z
    else:
        z = select(cs, bit, t.z, f.z)
    return FloatVar(s, e, z, t.w)


def float_add(cs: ConstraintSystem, a: FloatVar, b: FloatVar, r, z) -> FloatVar:
    """Addition with zero flags: ``0 + b = b``, ``a + 0 = a``, otherwise the core circuit."""
    if a.known_zero:
        return b
    if b.known_zero:
        return a
    c = float_add_core(cs, _substitute_one(a), _substitute_one(b), r, z)
    s, e = c.s, c.e
    if not b.known_nonzero:
        s = select(cs, b.z, a.s, s)
        e = select(cs, b.z, a.e, e)
    if not a.known_nonzero:
        s = select(cs, a.z, b.s, s)
        e = select(cs, a.z, b.e, e)
    if a.known_nonzero or b.known_nonzero:
        zc = 0
    else:
        zc = mul(cs, a.z, b.z)
    return FloatVar(s, e, zc, a.w)


# ordering


def order_key(fv: FloatVar) -> LC:
    """(e + 128) 2^w + s for nonzero floats, 0 for zero; monotone in the represented value."""
    w = fv.w
    key = (LC.of(fv.e) + EXP_OFFSET) * (1 << w) + fv.s
    if fv.known_nonzero:
        return key
    return key - LC.of(fv.z) * (EXP_OFFSET << w)


def synth_float_leq(cs: ConstraintSystem, a: FloatVar, b: FloatVar) -> VarId:
    """Bit that is 1 iff a <= b, via one compare over packed (exponent, significand) keys."""
    return compare(cs, order_key(a), order_key(b), a.w + EXP_BITS)


def assert_float_leq(cs: ConstraintSystem, a: FloatVar, b: FloatVar) -> None:
    assert_leq(cs, order_key(a), order_key(b), a.w + EXP_BITS)


# integer -> float


def int_to_float(cs: ConstraintSystem, n, bound: int, w: int) -> FloatVar:
    """Truncating conversion of an integer in ``[0, bound]`` (matches :func:`float_from_int`)."""
    K = max(1, bound.bit_length())
    nv = cs.val(n)
    zf = is_zero(cs, n)
    n1 = LC.of(n) + zf  # never zero
    sh_bits = max(1, K.bit_length())
    g = None if nv is None else max(nv, 1).bit_length()
    sh = cs.witness(None if g is None else K - g)
    p2 = cs.witness(None if g is None else 1 << (K - g))
    exponential_check(cs, sh, p2, sh_bits)
    top = None if g is None else (max(nv, 1) << (K - g)) - (1 << (K - 1))
    low = bits_lc(cs, top, K - 1)
    norm = low + (1 << (K - 1))
    cs.enforce(n1, p2, norm)
    if K >= w:
        # keep the top w bits of the normalized value
        s = LC({0: 1 << (w - 1)})
        for i, c in low.terms.items():
            if c >= 1 << (K - w):
                s = s + LC({i: c >> (K - w)})
    else:
        s = norm * (1 << (w - K))
    e = LC.of(K - w) - sh
    keep = ONE - LC.of(zf)
    return FloatVar(mul(cs, keep, s), mul(cs, keep, e), zf, w)


# gate accounting

TABLE3_REFERENCE = {
    23: {"add": 131, "mul": 82, "div": 82},
    16: {"add": 110, "mul": 61, "div": 61},
    8: {"add": 86, "mul": 37, "div": 37},
}


def op_constraint_count(op: str, w: int) -> int:
    """Rows emitted by one core operation on two nonzero operands (operand range checks excluded)."""
    cs = ConstraintSystem(prover=False)
    a = alloc_float(cs, None, w, zero_flag=False)
    b = alloc_float(cs, None, w, zero_flag=False)
    r, z = cs.public(), cs.public()
    before = cs.num_constraints
    if op == "add":
        float_add_core(cs, a, b, r, z)
    elif op == "mul":
        float_mul_core(cs, a, b)
    elif op == "div":
        float_div_core(cs, a, b)
    else:
        raise ValueError(f"unknown op {op!r}")
    return cs.num_constraints - before
