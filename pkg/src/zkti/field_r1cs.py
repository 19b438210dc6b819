"""Prime-field arithmetic and rank-1 constraint systems.

Field hot paths (constraint evaluation, witness generation) work on plain
``int`` residues; :class:`FieldElement` is the checked, user-facing wrapper.

Constraints are stored in flat ``array('I')`` buffers (variable indices and
interned coefficient ids) because full-size inference circuits run to a few
million rows. Witness values are only computed when the system is built in
prover mode; a structure-only build produces the identical constraint list.
"""

from __future__ import annotations

import hashlib
from array import array
from contextlib import contextmanager
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterable

# BN254 scalar field, 254 bits.
DEFAULT_PRIME = 21888242871839275222246405745257275088548364400416034343698204186575808495617


class FieldError(ArithmeticError):
    pass


def check_prime_for_precision(prime: int, w: int) -> None:
    """Raise unless ``prime > 2**(3w+1)``, the no-wraparound bound for float circuits."""
    if prime <= 1 << (3 * w + 1):
        raise FieldError(
            f"prime of {prime.bit_length()} bits is too small for w={w}: need p > 2^{3 * w + 1}"
        )


@dataclass(frozen=True, slots=True)
class Field:
    prime: int = DEFAULT_PRIME

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(value % self.prime, self.prime)

    def signed(self, value: int) -> int:
        """Balanced representative of ``value`` in (-p/2, p/2]."""
        value %= self.prime
        return value - self.prime if value > self.prime // 2 else value


@dataclass(frozen=True, slots=True)
class FieldElement:
    value: int
    prime: int = DEFAULT_PRIME

    def __post_init__(self):
        if not 0 <= self.value < self.prime:
            object.__setattr__(self, "value", self.value % self.prime)

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.prime != self.prime:
                raise FieldError("operands belong to different fields")
            return other.value
        if isinstance(other, int):
            return other % self.prime
        return NotImplemented

    def _new(self, v: int) -> FieldElement:
        return FieldElement(v % self.prime, self.prime)

    def __add__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._new(self.value + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._new(self.value - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._new(o - self.value)

    def __mul__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._new(self.value * o)

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.value)

    def inv(self) -> FieldElement:
        if self.value == 0:
            raise FieldError("inversion of zero")
        return self._new(pow(self.value, -1, self.prime))

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self * self._new(o).inv()

    def __pow__(self, exponent: int):
        if exponent < 0:
            return self.inv() ** (-exponent)
        return self._new(pow(self.value, exponent, self.prime))

    def __int__(self):
        return self.value

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.value == other.value and self.prime == other.prime
        if isinstance(other, int):
            return self.value == other % self.prime
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.prime))

    def __repr__(self):
        return f"FieldElement({self.value})"


def fe_arith(op: str, *operands: FieldElement) -> FieldElement:
    """Dispatch one of add/sub/mul/inv/neg/pow by name.

    ``pow`` takes a field element base and an integer exponent.
    """
    if op == "add":
        a, b = operands
        return a + b
    if op == "sub":
        a, b = operands
        return a - b
    if op == "mul":
        a, b = operands
        return a * b
    if op == "inv":
        (a,) = operands
        return a.inv()
    if op == "neg":
        (a,) = operands
        return -a
    if op == "pow":
        a, k = operands
        return a ** int(k)
    raise ValueError(f"unknown field operation {op!r}")


class VarKind(IntEnum):
    ONE = 0
    PUBLIC = 1
    WITNESS = 2


class R1CSError(Exception):
    pass


class WitnessError(R1CSError):
    """Raised when a witness value cannot be produced (e.g. out-of-range input)."""


class VarId:
    __slots__ = ("index", "kind")

    def __init__(self, index: int, kind: VarKind):
        self.index = index
        self.kind = kind

    def lc(self) -> LinearCombination:
        return LinearCombination({self.index: 1})

    def __add__(self, other):
        return self.lc() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.lc() - other

    def __rsub__(self, other):
        return (-self.lc()) + other

    def __mul__(self, k: int):
        return self.lc() * k

    __rmul__ = __mul__

    def __neg__(self):
        return -self.lc()

    def __eq__(self, other):
        return isinstance(other, VarId) and other.index == self.index

    def __hash__(self):
        return hash(self.index)

    def __repr__(self):
        return f"VarId({self.index}, {self.kind.name.lower()})"


ONE = VarId(0, VarKind.ONE)


class LinearCombination:
    """Sparse linear form over variables; ``terms`` maps index -> coefficient (raw int)."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[int, int] | None = None):
        self.terms = terms if terms is not None else {}

    @staticmethod
    def of(x) -> LinearCombination:
        if isinstance(x, LinearCombination):
            return x
        if isinstance(x, VarId):
            return LinearCombination({x.index: 1})
        if isinstance(x, int):
            return LinearCombination({0: x} if x else {})
        if isinstance(x, FieldElement):
            return LinearCombination({0: x.value} if x.value else {})
        raise TypeError(f"cannot build a linear combination from {type(x).__name__}")

    def __add__(self, other):
        if isinstance(other, int):
            if not other:
                return self
            t = dict(self.terms)
            t[0] = t.get(0, 0) + other
            return LinearCombination(t)
        t = dict(self.terms)
        for k, v in LinearCombination.of(other).terms.items():
            t[k] = t.get(k, 0) + v
        return LinearCombination(t)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-LinearCombination.of(other))

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return LinearCombination({k: -v for k, v in self.terms.items()})

    def __mul__(self, k):
        if isinstance(k, FieldElement):
            k = k.value
        if not isinstance(k, int):
            return NotImplemented
        if k == 0:
            return LinearCombination()
        return LinearCombination({i: v * k for i, v in self.terms.items()})

    __rmul__ = __mul__

    def normalized(self, prime: int) -> list[tuple[int, int]]:
        """Terms sorted by index with coefficients reduced and zeros dropped."""
        out = []
        for i in sorted(self.terms):
            c = self.terms[i] % prime
            if c:
                out.append((i, c))
        return out

    def __repr__(self):
        return f"LinearCombination({sorted(self.terms.items())})"


LC = LinearCombination


@dataclass
class Constraint:
    a: list[tuple[int, int]]
    b: list[tuple[int, int]]
    c: list[tuple[int, int]]


@dataclass
class Witness:
    """Full assignment indexed by variable; slot 0 is the constant one."""

    assignment: list[int]

    def __len__(self):
        return len(self.assignment)

    def __getitem__(self, i):
        return self.assignment[i]


@dataclass
class SatResult:
    ok: bool
    failing_index: int | None = None
    region: str | None = None
    label: str | None = None

    def __bool__(self):
        return self.ok


@dataclass
class Region:
    name: str
    first_constraint: int
    last_constraint: int
    first_var: int
    last_var: int

    @property
    def constraints(self) -> int:
        return self.last_constraint - self.first_constraint


class ConstraintSystem:
    def __init__(self, prime: int = DEFAULT_PRIME, prover: bool = True, debug: bool = False):
        self.prime = prime
        self.prover = prover
        self.debug = debug
        self.kinds = bytearray([VarKind.ONE])
        self.values: list[int | None] | None = [1] if prover else None
        self.num_public = 0
        self.num_witness = 0
        self.labels: dict[int, str] = {}
        self.constraint_labels: dict[int, str] = {}
        # flat storage: per constraint, three LCs; each LC is a run in vars/cids
        self.vars = array("I")
        self.cids = array("I")
        self.offsets = array("Q", [0])
        self.coeffs: list[int] = []
        self._coeff_ids: dict[int, int] = {}
        self.regions: list[Region] = []
        self._region_stack: list[tuple[str, int, int]] = []
        self._deferred: list[tuple[int, Callable[[], int]]] = []

    # allocation

    @property
    def num_vars(self) -> int:
        return len(self.kinds)

    @property
    def num_constraints(self) -> int:
        return (len(self.offsets) - 1) // 3

    def alloc(self, kind: VarKind | str, label: str = "", value=None) -> VarId:
        """Allocate a variable.

        ``value`` may be an int or a zero-argument callable; it is only
        evaluated in prover mode.
        """
        if isinstance(kind, str):
            kind = VarKind.PUBLIC if kind == "public" else VarKind.WITNESS
        if kind == VarKind.ONE:
            raise R1CSError("the constant-one variable is implicit")
        idx = len(self.kinds)
        self.kinds.append(kind)
        if kind == VarKind.PUBLIC:
            self.num_public += 1
        else:
            self.num_witness += 1
        if self.prover:
            if callable(value):
                value = value()
            self.values.append(None if value is None else value % self.prime)
        if label and (self.debug or kind == VarKind.PUBLIC):
            self.labels[idx] = label
        return VarId(idx, kind)

    def public(self, label: str = "", value=None) -> VarId:
        return self.alloc(VarKind.PUBLIC, label, value)

    def witness(self, value=None, label: str = "") -> VarId:
        return self.alloc(VarKind.WITNESS, label, value)

    def set_value(self, var: VarId, value: int) -> None:
        if self.prover:
            self.values[var.index] = value % self.prime

    def defer(self, var: VarId, fn: Callable[[], int]) -> None:
        """Assign ``var`` later, once :meth:`resolve_deferred` runs (used for challenge-dependent hints)."""
        if self.prover:
            self._deferred.append((var.index, fn))

    def resolve_deferred(self) -> None:
        for idx, fn in self._deferred:
            self.values[idx] = fn() % self.prime
        self._deferred.clear()

    # values

    def val(self, x) -> int | None:
        """Current value of a variable or linear combination (prover mode), else None."""
        if not self.prover:
            return None
        if isinstance(x, VarId):
            return self.values[x.index]
        if isinstance(x, int):
            return x % self.prime
        vals = self.values
        acc = 0
        for i, c in LinearCombination.of(x).terms.items():
            v = vals[i]
            if v is None:
                return None
            acc += c * v
        return acc % self.prime

    def signed(self, x) -> int | None:
        v = self.val(x)
        if v is None:
            return None
        return v - self.prime if v > self.prime // 2 else v

    # constraints

    def _push_lc(self, lc: LinearCombination) -> None:
        n = len(self.kinds)
        ids = self._coeff_ids
        p = self.prime
        for i in sorted(lc.terms):
            c = lc.terms[i] % p
            if not c:
                continue
            if i >= n or i < 0:
                raise R1CSError(f"constraint references unallocated variable {i}")
            cid = ids.get(c)
            if cid is None:
                cid = ids[c] = len(self.coeffs)
                self.coeffs.append(c)
            self.vars.append(i)
            self.cids.append(cid)
        self.offsets.append(len(self.vars))

    def enforce(self, a, b, c, label: str | None = None) -> None:
        """Append the constraint ``a * b = c``."""
        a = LinearCombination.of(a)
        b = LinearCombination.of(b)
        c = LinearCombination.of(c)
        mark = len(self.vars)
        try:
            self._push_lc(a)
            self._push_lc(b)
            self._push_lc(c)
        except R1CSError:
            # roll back the partial row
            while len(self.offsets) % 3 != 1:
                self.offsets.pop()
            del self.vars[mark:]
            del self.cids[mark:]
            raise
        if label and self.debug:
            self.constraint_labels[self.num_constraints - 1] = label

    def enforce_equal(self, x, y, label: str | None = None) -> None:
        self.enforce(LinearCombination.of(x) - y, ONE, 0, label)

    def constraint(self, k: int) -> Constraint:
        coeffs, vs, cs, off = self.coeffs, self.vars, self.cids, self.offsets
        lcs = []
        for j in range(3):
            lo, hi = off[3 * k + j], off[3 * k + j + 1]
            lcs.append([(vs[t], coeffs[cs[t]]) for t in range(lo, hi)])
        return Constraint(*lcs)

    @property
    def constraints(self) -> list[Constraint]:
        return [self.constraint(k) for k in range(self.num_constraints)]

    # regions

    @contextmanager
    def region(self, name: str):
        full = "/".join([r[0] for r in self._region_stack] + [name])
        self._region_stack.append((name, self.num_constraints, self.num_vars))
        try:
            yield
        finally:
            _, c0, v0 = self._region_stack.pop()
            self.regions.append(Region(full, c0, self.num_constraints, v0, self.num_vars))

    def region_of(self, k: int) -> str | None:
        """Innermost region containing constraint ``k``."""
        best = None
        for r in self.regions:
            if r.first_constraint <= k < r.last_constraint:
                if best is None or r.constraints < best.constraints:
                    best = r
        return best.name if best else None

    def constraints_by_region(self, depth: int = 1) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.regions:
            parts = r.name.split("/")
            if len(parts) == depth:
                out[r.name] = out.get(r.name, 0) + r.constraints
        return out

    # witness / checking

    def witness_assignment(self) -> Witness:
        if not self.prover:
            raise R1CSError("structure-only system carries no witness")
        if self._deferred:
            raise R1CSError("deferred witness values are unresolved")
        missing = [i for i, v in enumerate(self.values) if v is None]
        if missing:
            raise WitnessError(f"{len(missing)} variables unassigned, first is {missing[0]}")
        return Witness(list(self.values))

    def public_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == VarKind.PUBLIC]

    def public_values(self) -> list[int]:
        return [self.values[i] for i in self.public_indices()]

    def digest(self) -> bytes:
        """SHA-256 of the structure (allocation kinds, rows, coefficient table)."""
        h = hashlib.sha256()
        h.update(b"zkti-layout-v1")
        h.update(self.prime.to_bytes(32, "big"))
        h.update(len(self.kinds).to_bytes(8, "little"))
        h.update(bytes(self.kinds))
        for arr in (self.offsets, self.vars, self.cids):
            h.update(len(arr).to_bytes(8, "little"))
            h.update(arr.tobytes())
        h.update(len(self.coeffs).to_bytes(8, "little"))
        for c in self.coeffs:
            h.update(c.to_bytes(32, "big"))
        return h.digest()


def enforce(cs: ConstraintSystem, a, b, c) -> None:
    cs.enforce(a, b, c)


def alloc(cs: ConstraintSystem, kind, label: str = "", value=None) -> VarId:
    return cs.alloc(kind, label, value)


def first_failure(cs: ConstraintSystem, x: list[int], start: int = 0, stop: int | None = None) -> int | None:
    coeffs, vs, cids, off = cs.coeffs, cs.vars, cs.cids, cs.offsets
    p = cs.prime
    stop = cs.num_constraints if stop is None else stop
    for k in range(start, stop):
        o = 3 * k
        a0, a1, b1, c1 = off[o], off[o + 1], off[o + 2], off[o + 3]
        va = 0
        for t in range(a0, a1):
            va += coeffs[cids[t]] * x[vs[t]]
        if va:
            vb = 0
            for t in range(a1, b1):
                vb += coeffs[cids[t]] * x[vs[t]]
            prod = va * vb
        else:
            prod = 0
        vc = 0
        for t in range(b1, c1):
            vc += coeffs[cids[t]] * x[vs[t]]
        if (prod - vc) % p:
            return k
    return None


def is_satisfied(cs: ConstraintSystem, public_inputs: Iterable, witness: Witness) -> SatResult:
    """Check every constraint; on failure report the earliest failing row and its region."""
    x = witness.assignment
    if len(x) != cs.num_vars:
        raise R1CSError(f"witness length {len(x)} does not match {cs.num_vars} allocated variables")
    p = cs.prime
    if x[0] % p != 1:
        return SatResult(False, None, None, "constant-one slot is not 1")
    pub = [int(v) % p for v in public_inputs]
    idx = cs.public_indices()
    if len(pub) != len(idx):
        raise R1CSError(f"expected {len(idx)} public inputs, got {len(pub)}")
    for i, v in zip(idx, pub):
        if x[i] % p != v:
            return SatResult(False, None, None, f"public input slot {i} disagrees with witness")
    k = first_failure(cs, x)
    if k is None:
        return SatResult(True)
    return SatResult(False, k, cs.region_of(k), cs.constraint_labels.get(k))
