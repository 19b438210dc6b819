"""Setup / commit / prove / verify for one inference iteration.

A proof covers one iteration of one algorithm: the circuit opens every
worker commitment, reruns the truth update on the committed answers,
opens the truth commitment, and reruns the quality update whose result is
published. The mock backend ships the full witness and checks it directly;
it is complete and sound for testing but NOT zero-knowledge. The external
backend only validates bundle structure and leaves proof checking to
whatever system consumes the witness-stripped export.

Circuit shape depends only on (algorithm, n, m, l, w, prior constants),
never on the data, so a verifier can rebuild it and compare digests.
"""

from __future__ import annotations

import hashlib
import io
import secrets
import struct
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache

from . import float_circuits as F
from .commitment import SpongeParams, default_params, sponge_hash_native, synth_open
from .field_r1cs import (
    DEFAULT_PRIME,
    LC,
    ONE,
    ConstraintSystem,
    VarKind,
    Witness,
    check_prime_for_precision,
    is_satisfied,
)
from .float_circuits import Float, FloatVar
from .gadgets import compare, mul, select
from .truth_inference import (
    Algorithm,
    AnswerMatrix,
    PriorFactors,
    complement,
    half_thresholds,
    quality_from_ratio,
    update_quality,
    update_truth,
    zc_eps,
)

MAGIC = b"zkb1"
FORMAT_VERSION = 1
ALG_CODES = {Algorithm.MV: 0, Algorithm.CRH: 1, Algorithm.ZC: 2}


class ProtocolError(Exception):
    pass


class Reason(str, Enum):
    OK = "ok"
    MALFORMED = "malformed bundle"
    CHECKSUM = "checksum mismatch"
    VERSION = "unsupported format version"
    WITNESS_REQUIRED = "witness required"
    LAYOUT_MISMATCH = "circuit layout mismatch"
    CHALLENGE_MISMATCH = "challenge mismatch"
    PUBLIC_INPUT_MISMATCH = "public input mismatch"
    INVALID_PUBLIC_FLOAT = "invalid public float"
    UNSATISFIED = "constraints unsatisfied"


class BundleError(ProtocolError):
    def __init__(self, reason: Reason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


# setup


@dataclass(frozen=True)
class PublicParams:
    prime: int = DEFAULT_PRIME
    w: int = 23
    sponge: SpongeParams = field(default_factory=default_params, repr=False)
    eta: PriorFactors = field(default_factory=PriorFactors)
    backend: str = "mock"

    @property
    def delta(self) -> Fraction:
        return Fraction(1, 1 << (self.w - 1))


def setup(config: dict | None = None, **overrides) -> PublicParams:
    """Validate a configuration (w, prime, eta fields, backend) into public parameters."""
    cfg = dict(config or {})
    cfg.update(overrides)
    prime = int(cfg.pop("prime", DEFAULT_PRIME))
    w = int(cfg.pop("w", 23))
    backend = cfg.pop("backend", "mock")
    check_prime_for_precision(prime, w)
    F.Precision(w)
    if backend not in ("mock", "external"):
        raise ProtocolError(f"unknown backend {backend!r}")
    sponge = default_params()
    if sponge.prime != prime:
        raise ProtocolError("bundled sponge parameters are defined for the default prime only")
    eta = cfg.pop("eta", None)
    eta_fields = {k: cfg.pop(k) for k in ("q0", "zc_q0", "eps_smooth", "max_iter", "tol") if k in cfg}
    if cfg:
        raise ProtocolError(f"unknown configuration keys: {sorted(cfg)}")
    if eta is None:
        eta = PriorFactors(**{k: (Fraction(v) if k in ("q0", "zc_q0", "eps_smooth") else v) for k, v in eta_fields.items()})
    return PublicParams(prime, w, sponge, eta, backend)


# randomness and commitments


class Drbg:
    """SHA-256 counter-mode generator; deterministic for a given seed."""

    def __init__(self, seed: bytes | int | str):
        if isinstance(seed, int):
            seed = seed.to_bytes(32, "big", signed=False)
        elif isinstance(seed, str):
            seed = seed.encode()
        self.key = hashlib.sha256(b"zkti-drbg" + seed).digest()
        self.counter = 0

    def block(self) -> bytes:
        self.counter += 1
        return hashlib.sha256(self.key + self.counter.to_bytes(8, "big")).digest()

    def below(self, bound: int) -> int:
        nbits = bound.bit_length()
        while True:
            v = int.from_bytes(self.block(), "big") >> (256 - nbits)
            if v < bound:
                return v


def field_randomness(prime: int, rng: Drbg | None = None) -> int:
    return rng.below(prime) if rng is not None else secrets.randbelow(prime)


def answer_message(vector: list[int | None]) -> list[int]:
    """Worker answers as field elements: v + 1 for an answer, 0 for none."""
    return [0 if v is None else v + 1 for v in vector]


def commit_answers(pp: PublicParams, vector: list[int | None], randomness: int) -> int:
    return sponge_hash_native(pp.sponge, [randomness] + answer_message(vector))


def commit_truth(pp: PublicParams, labels: list[int], randomness: int) -> int:
    return sponge_hash_native(pp.sponge, [randomness] + list(labels))


@dataclass
class CommitmentSet:
    workers: list[int]
    truth: int | None
    worker_randomness: list[int]
    truth_randomness: int


def make_randomness(pp: PublicParams, m: int, rng: Drbg | None = None) -> tuple[list[int], int]:
    return [field_randomness(pp.prime, rng) for _ in range(m)], field_randomness(pp.prime, rng)


def commit_all(pp: PublicParams, V: AnswerMatrix, labels: list[int] | None, randomness) -> CommitmentSet:
    wr, tr = randomness
    coms = [commit_answers(pp, V.worker_vector(j), wr[j]) for j in range(V.m)]
    truth = commit_truth(pp, labels, tr) if labels is not None else None
    return CommitmentSet(coms, truth, list(wr), tr)


# layout and synthesis


@dataclass
class IterationInputs:
    """Prover-side data for one iteration."""

    V: AnswerMatrix
    q_in: list[Float] | None
    worker_randomness: list[int]
    truth_randomness: int
    labels: list[int]
    q_out: list[Float] | None
    complements: list[Float] | None = None


@dataclass
class CircuitLayout:
    public_slots: dict[str, list[int]]
    regions: dict[str, tuple[int, int]]
    constraints_by_region: dict[str, int]
    num_constraints: int
    num_vars: int


@dataclass(frozen=True)
class Dims:
    n: int
    m: int
    l: int


class _Builder:
    def __init__(self, pp: PublicParams, alg: Algorithm, dims: Dims, inputs: IterationInputs | None,
                 challenges: tuple[int, int] | None):
        self.pp = pp
        self.alg = alg
        self.d = dims
        self.w = pp.w
        self.inp = inputs
        self.cs = ConstraintSystem(pp.prime, prover=inputs is not None)
        self.challenges = challenges
        self.slots: dict[str, list[int]] = {}

    def v(self, fn):
        """Witness value thunk, only evaluated in prover mode."""
        return fn if self.inp is not None else None

    def public_slot(self, name: str, values: list) -> list:
        vs = [self.cs.public(name, v) for v in values]
        self.slots[name] = [x.index for x in vs]
        return vs

    def build(self):
        cs, d, inp, alg, w = self.cs, self.d, self.inp, self.alg, self.w
        prover = inp is not None
        none_m = [None] * d.m
        # public inputs: commitments, challenges, Q in, Q out
        if prover:
            com_vals = [commit_answers(self.pp, inp.V.worker_vector(j), inp.worker_randomness[j]) for j in range(d.m)]
            truth_val = commit_truth(self.pp, inp.labels, inp.truth_randomness)
        else:
            com_vals, truth_val = none_m, None
        self.coms = self.public_slot("com_workers", com_vals)
        (self.com_truth,) = self.public_slot("com_truth", [truth_val])
        ch = self.challenges if (prover and self.challenges) else (None, None)
        self.r, self.z = self.public_slot("challenges", list(ch))
        if alg != Algorithm.MV:
            qin = inp.q_in if prover else none_m
            flat = []
            for q in qin:
                flat += [None, None, None] if q is None else [q.s, q.e, int(q.is_zero)]
            qv = self.public_slot("q_in", flat)
            self.q_in_raw = [FloatVar(qv[3 * j], qv[3 * j + 1], qv[3 * j + 2], w) for j in range(d.m)]
            qout = inp.q_out if prover else none_m
            flat = []
            for q in qout:
                flat += [None, None] if q is None else [q.s, q.e]
            qo = self.public_slot("q_out", flat)
            self.q_out_pub = [(qo[2 * j], qo[2 * j + 1]) for j in range(d.m)]

        with cs.region("openings"):
            self._openings()
        with cs.region("truth"):
            if alg == Algorithm.MV:
                self._mv_truth()
            elif alg == Algorithm.CRH:
                self._crh_truth()
            else:
                self._zc_truth()
        with cs.region("truth_opening"):
            synth_open(cs, self.com_truth, self.label_vars, self.truth_rand, self.pp.sponge)
        if alg != Algorithm.MV:
            with cs.region("quality"):
                if alg == Algorithm.CRH:
                    self._crh_quality()
                else:
                    self._zc_quality()
        return cs

    # region 1: decode and open answers

    def _openings(self):
        cs, d, inp = self.cs, self.d, self.inp
        prover = inp is not None
        self.o = [[None] * d.m for _ in range(d.n)]  # one-hot lists
        self.p = [[None] * d.m for _ in range(d.n)]
        for j in range(d.m):
            with cs.region("decode"):
                msg = []
                for i in range(d.n):
                    ans = inp.V.answer(i, j) if prover else None
                    bits = []
                    for k in range(d.l):
                        b = cs.witness(None if not prover else int(ans == k))
                        cs.enforce(b, ONE - b, 0)
                        bits.append(b)
                    pres = LC()
                    for b in bits:
                        pres = pres + b
                    cs.enforce(pres, ONE - pres, 0)
                    self.o[i][j] = bits
                    self.p[i][j] = pres
                    val = pres
                    for k in range(1, d.l):
                        val = val + bits[k] * k
                    msg.append(val)
            rand = cs.witness(inp.worker_randomness[j] if prover else None)
            with cs.region("commitments"):
                synth_open(cs, self.coms[j], msg, rand, self.pp.sponge)
        self.truth_rand = cs.witness(inp.truth_randomness if prover else None)
        self.label_vars = [cs.witness(inp.labels[i] if prover else None) for i in range(d.n)]
        if self.alg != Algorithm.MV:
            with cs.region("q_in"):
                self.q_in = [F.constrain_float(cs, q) for q in self.q_in_raw]
                if self.alg == Algorithm.ZC:
                    for q in self.q_in:
                        cs.enforce(q.z, ONE, 0)
                    self.q_in = [FloatVar(q.s, q.e, 0, q.w) for q in self.q_in]

    def _bind_label(self, i: int, label_lc) -> None:
        self.cs.enforce_equal(self.label_vars[i], label_lc)

    # MV

    def _mv_truth(self):
        cs, d = self.cs, self.d
        width = max(1, d.m.bit_length())
        for i in range(d.n):
            counts = []
            for k in range(d.l):
                c = LC()
                for j in range(d.m):
                    c = c + self.o[i][j][k]
                counts.append(c)
            best, label = counts[0], LC()
            for k in range(1, d.l):
                gt = ONE - LC.of(compare(cs, counts[k], best, width))
                if k < d.l - 1:
                    best = LC.of(select(cs, gt, counts[k], best))
                label = LC.of(select(cs, gt, LC.of(k), label))
            self._bind_label(i, label)

    # CRH

    def _crh_truth(self):
        cs, d, w = self.cs, self.d, self.w
        thresholds = [F.const_float(t) for t in half_thresholds(d.l, w)]
        choice = [F.float_from_int(k, w) for k in range(d.l)]
        self.onehot_truth = []
        for i in range(d.n):
            num = den = None
            for j in range(d.m):
                bits, pres = self.o[i][j], self.p[i][j]
                # value of the answer as a float, linear in the one-hot bits
                vs, ve, vz = LC(), LC(), LC.of(ONE)
                for k in range(1, d.l):
                    vs = vs + bits[k] * choice[k].s
                    ve = ve + bits[k] * choice[k].e
                    vz = vz - bits[k]
                vf = FloatVar(vs, ve, vz, w)
                q = self.q_in[j]
                term = F.float_mul(cs, q, vf)
                # weight counts only when the worker answered
                wz = mul(cs, pres, q.z)
                wq = FloatVar(mul(cs, pres, q.s), mul(cs, pres, q.e), ONE - pres + wz, w)
                num = term if num is None else F.float_add(cs, num, term, self.r, self.z)
                den = wq if den is None else F.float_add(cs, den, wq, self.r, self.z)
            soft = F.float_div(cs, num, den)
            g = [ONE - LC.of(F.synth_float_leq(cs, soft, t)) for t in thresholds]
            label = LC()
            for gk in g:
                label = label + gk
            self._bind_label(i, label)
            t = [ONE - g[0]] + [g[k] - g[k + 1] for k in range(len(g) - 1)] + [g[-1]]
            self.onehot_truth.append(t)

    def _crh_quality(self):
        cs, d, w = self.cs, self.d, self.w
        eps = F.float_encode(self.pp.eta.eps_smooth, w)
        dist = []
        for j in range(d.m):
            dj = LC()
            for i in range(d.n):
                agree = LC()
                for k in range(d.l):
                    agree = agree + mul(cs, self.o[i][j][k], self.onehot_truth[i][k])
                dj = dj + self.p[i][j] - agree
            dist.append(dj)
        total = LC()
        for dj in dist:
            total = total + dj

        def smoothed(x, bound):
            f = F.int_to_float(cs, x, bound, w)
            # a zero count becomes eps; zero floats are canonical so this is linear
            return FloatVar(LC.of(f.s) + LC.of(f.z) * eps.s, LC.of(f.e) + LC.of(f.z) * eps.e, 0, w)

        num = smoothed(total, d.n * d.m)
        for j in range(d.m):
            ratio = F.float_div_core(cs, num, smoothed(dist[j], d.n))
            s_pub, e_pub = self.q_out_pub[j]
            cs.enforce_equal(ratio.s, s_pub)
            cs.enforce_equal(ratio.e, e_pub)

    # ZC

    def _zc_truth(self):
        cs, d, w, inp = self.cs, self.d, self.w, self.inp
        one = F.float_encode(1, w)
        lo = F.const_float(F.float_encode(1 - 2 * self.pp.delta, w))
        hi = F.const_float(F.float_encode(1 + self.pp.delta, w))
        self.comp = []
        with cs.region("complements"):
            for j in range(d.m):
                c = F.alloc_float(cs, inp.complements[j] if inp else None, w, zero_flag=False)
                c = F.constrain_float(cs, c)
                total = F.float_add_core(cs, self.q_in[j], c, self.r, self.z)
                F.assert_float_leq(cs, lo, total)
                F.assert_float_leq(cs, total, hi)
                self.comp.append(c)
        self.post = []
        for i in range(d.n):
            prods = []
            for k in range(d.l):
                acc = None
                for j in range(d.m):
                    o, p = self.o[i][j][k], self.p[i][j]
                    q, c = self.q_in[j], self.comp[j]
                    # factor = q if answered k, 1 - q if answered otherwise, 1 if unanswered
                    po = p - o
                    fs = LC.of(one.s) + LC.of(mul(cs, o, LC.of(q.s) - one.s)) + mul(cs, po, LC.of(c.s) - one.s)
                    fe = LC.of(one.e) + LC.of(mul(cs, o, LC.of(q.e) - one.e)) + mul(cs, po, LC.of(c.e) - one.e)
                    f = FloatVar(fs, fe, 0, w)
                    acc = f if acc is None else F.float_mul_core(cs, acc, f)
                prods.append(acc)
            total = prods[0]
            for pk in prods[1:]:
                total = F.float_add_core(cs, total, pk, self.r, self.z)
            post = [F.float_div_core(cs, pk, total) for pk in prods]
            best, label = post[0], LC()
            for k in range(1, d.l):
                gt = ONE - LC.of(F.synth_float_leq(cs, post[k], best))
                if k < d.l - 1:
                    best = F.select_float(cs, gt, post[k], best)
                label = LC.of(select(cs, gt, LC.of(k), label))
            self._bind_label(i, label)
            self.post.append(post)

    def _zc_quality(self):
        cs, d, w = self.cs, self.d, self.w
        eps = zc_eps(w)
        lo = F.const_float(eps)
        hi = F.const_float(F.float_encode(1 - F.float_decode(eps), w))
        for j in range(d.m):
            acc = None
            count = LC()
            for i in range(d.n):
                count = count + self.p[i][j]
                for k in range(d.l):
                    o = self.o[i][j][k]
                    pr = self.post[i][k]
                    term = FloatVar(mul(cs, o, pr.s), mul(cs, o, pr.e), ONE - o, w)
                    acc = term if acc is None else F.float_add(cs, acc, term, self.r, self.z)
            q = F.float_div(cs, acc, F.int_to_float(cs, count, d.n, w))
            over = ONE - LC.of(F.synth_float_leq(cs, q, hi))
            q = F.select_float(cs, over, hi, q)
            under = ONE - LC.of(F.synth_float_leq(cs, lo, q))
            q = F.select_float(cs, under, lo, q)
            s_pub, e_pub = self.q_out_pub[j]
            cs.enforce(q.z, ONE, 0)
            cs.enforce_equal(q.s, s_pub)
            cs.enforce_equal(q.e, e_pub)


def synth_iteration(pp: PublicParams, alg, dims, challenges=None, inputs: IterationInputs | None = None):
    """Build the iteration circuit; structure-only when ``inputs`` is None.

    Returns ``(cs, layout)``.
    """
    alg = Algorithm(alg)
    dims = dims if isinstance(dims, Dims) else Dims(*dims)
    b = _Builder(pp, alg, dims, inputs, challenges)
    cs = b.build()
    layout = CircuitLayout(
        public_slots=b.slots,
        regions={r.name: (r.first_constraint, r.last_constraint) for r in cs.regions if "/" not in r.name},
        constraints_by_region=_region_totals(cs),
        num_constraints=cs.num_constraints,
        num_vars=cs.num_vars,
    )
    return cs, layout


def _region_totals(cs: ConstraintSystem) -> dict[str, int]:
    out: dict[str, int] = {}
    for r in cs.regions:
        if "/" in r.name:
            continue
        out[r.name] = out.get(r.name, 0) + r.constraints
    return out


@lru_cache(maxsize=16)
def _expected_structure(pp: PublicParams, alg: Algorithm, dims: Dims) -> tuple[bytes, int, int]:
    cs, layout = synth_iteration(pp, alg, dims)
    return cs.digest(), cs.num_public, layout.num_constraints


def expected_layout_digest(pp: PublicParams, alg, dims) -> bytes:
    dims = dims if isinstance(dims, Dims) else Dims(*dims)
    return _expected_structure(pp, Algorithm(alg), dims)[0]


# challenges


def _digest_elements(digest: bytes) -> list[int]:
    return [int.from_bytes(digest[:16], "big"), int.from_bytes(digest[16:], "big")]


def derive_challenges(pp: PublicParams, meta: "BundleMeta", layout_digest: bytes, publics: dict[str, list[int]]) -> tuple[int, int]:
    """Fiat-Shamir: r and z are sponge outputs over the public transcript."""
    transcript = [ALG_CODES[meta.alg], meta.n, meta.m, meta.l, meta.w, meta.iteration]
    transcript += _digest_elements(layout_digest)
    for name in ("com_workers", "com_truth", "q_in", "q_out"):
        transcript += [x % pp.prime for x in publics.get(name, [])]
    r = sponge_hash_native(pp.sponge, [int.from_bytes(b"zkti/r", "big")] + transcript)
    z = sponge_hash_native(pp.sponge, [int.from_bytes(b"zkti/z", "big")] + transcript)
    return r, z


# bundles


@dataclass
class BundleMeta:
    alg: Algorithm
    n: int
    m: int
    l: int
    w: int
    iteration: int = 0


@dataclass
class ProofBundle:
    meta: BundleMeta
    layout_digest: bytes
    public_inputs: list[int]
    cs: ConstraintSystem
    witness: Witness | None
    layout: CircuitLayout | None = None

    @property
    def challenges(self) -> tuple[int, int]:
        s = slot_ranges(self.meta)
        r_idx = s["challenges"][0]
        return self.public_inputs[r_idx], self.public_inputs[r_idx + 1]

    def public(self, name: str) -> list[int]:
        lo, hi = slot_ranges(self.meta)[name]
        return self.public_inputs[lo:hi]


def slot_ranges(meta: BundleMeta) -> dict[str, tuple[int, int]]:
    """Positions of each named group inside the public-input vector."""
    m = meta.m
    sizes = [("com_workers", m), ("com_truth", 1), ("challenges", 2)]
    if Algorithm(meta.alg) != Algorithm.MV:
        sizes += [("q_in", 3 * m), ("q_out", 2 * m)]
    out, pos = {}, 0
    for name, size in sizes:
        out[name] = (pos, pos + size)
        pos += size
    return out


def _publics_by_name(meta: BundleMeta, values: list[int]) -> dict[str, list[int]]:
    return {k: values[a:b] for k, (a, b) in slot_ranges(meta).items()}


def floats_from_public(values: list[int], w: int, prime: int, with_flag: bool) -> list[Float]:
    """Decode public (s, e[, z]) triples; raises ValueError on non-canonical encodings."""
    step = 3 if with_flag else 2
    out = []
    for k in range(0, len(values), step):
        s = values[k]
        e = values[k + 1]
        e = e - prime if e > prime // 2 else e
        zf = values[k + 2] if with_flag else 0
        if zf not in (0, 1):
            raise ValueError("zero flag is not a bit")
        if zf:
            if s or e:
                raise ValueError("zero float is not canonical")
            out.append(F.zero(w))
        else:
            out.append(Float(s, e, False, w))
    return out


def floats_to_public(qs: list[Float], with_flag: bool) -> list[int]:
    out = []
    for q in qs:
        out += [q.s, q.e] + ([int(q.is_zero)] if with_flag else [])
    return out


def native_iteration(pp: PublicParams, alg, V: AnswerMatrix, q_in: list[Float] | None):
    alg = Algorithm(alg)
    truth = update_truth(alg, V, q_in)
    quality = update_quality(alg, V, truth, pp.eta)
    return truth, quality


def prove(pp: PublicParams, alg, V: AnswerMatrix, randomness_set, q_in: list[Float] | None = None,
          iteration: int = 0) -> ProofBundle:
    """Prove one iteration: native run, synthesis, Fiat-Shamir challenges, self-check."""
    alg = Algorithm(alg)
    V.check_coverage()
    if alg != Algorithm.MV and q_in is None:
        q_in = pp.eta.initial_quality(alg, V.m, pp.w)
    if alg == Algorithm.MV:
        q_in = None
    truth, quality = native_iteration(pp, alg, V, q_in)
    q_out = None
    if alg == Algorithm.CRH:
        q_out = quality.ratio
    elif alg == Algorithm.ZC:
        q_out = quality.q
    wr, tr = randomness_set
    inputs = IterationInputs(V, q_in, list(wr), tr, truth.labels, q_out,
                             [complement(q) for q in q_in] if alg == Algorithm.ZC else None)
    return assemble(pp, alg, inputs, iteration)


def assemble(pp: PublicParams, alg, inputs: IterationInputs, iteration: int = 0, check: bool = True) -> ProofBundle:
    """Synthesize with ``inputs`` as the claimed witness, fix the challenges and package.

    With ``check=False`` an unsatisfying bundle is returned instead of raising,
    which is how tests play a cheating prover.
    """
    alg = Algorithm(alg)
    V = inputs.V
    dims = Dims(V.n, V.m, V.l)
    cs, layout = synth_iteration(pp, alg, dims, inputs=inputs)
    digest = cs.digest()
    meta = BundleMeta(alg, V.n, V.m, V.l, pp.w, iteration)
    publics = _publics_by_name(meta, cs.public_values())
    r, z = derive_challenges(pp, meta, digest, publics)
    r_var, z_var = layout.public_slots["challenges"]
    cs.values[r_var] = r
    cs.values[z_var] = z
    cs.resolve_deferred()
    witness = cs.witness_assignment()
    if check:
        res = is_satisfied(cs, cs.public_values(), witness)
        if not res.ok:
            raise ProtocolError(f"internal error: honest witness fails constraint {res.failing_index} in {res.region}")
    return ProofBundle(meta, digest, cs.public_values(), cs, witness, layout)


@dataclass
class VerifyResult:
    ok: bool
    reason: Reason
    detail: str = ""
    q: list[Float] | None = None
    labels_commitment: int | None = None

    def __bool__(self):
        return self.ok


def verify(pp: PublicParams, bundle: ProofBundle, backend: str | None = None, expected_commitments: list[int] | None = None,
           expected_q_in: list[Float] | None = None) -> VerifyResult:
    """Check a bundle; on acceptance also returns the qualities the verifier derives (ln applied for CRH)."""
    backend = backend or pp.backend
    meta = bundle.meta
    if meta.w != pp.w or bundle.cs.prime != pp.prime:
        return VerifyResult(False, Reason.LAYOUT_MISMATCH, "precision or field differs from the public parameters")
    alg = Algorithm(meta.alg)
    try:
        dims = Dims(meta.n, meta.m, meta.l)
        exp_digest, exp_public, _ = _expected_structure(pp, alg, dims)
    except Exception as exc:  # nonsense dimensions
        return VerifyResult(False, Reason.MALFORMED, str(exc))
    if bundle.cs.digest() != exp_digest or bundle.layout_digest != exp_digest:
        return VerifyResult(False, Reason.LAYOUT_MISMATCH, "constraint system differs from the canonical circuit")
    if len(bundle.public_inputs) != exp_public:
        return VerifyResult(False, Reason.MALFORMED, "wrong number of public inputs")
    publics = _publics_by_name(meta, bundle.public_inputs)
    q_pub = None
    if alg != Algorithm.MV:
        try:
            q_in = floats_from_public(publics["q_in"], pp.w, pp.prime, True)
            q_pub = floats_from_public(publics["q_out"], pp.w, pp.prime, False)
        except (ValueError, F.FloatError) as exc:
            return VerifyResult(False, Reason.INVALID_PUBLIC_FLOAT, str(exc))
        if meta.iteration == 0 and expected_q_in is None:
            expected_q_in = pp.eta.initial_quality(alg, meta.m, pp.w)
        if expected_q_in is not None and q_in != list(expected_q_in):
            return VerifyResult(False, Reason.PUBLIC_INPUT_MISMATCH, "Q input differs from the expected prior")
    if expected_commitments is not None and publics["com_workers"] != [c % pp.prime for c in expected_commitments]:
        return VerifyResult(False, Reason.PUBLIC_INPUT_MISMATCH, "worker commitments differ from the published ones")
    r, z = derive_challenges(pp, meta, exp_digest, publics)
    if publics["challenges"] != [r, z]:
        return VerifyResult(False, Reason.CHALLENGE_MISMATCH)
    if backend == "mock":
        if bundle.witness is None:
            return VerifyResult(False, Reason.WITNESS_REQUIRED, "the mock backend checks the witness directly")
        try:
            res = is_satisfied(bundle.cs, bundle.public_inputs, bundle.witness)
        except Exception as exc:
            return VerifyResult(False, Reason.MALFORMED, str(exc))
        if not res.ok:
            where = f"constraint {res.failing_index}" if res.failing_index is not None else (res.label or "")
            return VerifyResult(False, Reason.UNSATISFIED, f"{where} ({res.region})" if res.region else where)
    elif backend != "external":
        return VerifyResult(False, Reason.MALFORMED, f"unknown backend {backend!r}")
    q = None
    if alg == Algorithm.CRH:
        q = [quality_from_ratio(x) for x in q_pub]
    elif alg == Algorithm.ZC:
        q = q_pub
    return VerifyResult(True, Reason.OK, q=q, labels_commitment=publics["com_truth"][0])




# canonical encoding


def export_bundle(bundle: ProofBundle, include_witness: bool = True) -> bytes:
    """Serialize to the zkb1 container: little-endian sections, SHA3-256 trailer.

    Public variables are always allocated first, so the variable kinds are
    implied by (num_vars, public count) and are not stored.
    """
    meta, cs = bundle.meta, bundle.cs
    out = io.BytesIO()
    w32 = struct.Struct("<I").pack
    out.write(MAGIC)
    out.write(struct.pack("<H", FORMAT_VERSION))
    out.write(cs.prime.to_bytes(32, "big"))
    out.write(struct.pack("<BBIII", meta.w, ALG_CODES[Algorithm(meta.alg)], meta.n, meta.m, meta.l))
    out.write(struct.pack("<II", meta.iteration, cs.num_vars))
    out.write(bundle.layout_digest)
    out.write(w32(len(bundle.public_inputs)))
    out.write(b"".join(v.to_bytes(32, "big") for v in bundle.public_inputs))
    out.write(w32(cs.num_constraints))
    coeff_bytes = [c.to_bytes(32, "big") for c in cs.coeffs]
    vs, cids, off = cs.vars, cs.cids, cs.offsets
    parts = []
    for row in range(3 * cs.num_constraints):
        lo, hi = off[row], off[row + 1]
        parts.append(w32(hi - lo))
        for t in range(lo, hi):
            parts.append(w32(vs[t]))
            parts.append(coeff_bytes[cids[t]])
    out.write(b"".join(parts))
    if include_witness and bundle.witness is not None:
        out.write(b"\x01")
        x = bundle.witness.assignment
        out.write(w32(len(x)))
        out.write(b"".join(v.to_bytes(32, "big") for v in x))
    else:
        out.write(b"\x00")
    body = out.getvalue()
    return body + hashlib.sha3_256(body).digest()


def strip_witness(bundle: ProofBundle) -> ProofBundle:
    return ProofBundle(bundle.meta, bundle.layout_digest, bundle.public_inputs, bundle.cs, None, bundle.layout)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise BundleError(Reason.MALFORMED, "truncated bundle")
        b = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def element(self, prime: int) -> int:
        v = int.from_bytes(self.take(32), "big")
        if v >= prime:
            raise BundleError(Reason.MALFORMED, "field element out of range")
        return v


def import_bundle(data: bytes) -> ProofBundle:
    """Parse a zkb1 container; raises :class:`BundleError` with a reason code."""
    if len(data) < 4 + 2 + 32 + 32:
        raise BundleError(Reason.MALFORMED, "too short")
    body, check = data[:-32], data[-32:]
    # the trailer covers every byte, the magic included
    if hashlib.sha3_256(body).digest() != check:
        raise BundleError(Reason.CHECKSUM)
    if body[:4] != MAGIC:
        raise BundleError(Reason.MALFORMED, "bad magic")
    rd = _Reader(body)
    rd.take(4)
    (version,) = rd.unpack("<H")
    if version != FORMAT_VERSION:
        raise BundleError(Reason.VERSION, f"version {version}")
    prime = int.from_bytes(rd.take(32), "big")
    w, alg_code, n, m, l = rd.unpack("<BBIII")
    iteration, num_vars = rd.unpack("<II")
    codes = {v: k for k, v in ALG_CODES.items()}
    if alg_code not in codes:
        raise BundleError(Reason.MALFORMED, "unknown algorithm code")
    meta = BundleMeta(codes[alg_code], n, m, l, w, iteration)
    layout_digest = rd.take(32)
    (num_public,) = rd.unpack("<I")
    if num_public >= num_vars:
        raise BundleError(Reason.MALFORMED, "public count exceeds variable count")
    publics = [rd.element(prime) for _ in range(num_public)]
    cs = ConstraintSystem(prime, prover=False)
    cs.kinds = bytearray([VarKind.ONE] + [VarKind.PUBLIC] * num_public + [VarKind.WITNESS] * (num_vars - 1 - num_public))
    cs.num_public = num_public
    cs.num_witness = num_vars - 1 - num_public
    (num_constraints,) = rd.unpack("<I")
    ids = cs._coeff_ids
    for _ in range(3 * num_constraints):
        (count,) = rd.unpack("<I")
        last = -1
        for _ in range(count):
            (var,) = rd.unpack("<I")
            c = rd.element(prime)
            if var <= last or var >= num_vars or c == 0:
                raise BundleError(Reason.MALFORMED, "linear combination not canonical")
            last = var
            cid = ids.get(c)
            if cid is None:
                cid = ids[c] = len(cs.coeffs)
                cs.coeffs.append(c)
            cs.vars.append(var)
            cs.cids.append(cid)
        cs.offsets.append(len(cs.vars))
    (flag,) = rd.unpack("<B")
    witness = None
    if flag == 1:
        (count,) = rd.unpack("<I")
        if count != num_vars:
            raise BundleError(Reason.MALFORMED, "witness length differs from variable count")
        witness = Witness([rd.element(prime) for _ in range(count)])
    elif flag != 0:
        raise BundleError(Reason.MALFORMED, "bad witness flag")
    if rd.pos != len(body):
        raise BundleError(Reason.MALFORMED, "trailing bytes")
    return ProofBundle(meta, layout_digest, publics, cs, witness)


def verify_bytes(pp: PublicParams, data: bytes, backend: str | None = None, **kwargs) -> VerifyResult:
    try:
        bundle = import_bundle(data)
    except BundleError as exc:
        return VerifyResult(False, exc.reason, exc.detail)
    return verify(pp, bundle, backend, **kwargs)
