"""Majority vote, CRH and ZenCrowd over native floats.

Every arithmetic step uses the float operations from :mod:`zkti.float_circuits`, in
the same order the circuits use, so a native run doubles as the witness
for proving. Loops run over workers (or tasks) in ascending index order;
zero terms are skipped, which matches the circuit because adding a zero
float returns the other operand unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, localcontext
from enum import Enum
from fractions import Fraction

from . import float_circuits as F
from .float_circuits import Float


class InferenceError(ValueError):
    pass


class Algorithm(str, Enum):
    MV = "mv"
    CRH = "crh"
    ZC = "zc"


@dataclass
class AnswerMatrix:
    n: int
    m: int
    l: int
    entries: dict[tuple[int, int], int]

    def __post_init__(self):
        if self.l < 2:
            raise InferenceError("choice cardinality l must be at least 2")
        if self.n < 1 or self.m < 1:
            raise InferenceError("need at least one task and one worker")
        for (i, j), v in self.entries.items():
            if not (0 <= i < self.n and 0 <= j < self.m):
                raise InferenceError(f"entry ({i}, {j}) out of range")
            if not 0 <= v < self.l:
                raise InferenceError(f"answer {v} for ({i}, {j}) outside [0, {self.l})")
        self._by_task = [[] for _ in range(self.n)]
        self._by_worker = [[] for _ in range(self.m)]
        for (i, j), v in sorted(self.entries.items()):
            self._by_task[i].append((j, v))
        for (i, j), v in sorted(self.entries.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            self._by_worker[j].append((i, v))

    def task(self, i: int) -> list[tuple[int, int]]:
        """(worker, answer) pairs for task ``i``, by worker index."""
        return self._by_task[i]

    def worker(self, j: int) -> list[tuple[int, int]]:
        """(task, answer) pairs for worker ``j``, by task index."""
        return self._by_worker[j]

    def answer(self, i: int, j: int) -> int | None:
        return self.entries.get((i, j))

    def worker_vector(self, j: int) -> list[int | None]:
        return [self.entries.get((i, j)) for i in range(self.n)]

    def check_coverage(self) -> None:
        for i in range(self.n):
            if not self._by_task[i]:
                raise InferenceError(f"task {i} has no answers")
        for j in range(self.m):
            if not self._by_worker[j]:
                raise InferenceError(f"worker {j} answered no task")


@dataclass(frozen=True)
class PriorFactors:
    q0: Fraction = Fraction(1, 2)
    zc_q0: Fraction = Fraction(3, 4)
    eps_smooth: Fraction = Fraction(1, 2)
    max_iter: int = 10
    tol: float = 1e-4

    def __post_init__(self):
        if not 0 < self.q0 < 1 or not 0 < self.zc_q0 < 1:
            raise InferenceError("initial quality must lie in (0, 1)")
        if self.eps_smooth <= 0:
            raise InferenceError("smoothing must be positive")
        if self.max_iter < 1:
            raise InferenceError("max_iter must be at least 1")

    def initial_quality(self, alg: Algorithm, m: int, w: int) -> list[Float]:
        q = self.zc_q0 if Algorithm(alg) == Algorithm.ZC else self.q0
        return [F.float_encode(q, w)] * m


@dataclass
class TruthState:
    labels: list[int]
    soft: list | None = None  # CRH: Float per task; ZC: posterior list per task
    counts: list[list[int]] | None = None  # MV tallies


@dataclass
class QualityState:
    q: list[Float]
    ratio: list[Float] | None = None  # CRH pre-log ratios
    distances: list[int] | None = None
    converged: bool = False


@dataclass
class IterationRecord:
    index: int
    q_in: list[Float] | None
    truth: TruthState
    quality: QualityState | None
    complements: list[Float] | None = None


# majority vote


def mv_infer(V: AnswerMatrix) -> TruthState:
    labels, counts = [], []
    for i in range(V.n):
        answers = V.task(i)
        if not answers:
            raise InferenceError(f"task {i} has no answers")
        c = [0] * V.l
        for _, v in answers:
            c[v] += 1
        best = 0
        for k in range(1, V.l):
            if c[k] > c[best]:
                best = k
        labels.append(best)
        counts.append(c)
    return TruthState(labels, counts=counts)


# CRH


def choice_float(v: int, w: int) -> Float:
    return F.float_from_int(v, w)


def half_thresholds(l: int, w: int) -> list[Float]:
    """Rounding thresholds k - 1/2 for k = 1..l-1."""
    return [F.float_encode(Fraction(2 * k - 1, 2), w) for k in range(1, l)]


def crh_label(soft: Float, l: int) -> int:
    """Round to the nearest choice; an exact half rounds down."""
    return sum(0 if F.float_leq(soft, t) else 1 for t in half_thresholds(l, soft.w))


def crh_update_truth(V: AnswerMatrix, q: list[Float]) -> TruthState:
    w = q[0].w
    soft, labels = [], []
    for i in range(V.n):
        answers = V.task(i)
        if not answers:
            raise InferenceError(f"task {i} has no answers")
        num = den = None
        for j, v in answers:
            term = F.mul_value(q[j], choice_float(v, w))
            num = term if num is None else F.add_value(num, term)
            den = q[j] if den is None else F.add_value(den, q[j])
        if den.is_zero:
            raise InferenceError(f"all answering workers of task {i} have zero weight")
        s = F.div_value(num, den)
        soft.append(s)
        labels.append(crh_label(s, V.l))
    return TruthState(labels, soft=soft)


def crh_distances(V: AnswerMatrix, labels: list[int]) -> list[int]:
    return [sum(1 for i, v in V.worker(j) if v != labels[i]) for j in range(V.m)]


def crh_ratios(distances: list[int], eps_smooth: Fraction, w: int) -> list[Float]:
    eps = F.float_encode(eps_smooth, w)
    total = sum(distances)
    num = eps if total == 0 else F.float_from_int(total, w)
    return [F.div_value(num, eps if d == 0 else F.float_from_int(d, w)) for d in distances]


def natural_log(x: Fraction, prec: int = 60) -> Fraction:
    with localcontext() as ctx:
        ctx.prec = prec
        v = Decimal(x.numerator).ln() - Decimal(x.denominator).ln()
        return Fraction(v)


def quality_from_ratio(ratio: Float) -> Float:
    """q = ln(ratio), encoded at the ratio's precision (the verifier-side step)."""
    value = natural_log(F.float_decode(ratio))
    if value <= 0:
        return F.zero(ratio.w)
    return F.float_encode(value, ratio.w)


def crh_update_quality(V: AnswerMatrix, truth: TruthState, eps_smooth: Fraction = Fraction(1, 2)) -> QualityState:
    w = truth.soft[0].w if truth.soft else 23
    d = crh_distances(V, truth.labels)
    ratio = crh_ratios(d, eps_smooth, w)
    return QualityState([quality_from_ratio(r) for r in ratio], ratio=ratio, distances=d, converged=sum(d) == 0)


# ZenCrowd


def zc_eps(w: int) -> Float:
    return F.float_encode(Fraction(4, 1 << (w - 1)), w)


def complement(q: Float) -> Float:
    """Prover-side 1 - q, checked in-circuit only up to the delta envelope."""
    return F.float_encode(1 - F.float_decode(q), q.w)


def zc_update_truth(V: AnswerMatrix, q: list[Float]) -> TruthState:
    for qj in q:
        if qj.is_zero or not F.float_decode(qj) < 1:
            raise InferenceError("ZenCrowd qualities must lie strictly between 0 and 1")
    c = [complement(qj) for qj in q]
    soft, labels = [], []
    for i in range(V.n):
        answers = V.task(i)
        if not answers:
            raise InferenceError(f"task {i} has no answers")
        prods = []
        for k in range(V.l):
            acc = None
            for j, v in answers:
                f = q[j] if v == k else c[j]
                try:
                    acc = f if acc is None else F.mul_value(acc, f)
                except F.FloatOverflow as exc:
                    raise InferenceError(
                        f"choice-probability product for task {i} left the 8-bit exponent range; "
                        "widen the exponent or reduce the number of workers per task"
                    ) from exc
            prods.append(acc)
        total = prods[0]
        for p in prods[1:]:
            total = F.add_value(total, p)
        post = [F.div_value(p, total) for p in prods]
        best = 0
        for k in range(1, V.l):
            if not F.float_leq(post[k], post[best]):
                best = k
        soft.append(post)
        labels.append(best)
    return TruthState(labels, soft=soft)


def zc_update_quality(V: AnswerMatrix, truth: TruthState) -> QualityState:
    w = truth.soft[0][0].w
    eps = zc_eps(w)
    hi = F.float_encode(1 - F.float_decode(eps), w)
    q = []
    for j in range(V.m):
        acc = F.zero(w)
        answered = V.worker(j)
        for i, v in answered:
            acc = F.add_value(acc, truth.soft[i][v])
        qj = F.div_value(acc, F.float_from_int(len(answered), w)) if answered else F.zero(w)
        if not F.float_leq(qj, hi):
            qj = hi
        if not F.float_leq(eps, qj):
            qj = eps
        q.append(qj)
    return QualityState(q)


# framework


def update_truth(alg: Algorithm, V: AnswerMatrix, q: list[Float] | None) -> TruthState:
    alg = Algorithm(alg)
    if alg == Algorithm.MV:
        return mv_infer(V)
    if alg == Algorithm.CRH:
        return crh_update_truth(V, q)
    return zc_update_truth(V, q)


def update_quality(alg: Algorithm, V: AnswerMatrix, truth: TruthState, eta: PriorFactors) -> QualityState | None:
    alg = Algorithm(alg)
    if alg == Algorithm.MV:
        return None
    if alg == Algorithm.CRH:
        return crh_update_quality(V, truth, eta.eps_smooth)
    return zc_update_quality(V, truth)


def run_inference(alg: Algorithm, V: AnswerMatrix, eta: PriorFactors | None = None, w: int = 23):
    """Alternate truth and quality updates until the qualities settle.

    Returns ``(truth, quality, trace)``. The trace holds one record per
    iteration, each of which is one provable protocol run.
    """
    alg = Algorithm(alg)
    eta = eta or PriorFactors()
    V.check_coverage()
    if alg == Algorithm.MV:
        truth = mv_infer(V)
        return truth, None, [IterationRecord(0, None, truth, None)]
    q = eta.initial_quality(alg, V.m, w)
    trace: list[IterationRecord] = []
    truth = quality = None
    for t in range(eta.max_iter):
        truth = update_truth(alg, V, q)
        quality = update_quality(alg, V, truth, eta)
        comps = [complement(x) for x in q] if alg == Algorithm.ZC else None
        trace.append(IterationRecord(t, q, truth, quality, comps))
        if quality.converged:
            # every worker agrees with the truth: keep the previous weights
            quality = QualityState(q, quality.ratio, quality.distances, True)
            break
        delta = max(abs(float(F.float_decode(a) - F.float_decode(b))) for a, b in zip(quality.q, q))
        q = quality.q
        if delta < eta.tol:
            quality.converged = True
            break
    return truth, quality, trace


def accuracy(labels, ground_truth) -> float:
    labels, ground_truth = list(labels), list(ground_truth)
    if len(labels) != len(ground_truth):
        raise InferenceError("label and ground-truth lengths differ")
    if not labels:
        return 1.0
    return sum(a == b for a, b in zip(labels, ground_truth)) / len(labels)
