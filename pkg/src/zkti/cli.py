"""Command-line driver: generate data, run inference, prove, verify, count gates.

Exit codes: 0 success or accept, 1 verification reject, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import random
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema

from . import float_circuits as F
from .truth_inference import (
    Algorithm,
    AnswerMatrix,
    InferenceError,
    PriorFactors,
    accuracy,
    run_inference,
)
from .zkti_protocol import (
    Drbg,
    ProtocolError,
    Reason,
    export_bundle,
    import_bundle,
    make_randomness,
    prove,
    setup,
    synth_iteration,
    verify,
    BundleError,
)

SCHEMA_VERSION = 1
TABLE2_REFERENCE = {"mv": 570_000, "crh": 1_760_000, "zc": 2_210_000}


class UsageError(Exception):
    """Bad input data or arguments; exit code 2."""


# datasets


def read_answers(path: str | Path, choices: int | None = None) -> AnswerMatrix:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
    entries: dict[tuple[int, int], int] = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["task", "worker", "answer"]:
            raise UsageError(f"{path}:1: expected header 'task,worker,answer'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise UsageError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            try:
                i, j, v = (int(c) for c in row)
            except ValueError:
                raise UsageError(f"{path}:{line}: fields must be non-negative integers") from None
            if min(i, j, v) < 0:
                raise UsageError(f"{path}:{line}: fields must be non-negative integers")
            if (i, j) in entries:
                raise UsageError(f"{path}:{line}: duplicate answer for task {i}, worker {j}")
            entries[(i, j)] = v
    if not entries:
        raise UsageError(f"{path}: no answers")
    n = 1 + max(i for i, _ in entries)
    m = 1 + max(j for _, j in entries)
    top = 1 + max(entries.values())
    l = choices if choices is not None else max(2, top)
    if top > l:
        raise UsageError(f"{path}: answer {top - 1} is not below --choices {l}")
    try:
        V = AnswerMatrix(n, m, l, entries)
        V.check_coverage()
    except InferenceError as exc:
        raise UsageError(f"{path}: {exc} (task and worker ids must be dense from 0)") from exc
    return V


def read_truth(path: str | Path, n: int) -> list[int]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
    truth: dict[int, int] = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["task", "truth"]:
            raise UsageError(f"{path}:1: expected header 'task,truth'")
        for row in reader:
            if not row:
                continue
            try:
                i, t = (int(c) for c in row)
            except ValueError:
                raise UsageError(f"{path}:{reader.line_num}: expected two integers") from None
            truth[i] = t
    missing = [i for i in range(n) if i not in truth]
    if missing:
        raise UsageError(f"{path}: no truth for task {missing[0]}")
    return [truth[i] for i in range(n)]


def generate(tasks: int, workers: int, choices: int, adversarial_frac: float, quality_mean: float,
             seed: int, density: float = 1.0):
    """Planted dataset. Returns (entries, truth, adversarial worker ids).

    Each worker answers each task with probability ``density`` (at least
    once per task and per worker). Honest workers are right with
    probability Q, adversarial ones with probability 1 - Q; wrong answers
    are uniform over the other choices.
    """
    rng = random.Random(seed)
    truth = [rng.randrange(choices) for _ in range(tasks)]
    n_adv = round(adversarial_frac * workers)
    adversarial = set(rng.sample(range(workers), n_adv))
    cells = {(i, j) for i in range(tasks) for j in range(workers) if rng.random() < density}
    for i in range(tasks):
        if not any((i, j) in cells for j in range(workers)):
            cells.add((i, rng.randrange(workers)))
    for j in range(workers):
        if not any((i, j) in cells for i in range(tasks)):
            cells.add((rng.randrange(tasks), j))
    entries = {}
    for i, j in sorted(cells):
        p_right = 1 - quality_mean if j in adversarial else quality_mean
        if rng.random() < p_right:
            entries[(i, j)] = truth[i]
        else:
            entries[(i, j)] = rng.choice([k for k in range(choices) if k != truth[i]])
    return entries, truth, sorted(adversarial)


def write_dataset(path: Path, entries) -> None:
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["task", "worker", "answer"])
        for (i, j), v in sorted(entries.items()):
            out.writerow([i, j, v])


def write_truth(path: Path, truth) -> None:
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["task", "truth"])
        for i, t in enumerate(truth):
            out.writerow([i, t])


# reports


def load_schema() -> dict:
    return json.loads(resources.files("zkti").joinpath("data/report.schema.json").read_text())


def emit(report: dict, out: str | None) -> None:
    report = {"schema_version": SCHEMA_VERSION, **report}
    jsonschema.validate(report, load_schema())
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def q_values(qs) -> list[float] | None:
    if qs is None:
        return None
    return [float(F.float_decode(q)) for q in qs]


def q_summary(values: list[float] | None) -> dict | None:
    if not values:
        return None
    return {"min": min(values), "max": max(values), "mean": math.fsum(values) / len(values)}


def resolve_seed(seed: int | None) -> int | None:
    if seed is not None:
        return seed
    env = os.environ.get("ZKTI_SEED")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"ZKTI_SEED must be an integer, got {env!r}") from None


def eta_from(args) -> PriorFactors:
    return PriorFactors(max_iter=args.max_iter, tol=args.tol)


# commands


def cmd_gen(args) -> int:
    if args.tasks < 1 or args.workers < 1 or args.choices < 2:
        raise UsageError("need --tasks >= 1, --workers >= 1, --choices >= 2")
    if not 0 <= args.adversarial_frac <= 1 or not 0 <= args.quality_mean <= 1:
        raise UsageError("--adversarial-frac and --quality-mean must lie in [0, 1]")
    if not 0 < args.density <= 1:
        raise UsageError("--density must lie in (0, 1]")
    seed = resolve_seed(args.seed)
    if seed is None:
        raise UsageError("gen needs --seed or ZKTI_SEED")
    entries, truth, _ = generate(args.tasks, args.workers, args.choices, args.adversarial_frac,
                                 args.quality_mean, seed, args.density)
    out = Path(args.output)
    truth_path = Path(args.truth_output) if args.truth_output else out.with_name(out.stem + "_truth.csv")
    try:
        write_dataset(out, entries)
        write_truth(truth_path, truth)
    except OSError as exc:
        raise UsageError(f"cannot write: {exc}") from exc
    print(f"wrote {out} ({len(entries)} answers) and {truth_path}", file=sys.stderr)
    return 0


def cmd_infer(args) -> int:
    V = read_answers(args.data, args.choices)
    alg = Algorithm(args.alg)
    try:
        truth, quality, trace = run_inference(alg, V, eta_from(args), args.w)
    except InferenceError as exc:
        raise UsageError(str(exc)) from exc
    qs = q_values(quality.q if quality else None)
    report = {
        "command": "infer", "alg": alg.value, "n": V.n, "m": V.m, "l": V.l, "w": args.w,
        "iterations": len(trace), "converged": bool(quality.converged) if quality else True,
        "labels": truth.labels, "q": qs, "q_summary": q_summary(qs),
        "constraints_total": None, "constraints_by_region": None,
        "prove_ms": None, "verify_ms": None, "bundle_bytes": None,
    }
    if args.truth:
        report["accuracy"] = accuracy(truth.labels, read_truth(args.truth, V.n))
    emit(report, args.out)
    return 0


def bundle_paths(out: Path, count: int) -> list[Path]:
    return [out] + [out.with_name(f"{out.name}.{t}") for t in range(1, count)]


def cmd_prove(args) -> int:
    V = read_answers(args.data, args.choices)
    alg = Algorithm(args.alg)
    pp = setup(w=args.w, max_iter=args.max_iter, tol=args.tol)
    try:
        _, quality, trace = run_inference(alg, V, pp.eta, pp.w)
    except InferenceError as exc:
        raise UsageError(str(exc)) from exc
    if args.iterations != "all":
        try:
            trace = trace[: max(1, int(args.iterations))]
        except ValueError:
            raise UsageError("--iterations takes a positive integer or 'all'") from None
    seed = resolve_seed(args.seed)
    rng = Drbg(seed) if seed is not None else None
    randomness = make_randomness(pp, V.m, rng)
    paths = bundle_paths(Path(args.output), len(trace))
    total_bytes, prove_ms, verify_ms = 0, 0.0, 0.0
    bundle = None
    for record, path in zip(trace, paths):
        t0 = time.perf_counter()
        bundle = prove(pp, alg, V, randomness, record.q_in, iteration=record.index)
        data = export_bundle(bundle, include_witness=not args.strip_witness)
        prove_ms += 1000 * (time.perf_counter() - t0)
        t0 = time.perf_counter()
        res = verify(pp, bundle)
        verify_ms += 1000 * (time.perf_counter() - t0)
        if not res.ok:
            raise ProtocolError(f"self-check rejected iteration {record.index}: {res.reason.value} {res.detail}")
        try:
            path.write_bytes(data)
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc}") from exc
        total_bytes += len(data)
    qs = q_values(res.q)
    emit({
        "command": "prove", "alg": alg.value, "n": V.n, "m": V.m, "l": V.l, "w": pp.w,
        "constraints_total": bundle.cs.num_constraints,
        "constraints_by_region": bundle.layout.constraints_by_region,
        "prove_ms": round(prove_ms, 3), "verify_ms": round(verify_ms, 3), "bundle_bytes": total_bytes,
        "iterations": len(trace), "q": qs, "q_summary": q_summary(qs),
        "bundles": [str(p) for p in paths[: len(trace)]],
    }, args.out)
    return 0


def cmd_verify(args) -> int:
    """Check one bundle, or a chain of iterations whose Q feeds the next Q input."""
    expected_q = None
    report = None
    verify_ms = 0.0
    total_bytes = 0
    for k, path in enumerate(args.bundles):
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
        total_bytes += len(data)
        t0 = time.perf_counter()
        try:
            bundle = import_bundle(data)
        except BundleError as exc:
            return reject(args, path, exc.reason, exc.detail)
        meta = bundle.meta
        try:
            pp = setup(w=meta.w, prime=bundle.cs.prime, backend=args.backend)
        except Exception as exc:
            return reject(args, path, Reason.MALFORMED, str(exc))
        if k > 0 and meta.iteration != prev_iteration + 1:
            return reject(args, path, Reason.PUBLIC_INPUT_MISMATCH, "bundles are not consecutive iterations")
        res = verify(pp, bundle, args.backend, expected_q_in=expected_q)
        verify_ms += 1000 * (time.perf_counter() - t0)
        if not res.ok:
            return reject(args, path, res.reason, res.detail)
        expected_q = res.q
        prev_iteration = meta.iteration
        qs = q_values(res.q)
        report = {
            "command": "verify", "alg": Algorithm(meta.alg).value, "n": meta.n, "m": meta.m, "l": meta.l,
            "w": meta.w, "accepted": True, "reason": res.reason.name, "iterations": k + 1,
            "constraints_total": bundle.cs.num_constraints, "q": qs, "q_summary": q_summary(qs),
            "verify_ms": round(verify_ms, 3), "bundle_bytes": total_bytes,
        }
    emit(report, args.out)
    return 0


def reject(args, path, reason: Reason, detail: str) -> int:
    print(f"reject {path}: {reason.value}{': ' + detail if detail else ''}", file=sys.stderr)
    emit({"command": "verify", "accepted": False, "reason": reason.name, "detail": detail}, args.out)
    return 1


def cmd_bench_gates(args) -> int:
    try:
        widths = [int(x) for x in args.w.split(",") if x.strip()]
    except ValueError:
        raise UsageError("--w takes a comma-separated list of precisions") from None
    ops = []
    for w in widths:
        F.Precision(w)
        ref = F.TABLE3_REFERENCE.get(w, {})
        for op in ("add", "mul", "div"):
            count = F.op_constraint_count(op, w)
            r = ref.get(op)
            ops.append({"w": w, "op": op, "constraints": count, "reference": r,
                        "delta_pct": None if r is None else round(100 * (count - r) / r, 2)})
    circuits = []
    algs = [] if args.no_circuits else [a.strip() for a in args.algs.split(",")]
    for alg in algs:
        for w in widths if alg == "crh" else [23]:
            pp = setup(w=w)
            cs, layout = synth_iteration(pp, alg, (args.tasks, args.workers, args.choices))
            ref = TABLE2_REFERENCE[alg] if (w == 23 and (args.tasks, args.workers, args.choices) == (100, 30, 2)) else None
            circuits.append({
                "alg": alg, "w": w, "n": args.tasks, "m": args.workers, "constraints": cs.num_constraints,
                "constraints_by_region": layout.constraints_by_region, "reference": ref,
                "delta_pct": None if ref is None else round(100 * (cs.num_constraints - ref) / ref, 2),
            })
    emit({"command": "bench-gates", "ops": ops, "circuits": circuits}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zkti", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="answers CSV with header task,worker,answer")
            p.add_argument("--choices", type=int, help="choice cardinality l (default: max answer + 1)")
        p.add_argument("--alg", choices=[a.value for a in Algorithm], required=True)
        p.add_argument("--w", type=int, default=23, help="float precision")
        p.add_argument("--max-iter", type=int, default=10)
        p.add_argument("--tol", type=float, default=1e-4)
        p.add_argument("--out", help="write the JSON report here instead of stdout")

    g = sub.add_parser("gen", help="write a planted synthetic dataset")
    g.add_argument("--tasks", type=int, required=True)
    g.add_argument("--workers", type=int, required=True)
    g.add_argument("--choices", type=int, default=2)
    g.add_argument("--adversarial-frac", type=float, default=0.0)
    g.add_argument("--quality-mean", type=float, default=0.8)
    g.add_argument("--density", type=float, default=1.0, help="probability a worker answers a task")
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--truth-output", help="default: <output stem>_truth.csv")
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("infer", help="run truth inference and report labels and qualities")
    common(i)
    i.add_argument("--truth", help="ground-truth CSV (task,truth) for accuracy")
    i.set_defaults(func=cmd_infer)

    p = sub.add_parser("prove", help="prove inference iterations into zkb1 bundles")
    common(p)
    p.add_argument("-o", "--output", required=True, help="bundle path; later iterations get .1, .2, ...")
    p.add_argument("--iterations", default="1", help="how many iterations to prove, or 'all'")
    p.add_argument("--seed", type=int, help="commitment randomness seed (fallback ZKTI_SEED, else OS randomness)")
    p.add_argument("--strip-witness", action="store_true", help="export for an external backend")
    p.set_defaults(func=cmd_prove)

    v = sub.add_parser("verify", help="verify one bundle or a chain of iteration bundles")
    v.add_argument("bundles", nargs="+")
    v.add_argument("--backend", choices=["mock", "external"], default="mock")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench-gates", help="constraint counts per float op and per whole circuit")
    b.add_argument("--w", default="8,16,23")
    b.add_argument("--tasks", type=int, default=100)
    b.add_argument("--workers", type=int, default=30)
    b.add_argument("--choices", type=int, default=2)
    b.add_argument("--algs", default="mv,crh,zc")
    b.add_argument("--no-circuits", action="store_true", help="per-op counts only")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench_gates)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InferenceError, F.FloatError, ValueError) as exc:
        print(f"zkti: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"zkti: error: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"zkti: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
