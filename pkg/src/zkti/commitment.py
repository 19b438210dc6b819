"""Poseidon sponge commitments, natively and as constraints.

Parameters are the x^5, t = 5, 8 full + 60 partial round instance over the
BN254 scalar field, derived with the reference Grain LFSR: round constants
first, then 2t further field elements for the Cauchy MDS matrix. Running
``python -m zkti.commitment`` regenerates the bundled parameter file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .field_r1cs import DEFAULT_PRIME, LC, ConstraintSystem, FieldElement, VarId

RATE = 4
PARAMS_VERSION = 1
DATA_FILE = Path(__file__).with_name("data") / "poseidon_t5_bn254.json"


class ParamsError(ValueError):
    pass


# parameter derivation


def _grain(field_bits: int, t: int, full_rounds: int, partial_rounds: int):
    header = "01" + "0000" + f"{field_bits:012b}" + f"{t:012b}" + f"{full_rounds:010b}" + f"{partial_rounds:010b}"
    state = [int(c) for c in header] + [1] * 30

    def step():
        b = state[62] ^ state[51] ^ state[38] ^ state[23] ^ state[13] ^ state[0]
        state.pop(0)
        state.append(b)
        return b

    for _ in range(160):
        step()
    while True:
        # self-shrinking: keep the second bit only when the first is set
        if step():
            yield step()
        else:
            step()


def generate(prime: int = DEFAULT_PRIME, t: int = 5, full_rounds: int = 8, partial_rounds: int = 60) -> dict:
    n = prime.bit_length()
    bits = _grain(n, t, full_rounds, partial_rounds)

    def sample() -> int:
        v = 0
        for _ in range(n):
            v = (v << 1) | next(bits)
        return v

    constants = []
    while len(constants) < (full_rounds + partial_rounds) * t:
        x = sample()
        if x < prime:
            constants.append(x)
    xs = [sample() % prime for _ in range(2 * t)]
    mds = [[pow(xs[i] + xs[t + j], -1, prime) for j in range(t)] for i in range(t)]
    body = {
        "version": PARAMS_VERSION,
        "name": f"poseidon-x5-bn254-t{t}",
        "prime": hex(prime),
        "t": t,
        "alpha": 5,
        "full_rounds": full_rounds,
        "partial_rounds": partial_rounds,
        "round_constants": [hex(c) for c in constants],
        "mds": [[hex(c) for c in row] for row in mds],
    }
    body["checksum"] = checksum(body)
    return body


def checksum(body: dict) -> str:
    content = {k: v for k, v in body.items() if k != "checksum"}
    return hashlib.sha256(json.dumps(content, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_params_file() -> None:
    DATA_FILE.parent.mkdir(parents=True, exist_ok=True)
    DATA_FILE.write_text(json.dumps(generate(), indent=1) + "\n")
    print(f"wrote {DATA_FILE}")


@dataclass(frozen=True)
class SpongeParams:
    prime: int
    t: int
    alpha: int
    full_rounds: int
    partial_rounds: int
    round_constants: tuple[int, ...]
    mds: tuple[tuple[int, ...], ...]
    name: str = ""

    @property
    def rounds(self) -> int:
        return self.full_rounds + self.partial_rounds

    def is_full(self, r: int) -> bool:
        half = self.full_rounds // 2
        return r < half or r >= half + self.partial_rounds

    @property
    def constraints_per_permutation(self) -> int:
        sboxes = self.full_rounds * self.t + self.partial_rounds
        return 3 * sboxes + self.rounds * self.t


def load_params(path: str | Path = DATA_FILE) -> SpongeParams:
    body = json.loads(Path(path).read_text())
    if body.get("version") != PARAMS_VERSION:
        raise ParamsError(f"unsupported parameter file version {body.get('version')}")
    if body.get("checksum") != checksum(body):
        raise ParamsError("parameter file checksum mismatch")
    if body["alpha"] != 5:
        raise ParamsError("only the x^5 S-box is supported")
    return SpongeParams(
        prime=int(body["prime"], 16),
        t=body["t"],
        alpha=body["alpha"],
        full_rounds=body["full_rounds"],
        partial_rounds=body["partial_rounds"],
        round_constants=tuple(int(c, 16) for c in body["round_constants"]),
        mds=tuple(tuple(int(c, 16) for c in row) for row in body["mds"]),
        name=body.get("name", ""),
    )


@lru_cache(maxsize=1)
def default_params() -> SpongeParams:
    return load_params()


def permute(params: SpongeParams, state: list[int]) -> list[int]:
    p, t, rc, M = params.prime, params.t, params.round_constants, params.mds
    s = list(state)
    for r in range(params.rounds):
        s = [(s[i] + rc[r * t + i]) % p for i in range(t)]
        if params.is_full(r):
            s = [pow(x, 5, p) for x in s]
        else:
            s[0] = pow(s[0], 5, p)
        s = [sum(M[i][j] * s[j] for j in range(t)) % p for i in range(t)]
    return s


def _ints(message) -> list[int]:
    return [int(m) for m in message]


def sponge_hash_native(params: SpongeParams, message) -> int:
    """Absorb ``message`` in rate-4 chunks (zero padded); the capacity lane starts at the message length."""
    p = params.prime
    msg = [m % p for m in _ints(message)]
    state = [len(msg)] + [0] * RATE
    chunks = max(1, -(-len(msg) // RATE))
    for c in range(chunks):
        block = msg[c * RATE:(c + 1) * RATE]
        for i, v in enumerate(block):
            state[1 + i] = (state[1 + i] + v) % p
        state = permute(params, state)
    return state[0]


@dataclass(frozen=True)
class Commitment:
    digest: FieldElement


def commit(params: SpongeParams, message, randomness) -> Commitment:
    """Commitment = sponge(randomness || message)."""
    return Commitment(FieldElement(sponge_hash_native(params, [int(randomness)] + _ints(message)), params.prime))


def permutations_for(length: int) -> int:
    return max(1, -(-length // RATE))


# in-circuit


def _sbox(cs: ConstraintSystem, u: LC) -> VarId:
    uv = cs.val(u)
    x2 = cs.witness(None if uv is None else uv * uv)
    cs.enforce(u, u, x2)
    x4 = cs.witness(None if uv is None else pow(uv, 4, cs.prime))
    cs.enforce(x2, x2, x4)
    x5 = cs.witness(None if uv is None else pow(uv, 5, cs.prime))
    cs.enforce(x4, u, x5)
    return x5


def synth_permute(cs: ConstraintSystem, params: SpongeParams, state: list) -> list[VarId]:
    t, rc, M = params.t, params.round_constants, params.mds
    s = [LC.of(x) for x in state]
    out = s
    for r in range(params.rounds):
        s = [s[i] + rc[r * t + i] for i in range(t)]
        if params.is_full(r):
            s = [LC.of(_sbox(cs, x)) for x in s]
        else:
            s = [LC.of(_sbox(cs, s[0]))] + s[1:]
        vals = [cs.val(x) for x in s]
        out = []
        for i in range(t):
            lin = LC()
            for j in range(t):
                lin = lin + s[j] * M[i][j]
            v = cs.witness(None if vals[0] is None else sum(M[i][j] * vals[j] for j in range(t)))
            cs.enforce(lin, 1, v)
            out.append(v)
        s = [LC.of(v) for v in out]
    return out


def synth_sponge(cs: ConstraintSystem, params: SpongeParams, message: list) -> VarId:
    state = [LC.of(len(message))] + [LC() for _ in range(RATE)]
    chunks = permutations_for(len(message))
    out = None
    for c in range(chunks):
        block = message[c * RATE:(c + 1) * RATE]
        for i, v in enumerate(block):
            state[1 + i] = state[1 + i] + v
        out = synth_permute(cs, params, state)
        state = [LC.of(v) for v in out]
    return out[0]


def synth_open(cs: ConstraintSystem, commitment_public, message_vars: list, randomness_var, params: SpongeParams) -> None:
    """Recompute the commitment in-circuit and bind it to the public digest."""
    digest = synth_sponge(cs, params, [randomness_var] + list(message_vars))
    cs.enforce_equal(digest, commitment_public)


if __name__ == "__main__":
    write_params_file()
