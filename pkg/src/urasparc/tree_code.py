"""Outer tree code over the noiseless OR-MAC left behind by the inner decoder.

Each section carries ``d[l]`` data bits followed by ``p[l]`` parity bits; a
parity bit is the mod-2 inner product of a fixed random mask with all data
bits of earlier sections. Messages are Python ints of B bits, MSB first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

UNIFORM_TAIL = "uniform_tail"
GEOMETRIC = "geometric"
DEFAULT_LIST_CAP = 2**16


class InfeasibleAllocation(ValueError):
    pass


def allocate_parity(total: int, L: int, J: int, allocation: str = UNIFORM_TAIL) -> list:
    """Spread ``total`` parity bits over sections 2..L, nondecreasing, each <= J."""
    if total < 0 or (L == 1 and total > 0) or total > (L - 1) * J:
        raise InfeasibleAllocation(
            f"infeasible allocation: {total} parity bits over {L - 1} sections of {J}")
    if L == 1:
        return [0]
    slots = L - 1
    if allocation == UNIFORM_TAIL:
        base, extra = divmod(total, slots)
        tail = [base] * (slots - extra) + [base + 1] * extra
    elif allocation == GEOMETRIC:
        # weights 2^l, largest-remainder rounding, then push overflow beyond J left
        w = 2.0 ** np.arange(slots)
        raw = total * w / w.sum()
        tail = np.floor(raw).astype(int)
        for i in np.argsort(-(raw - tail), kind="stable")[: total - tail.sum()]:
            tail[i] += 1
        tail = list(tail)
        for i in range(slots - 1, 0, -1):
            if tail[i] > J:
                tail[i - 1] += tail[i] - J
                tail[i] = J
        if tail[0] > J:
            raise InfeasibleAllocation("infeasible allocation")
        tail.sort()
    else:
        raise ValueError(f"unknown allocation {allocation!r}")
    return [0] + [int(t) for t in tail]


@dataclass(frozen=True, eq=False)
class TreeCodeProfile:
    B: int
    L: int
    J: int
    data_bits: tuple
    parity_bits: tuple
    parity_seed: int
    masks: tuple = field(repr=False)  # masks[l]: (p_l, D_l) uint8, D_l = sum(d[:l])

    @property
    def offsets(self) -> np.ndarray:
        """Start of each section's data inside the message bit vector."""
        return np.concatenate([[0], np.cumsum(self.data_bits)])

    def to_json(self) -> str:
        return json.dumps(dict(B=self.B, L=self.L, J=self.J, d=list(self.data_bits),
                               p=list(self.parity_bits), parity_seed=self.parity_seed))

    @classmethod
    def from_json(cls, text: str) -> "TreeCodeProfile":
        doc = json.loads(text)
        return _make_profile(doc["B"], doc["L"], doc["J"], doc["d"], doc["p"],
                             doc["parity_seed"])


def _make_profile(B, L, J, d, p, parity_seed) -> TreeCodeProfile:
    rng = np.random.default_rng(np.random.SeedSequence(parity_seed))
    masks, D = [], 0
    for l in range(L):
        masks.append(rng.integers(0, 2, size=(p[l], D), dtype=np.uint8))
        D += d[l]
    return TreeCodeProfile(B, L, J, tuple(int(x) for x in d), tuple(int(x) for x in p),
                           int(parity_seed), tuple(masks))


def build_profile(B: int, L: int, J: int, parity_seed: int = 0,
                  allocation: str = UNIFORM_TAIL) -> TreeCodeProfile:
    if B > L * J or B < J:
        raise InfeasibleAllocation(
            f"infeasible allocation: need J <= B <= LJ (B={B}, L={L}, J={J})")
    p = allocate_parity(L * J - B, L, J, allocation)
    d = [J - x for x in p]
    return _make_profile(B, L, J, d, p, parity_seed)


def int_to_bits(m: int, B: int) -> np.ndarray:
    return np.array([(m >> (B - 1 - k)) & 1 for k in range(B)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def _bits_to_ints(rows: np.ndarray) -> np.ndarray:
    """Rows of <= 62 bits to int64 values, MSB first."""
    w = 1 << np.arange(rows.shape[1] - 1, -1, -1, dtype=np.int64)
    return rows.astype(np.int64) @ w


def encode_outer(profile: TreeCodeProfile, message) -> np.ndarray:
    """Map one message (int or bit array) to its L section indices."""
    pr = profile
    bits = int_to_bits(message, pr.B) if isinstance(message, (int, np.integer)) \
        else np.asarray(message, dtype=np.uint8)
    if bits.shape != (pr.B,):
        raise ValueError(f"message must have exactly B={pr.B} bits")
    off = pr.offsets
    idx = np.empty(pr.L, dtype=np.int64)
    for l in range(pr.L):
        data = bits[off[l]:off[l + 1]]
        parity = (pr.masks[l].astype(np.int64) @ bits[:off[l]]) % 2
        idx[l] = bits_to_int(np.concatenate([data, parity]))
    return idx


def encode_outer_many(profile: TreeCodeProfile, messages) -> np.ndarray:
    return np.stack([encode_outer(profile, m) for m in messages]) if len(messages) \
        else np.zeros((0, profile.L), dtype=np.int64)


@dataclass
class DecodedList:
    survivors: list          # all distinct full-depth paths as ints, lexicographic
    K_a: int
    overflow: bool = False
    max_candidates: int = 0  # largest intermediate candidate count seen

    @property
    def messages(self) -> list:
        """The decoder output proper: at most K_a messages."""
        return self.survivors[: self.K_a]


def decode_outer(profile: TreeCodeProfile, section_supports, K_a: int,
                 list_cap: int = DEFAULT_LIST_CAP) -> DecodedList:
    """Tree search over per-section candidate index sets.

    Paths are extended section by section; an index extends a path only if
    its parity part agrees with the parity computed from the path's data bits.
    Exceeding ``list_cap`` candidates sets the overflow flag and keeps the
    lexicographically first ``list_cap`` paths.
    """
    pr = profile
    if len(section_supports) != pr.L:
        raise ValueError(f"need {pr.L} support sets")
    supports = [np.unique(np.asarray(s, dtype=np.int64)) for s in section_supports]
    if any(s.size == 0 for s in supports):
        raise ValueError("every section support must be nonempty")
    if any(s.min() < 0 or s.max() >= (1 << pr.J) for s in supports):
        raise ValueError("invalid section index")

    paths = np.zeros((1, 0), dtype=np.uint8)
    overflow, peak = False, 1
    for l in range(pr.L):
        d, p = pr.data_bits[l], pr.parity_bits[l]
        S = supports[l]
        data_part = S >> p
        parity_part = S & ((1 << p) - 1)
        data_rows = ((data_part[:, None] >> np.arange(d - 1, -1, -1)) & 1).astype(np.uint8)
        if p:
            par_rows = (paths.astype(np.int64) @ pr.masks[l].T.astype(np.int64)) % 2
            expected = _bits_to_ints(par_rows)
            ok = expected[:, None] == parity_part[None, :]
        else:
            ok = np.ones((paths.shape[0], S.size), dtype=bool)
        pi, si = np.nonzero(ok)
        paths = np.concatenate([paths[pi], data_rows[si]], axis=1)
        if paths.shape[0] > 1:
            paths = np.unique(paths, axis=0)
        peak = max(peak, paths.shape[0])
        if paths.shape[0] > list_cap:
            overflow = True
            paths = paths[:list_cap]
        if paths.shape[0] == 0:
            break
    survivors = [bits_to_int(row) for row in paths] if paths.shape[0] else []
    return DecodedList(survivors, K_a, overflow, peak)
