"""Inner sparse-regression code: section-structured dictionary and encoding.

Section indices are 0-based here (``0 .. 2**J - 1``); the support vector of a
signal places section ``l`` column ``i`` at flat position ``l * 2**J + i``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IID_GAUSSIAN = "iid_gaussian"
EXACT_COLUMN_NORM = "exact_column_norm"
NORMALIZATIONS = (IID_GAUSSIAN, EXACT_COLUMN_NORM)
DEFAULT_MEMORY_CAP = 4 * 2**30

_MAGIC = b"SPD"
_HEADER = struct.Struct("<3sBIIIQd")  # 32 bytes


class DictionaryTooLarge(MemoryError):
    pass


def section_stream(gen_seed: int, section: int) -> np.random.Generator:
    """Counter-based (Philox) substream owned by one section."""
    ss = np.random.SeedSequence(gen_seed, spawn_key=(section,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class Dictionary:
    entries: np.ndarray  # (n, L * 2**J), C-contiguous
    L: int
    J: int
    P: float
    gen_seed: int
    normalization: str = IID_GAUSSIAN

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def M(self) -> int:
        """Columns per section."""
        return 1 << self.J

    @property
    def column_energy(self) -> float:
        """Nominal squared column norm nP/L."""
        return self.n * self.P / self.L

    def section(self, l: int) -> np.ndarray:
        return self.entries[:, l * self.M:(l + 1) * self.M]

    def column(self, l: int, i: int) -> np.ndarray:
        return self.entries[:, l * self.M + i]

    def save(self, path) -> None:
        """Write the little-endian float64 matrix after a 32-byte header."""
        code = NORMALIZATIONS.index(self.normalization)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, code, self.n, self.L, self.J,
                                  self.gen_seed, self.P))
            fh.write(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Dictionary":
        raw = Path(path).read_bytes()
        magic, code, n, L, J, seed, P = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a dictionary file")
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if body.size != n * L * (1 << J):
            raise ValueError(f"{path}: truncated dictionary body")
        entries = body.reshape(n, L << J).astype(np.float64)
        return cls(entries, L, J, P, seed, NORMALIZATIONS[code])


def dictionary_bytes(n: int, L: int, J: int) -> int:
    return 8 * n * L * (1 << J)


def generate_section(n, L, J, P, gen_seed, section, normalization=IID_GAUSSIAN):
    """The n x 2^J block of one section, reproducible on its own."""
    rng = section_stream(gen_seed, section)
    block = rng.standard_normal((n, 1 << J))
    block *= np.sqrt(P / L)
    if normalization == EXACT_COLUMN_NORM:
        block *= np.sqrt(n * P / L) / np.linalg.norm(block, axis=0)
    return block


def generate_dictionary(n, L, J, P, seed, normalization=IID_GAUSSIAN,
                        memory_cap=DEFAULT_MEMORY_CAP) -> Dictionary:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    size = dictionary_bytes(n, L, J)
    if size > memory_cap:
        raise DictionaryTooLarge(
            f"dictionary too large: {size / 2**30:.2f} GiB exceeds cap "
            f"{memory_cap / 2**30:.2f} GiB")
    M = 1 << J
    A = np.empty((n, L * M))
    for l in range(L):
        A[:, l * M:(l + 1) * M] = generate_section(n, L, J, P, seed, l, normalization)
    return Dictionary(A, L, J, float(P), int(seed), normalization)


def check_sequences(seqs, L: int, J: int) -> np.ndarray:
    """Return ``seqs`` as a (K, L) int array, validating every index."""
    seqs = np.asarray(seqs)
    if seqs.ndim == 1:
        seqs = seqs[None, :]
    if seqs.ndim != 2 or seqs.shape[1] != L:
        raise ValueError(f"index sequences must have length L={L}")
    if seqs.size and (not np.issubdtype(seqs.dtype, np.integer)
                      or seqs.min() < 0 or seqs.max() >= (1 << J)):
        raise ValueError("invalid section index")
    return seqs.astype(np.int64, copy=False)


def encode_inner(d: Dictionary, seq) -> np.ndarray:
    """Codeword of one user: the sum of its L selected columns."""
    seq = check_sequences(seq, d.L, d.J)
    if seq.shape[0] != 1:
        raise ValueError("encode_inner takes a single index sequence")
    cols = np.arange(d.L) * d.M + seq[0]
    return d.entries[:, cols].sum(axis=1)


@dataclass(frozen=True)
class SectionSparseSignal:
    """s = sum_k m_k, kept per section as (indices, multiplicities)."""

    L: int
    J: int
    K_a: int
    indices: tuple  # per section: sorted int array
    counts: tuple   # per section: matching positive multiplicities

    def dense(self) -> np.ndarray:
        s = np.zeros(self.L << self.J)
        for l, (idx, cnt) in enumerate(zip(self.indices, self.counts)):
            s[(l << self.J) + idx] = cnt
        return s

    def section_supports(self) -> list:
        return [idx.copy() for idx in self.indices]


def superpose(seqs, L: int, J: int) -> SectionSparseSignal:
    seqs = check_sequences(seqs, L, J) if len(seqs) else np.zeros((0, L), dtype=np.int64)
    idx, cnt = [], []
    for l in range(L):
        u, c = np.unique(seqs[:, l], return_counts=True)
        idx.append(u)
        cnt.append(c)
    return SectionSparseSignal(L, J, seqs.shape[0], tuple(idx), tuple(cnt))


def support_of(signal: SectionSparseSignal) -> np.ndarray:
    """Binary support vector rho (rho_i = 1 iff s_i > 0)."""
    rho = np.zeros(signal.L << signal.J, dtype=bool)
    for l, idx in enumerate(signal.indices):
        rho[(l << signal.J) + idx] = True
    return rho


def one_hot(seq, L: int, J: int) -> np.ndarray:
    """m_k for a single index sequence."""
    seq = check_sequences(seq, L, J)[0]
    m = np.zeros(L << J, dtype=bool)
    m[(np.arange(L) << J) + seq] = True
    return m
