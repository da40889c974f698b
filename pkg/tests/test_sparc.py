import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urasparc.sparc import (EXACT_COLUMN_NORM, Dictionary, DictionaryTooLarge,
                            check_sequences, dictionary_bytes, encode_inner,
                            generate_dictionary, generate_section, one_hot, superpose,
                            support_of)


def test_same_seed_bit_identical():
    a = generate_dictionary(50, 3, 4, 2.0, 9)
    b = generate_dictionary(50, 3, 4, 2.0, 9)
    assert np.array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, generate_dictionary(50, 3, 4, 2.0, 10).entries)


def test_sections_regenerate_independently():
    d = generate_dictionary(40, 5, 3, 1.0, 123)
    assert np.array_equal(d.section(3), generate_section(40, 5, 3, 1.0, 123, 3))


def test_column_norm_chi_square():
    n, L, J, P = 1000, 16, 8, 16.0
    d = generate_dictionary(n, L, J, P, 1)
    norms = (d.entries ** 2).sum(axis=0)
    # ||a||^2 = (P/L) chi2_n: mean nP/L, variance 2n (P/L)^2
    sd_of_mean = math.sqrt(2 * n) * P / L / math.sqrt(norms.size)
    assert abs(norms.mean() - n * P / L) < 3 * sd_of_mean
    assert d.column_energy == n * P / L


def test_exact_column_norm():
    d = generate_dictionary(200, 4, 5, 3.0, 2, EXACT_COLUMN_NORM)
    norms = (d.entries ** 2).sum(axis=0)
    np.testing.assert_allclose(norms, 200 * 3.0 / 4, rtol=1e-9)


def test_memory_cap():
    assert dictionary_bytes(10, 2, 3) == 8 * 10 * 16
    with pytest.raises(DictionaryTooLarge, match="dictionary too large"):
        generate_dictionary(10, 2, 3, 1.0, 0, memory_cap=1000)


def test_single_section_codeword_is_column():
    d = generate_dictionary(30, 1, 4, 1.0, 5)
    assert np.array_equal(encode_inner(d, [11]), d.column(0, 11))


def test_invalid_index():
    d = generate_dictionary(10, 2, 2, 1.0, 0)
    with pytest.raises(ValueError, match="invalid section index"):
        encode_inner(d, [0, 4])
    with pytest.raises(ValueError, match="invalid section index"):
        check_sequences([[-1, 0]], 2, 2)


def test_identical_users_linearity():
    d = generate_dictionary(64, 4, 3, 1.0, 8)
    seq = [1, 7, 0, 3]
    s = superpose([seq] * 5, 4, 3)
    np.testing.assert_allclose(d.entries @ s.dense(), 5 * encode_inner(d, seq), rtol=1e-12)
    assert all(np.array_equal(c, [5]) for c in s.counts)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linearity_random(seed):
    rng = np.random.default_rng(seed)
    L, J, K = 5, 4, 3
    d = generate_dictionary(32, L, J, 1.0, seed)
    seqs = rng.integers(0, 1 << J, size=(K, L))
    via_signal = d.entries @ superpose(seqs, L, J).dense()
    via_users = sum(encode_inner(d, s) for s in seqs)
    np.testing.assert_allclose(via_signal, via_users, rtol=1e-12, atol=1e-12)


def test_mean_codeword_energy():
    n, L, J, P = 64, 4, 3, 2.0
    energies = []
    for seed in range(1000):
        d = generate_dictionary(n, L, J, P, seed)
        energies.append(float(encode_inner(d, [0, 1, 2, 3]) @ encode_inner(d, [0, 1, 2, 3])))
    e = np.array(energies)
    assert abs(e.mean() - n * P) < 3 * e.std(ddof=1) / math.sqrt(e.size)


def test_multiplicities_identical_and_disjoint():
    s = superpose([[1, 2, 3], [1, 2, 3]], 3, 2)
    assert all(np.array_equal(c, [2]) for c in s.counts)
    s = superpose([[0, 0, 0], [1, 1, 1]], 3, 2)
    assert sum(len(i) for i in s.indices) == 2 * 3
    assert all(np.array_equal(c, [1, 1]) for c in s.counts)


def test_collision_counts_brute_force():
    rng = np.random.default_rng(4)
    L, J, K = 6, 2, 4
    for _ in range(200):
        seqs = rng.integers(0, 4, size=(K, L))
        s = superpose(seqs, L, J)
        for l in range(L):
            ref = Counter(int(v) for v in seqs[:, l])
            got = dict(zip(s.indices[l].tolist(), s.counts[l].tolist()))
            assert got == dict(ref)
            assert s.counts[l].sum() == K


def test_support_ignores_multiplicity():
    a = support_of(superpose([[1, 2, 3], [1, 2, 3]], 3, 2))
    b = support_of(superpose([[1, 2, 3]], 3, 2))
    assert np.array_equal(a, b)


def test_empty_signal():
    s = superpose([], 3, 2)
    assert s.K_a == 0
    assert not support_of(s).any()
    assert not s.dense().any()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_support_is_or_of_one_hots(seed, K):
    rng = np.random.default_rng(seed)
    L, J = 4, 3
    seqs = rng.integers(0, 1 << J, size=(K, L))
    ref = np.logical_or.reduce([one_hot(s, L, J) for s in seqs])
    assert np.array_equal(support_of(superpose(seqs, L, J)), ref)


def test_save_load_roundtrip(tmp_path):
    d = generate_dictionary(20, 3, 3, 1.5, 77, EXACT_COLUMN_NORM)
    path = tmp_path / "d.bin"
    d.save(path)
    raw = path.read_bytes()
    assert len(raw) == 32 + 8 * d.entries.size
    e = Dictionary.load(path)
    assert np.array_equal(e.entries, d.entries)
    assert (e.L, e.J, e.P, e.gen_seed, e.normalization) == (3, 3, 1.5, 77, EXACT_COLUMN_NORM)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        Dictionary.load(path)
