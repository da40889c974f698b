"""Exact posterior marginals on toy instances, and the decoupled scalar channel."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .sparc import Dictionary

ENUMERATION_CAP = 2**20


class InstanceTooLarge(ValueError):
    pass


@dataclass
class Posterior:
    marginals: np.ndarray       # P(rho_i = 1 | y), flat over L * 2^J
    support_size_pmf: np.ndarray  # [l, k] = P(|supp in section l| = k | y)
    L: int
    J: int


def _codebook(mat, L, J):
    """All (2^J)^L single-user codewords and their index sequences."""
    M = 1 << J
    seqs = np.array(list(product(range(M), repeat=L)), dtype=np.int64).reshape(-1, L)
    cols = seqs + (np.arange(L) * M)[None, :]
    return mat[:, cols].sum(axis=2).T, seqs


def enumerate_posterior(y, A, K_a: int, noise_var: float, *, L=None, J=None,
                        cap: int = ENUMERATION_CAP) -> Posterior:
    """Brute-force support posterior with every user uniform over index sequences."""
    if isinstance(A, Dictionary):
        mat, L, J = A.entries, A.L, A.J
    else:
        mat = np.asarray(A, dtype=float)
        if L is None or J is None:
            raise ValueError("L and J are required with a bare matrix")
    M = 1 << J
    n_cw = M**L
    if n_cw**K_a > cap:
        raise InstanceTooLarge(f"instance too large: {n_cw}^{K_a} combinations > {cap}")
    y = np.asarray(y, dtype=float)
    C, seqs = _codebook(mat, L, J)

    # log-likelihood of every ordered K_a-tuple, first user outermost
    shape = (n_cw,) * K_a
    sums = np.zeros(shape + (y.size,))
    for k in range(K_a):
        sums = sums + C.reshape((1,) * k + (n_cw,) + (1,) * (K_a - 1 - k) + (y.size,))
    r = y - sums
    loglik = -0.5 * np.einsum("...i,...i->...", r, r) / noise_var
    w = np.exp(loglik - logsumexp(loglik))

    marg = np.zeros(L * M)
    pmf = np.zeros((L, K_a + 1))
    for l in range(L):
        # hit[c, i]: codeword c uses column i in section l
        hit = seqs[:, l][:, None] == np.arange(M)[None, :]
        active = np.zeros(shape + (M,), dtype=bool)
        for k in range(K_a):
            active |= hit.reshape((1,) * k + (n_cw,) + (1,) * (K_a - 1 - k) + (M,))
        marg[l * M:(l + 1) * M] = np.tensordot(w, active, axes=K_a)
        size = active.sum(axis=-1)
        pmf[l] = np.bincount(size.ravel(), weights=w.ravel(), minlength=K_a + 1)[: K_a + 1]
    return Posterior(marg, pmf, L, J)


# ---------------------------------------------------------------------------
# decoupled channel r = sqrt(eta P_hat) s + z

@dataclass(frozen=True)
class DecoupledChannelSpec:
    eta: float
    P_hat: float
    p0: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.eta * self.P_hat)


def decision_threshold(spec: DecoupledChannelSpec) -> float:
    """Observation value at which both hypotheses are equally likely."""
    a = spec.amplitude
    lr = math.log(spec.p0) - math.log1p(-spec.p0)
    if a == 0.0:
        return math.inf if lr >= 0 else -math.inf
    return a / 2.0 + lr / a


def scalar_sbs_map(r, spec: DecoupledChannelSpec):
    """1 where r lies strictly above the threshold; ties go to 0."""
    return (np.asarray(r) > decision_threshold(spec)).astype(np.int8)


def log_posterior_terms(r, spec: DecoupledChannelSpec):
    """Unnormalised log posteriors (inactive, active) of each observation."""
    r = np.asarray(r, dtype=float)
    a = spec.amplitude
    return (math.log(spec.p0) - 0.5 * r * r,
            math.log1p(-spec.p0) - 0.5 * (r - a) ** 2)


def decoupled_error_rates(spec: DecoupledChannelSpec) -> tuple[float, float]:
    """(P(miss), P(false alarm)) of the scalar SBS-MAP detector."""
    t = decision_threshold(spec)
    return float(norm.cdf(t - spec.amplitude)), float(norm.sf(t))
