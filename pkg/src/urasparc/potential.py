"""RS potential of the inner support-recovery problem and the derived thresholds.

Two conventions are in play and kept apart on purpose:

* ``rs_potential_finite`` returns the rescaled finite-J potential in bits.
* ``rs_potential_limit`` returns the J -> infinity limit exactly as its closed
  form reads, which is the finite potential divided by log2(e) ("nats").

:class:`PotentialCurve` records which unit its values carry; compare curves via
:meth:`PotentialCurve.in_nats`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.integrate import quad_vec
from scipy.special import entr

from .model import activity_prob, inactivity_prob

LOG2E = 1.0 / math.log(2.0)
_Z_HALF_WIDTH = 40.0
_GOLDEN_XTOL = 1e-8


# ---------------------------------------------------------------------------
# scalar channel quantities

def binary_entropy(p: float, q: Optional[float] = None) -> float:
    """H2 in bits. Pass ``q = 1 - p`` explicitly when p is within 1e-8 of 1."""
    if q is None:
        q = 1.0 - p
    return float((entr(p) + entr(q)) * LOG2E)


def mutual_info_binary_awgn(s_eff, p0: float, *, q0: Optional[float] = None,
                            epsabs: float = 1e-10):
    """I(X; sqrt(s_eff) X + Z) in bits for X ~ Bernoulli(1 - p0), Z ~ N(0, 1).

    Vectorised over ``s_eff``. The output entropy is split into the two
    Gaussian-weighted integrals (one per input symbol) with h(Z) folded into
    each integrand, so nothing large is subtracted at the end.
    ``q0`` overrides ``1 - p0`` for priors too close to 1 to represent.
    """
    s = np.asarray(s_eff, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    if np.any(s < 0):
        raise ValueError("s_eff must be nonnegative")
    q = 1.0 - p0 if q0 is None else q0
    if not (0.0 < p0 < 1.0 and q > 0.0):
        # degenerate prior: input is deterministic
        out = np.zeros_like(s)
        return float(out[0]) if scalar else out
    a = np.sqrt(s)
    lp, lq = math.log(p0), math.log(q)

    def integrand(z):
        phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        # x = 0 sent: log p(z|0)/p(z) ; x = 1 sent: log p(a+z|1)/p(a+z)
        t0 = np.logaddexp(lp, lq + a * z - 0.5 * s)
        t1 = np.logaddexp(lq, lp - a * z - 0.5 * s)
        return -(p0 * t0 + q * t1) * phi

    val, _ = quad_vec(integrand, -_Z_HALF_WIDTH, _Z_HALF_WIDTH,
                      epsabs=epsabs / LOG2E, epsrel=1e-12, norm="max", limit=4000)
    val = np.maximum(val * LOG2E, 0.0)
    return float(val[0]) if scalar else val


def _eta_term(eta):
    eta = np.asarray(eta, dtype=float)
    return 0.5 * ((eta - 1.0) - np.log(eta))


def rs_potential_finite(eta, *, R_in: float, J: int, K_a: int, P_hat: float):
    """Finite-J potential rescaled by beta/2^J, in bits."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    p0 = inactivity_prob(K_a, J)
    I = mutual_info_binary_awgn(eta * P_hat, p0, q0=activity_prob(K_a, J))
    return R_in * 2.0**J / J * I + LOG2E * _eta_term(eta)


def eta_bar(E_in: float, alpha: float) -> float:
    return (1.0 - 1.0 / alpha) / (E_in * LOG2E)


def rs_potential_limit(eta, S: float, E_in: float, alpha: float):
    """Pointwise J -> infinity limit of the potential (natural-unit form)."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    eb = eta_bar(E_in, alpha)
    theta = np.where(eta > eb, 1.0, np.where(eta == eb, 0.5, 0.0))
    out = (eta * S * E_in * (1.0 - theta)
           + S / LOG2E * (1.0 - 1.0 / alpha) * theta
           + _eta_term(eta))
    return float(out) if out.ndim == 0 else out


def left_branch_minimizer(S: float, E_in: float) -> float:
    """Stationary point of the small-eta branch of the limit potential."""
    return 1.0 / (1.0 + 2.0 * S * E_in)


# ---------------------------------------------------------------------------
# curves and minimisation

def default_eta_grid(extra=()) -> np.ndarray:
    """Grid on [1e-6, 1] with spacing <= 1e-4 everywhere, plus ``extra`` points."""
    g = np.concatenate([np.logspace(-6, -2, 2000), np.linspace(1e-2, 1.0, 9901)])
    extra = [float(x) for x in extra if 0.0 < x <= 1.0]
    return np.unique(np.concatenate([g, extra]))


@dataclass
class PotentialCurve:
    eta: np.ndarray
    values: np.ndarray
    kind: str  # "finite_J" | "asymptotic" | "custom"
    unit: str  # "bits" | "nats"
    params: dict = field(default_factory=dict)
    func: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.eta.shape != self.values.shape or self.eta.ndim != 1:
            raise ValueError("eta and values must be 1-d and of equal length")
        if np.any(np.diff(self.eta) <= 0):
            raise ValueError("eta grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("potential values must be finite")

    def in_nats(self) -> np.ndarray:
        return self.values / LOG2E if self.unit == "bits" else self.values.copy()

    def in_bits(self) -> np.ndarray:
        return self.values * LOG2E if self.unit == "nats" else self.values.copy()


def finite_curve(*, R_in, J, K_a, P_hat, eta=None) -> PotentialCurve:
    if eta is None:
        eta = default_eta_grid()
    f = lambda x: rs_potential_finite(x, R_in=R_in, J=J, K_a=K_a, P_hat=P_hat)
    return PotentialCurve(eta, f(eta), "finite_J", "bits",
                          dict(R_in=R_in, J=J, K_a=K_a, P_hat=P_hat,
                               S_in=K_a * R_in, E_in=P_hat / (2 * J)),
                          func=f)


def limit_curve(S, E_in, alpha, eta=None) -> PotentialCurve:
    eb = eta_bar(E_in, alpha)
    if eta is None:
        eta = default_eta_grid([eb, left_branch_minimizer(S, E_in), 1.0])
    f = lambda x: rs_potential_limit(x, S, E_in, alpha)
    return PotentialCurve(eta, f(eta), "asymptotic", "nats",
                          dict(S=S, E_in=E_in, alpha=alpha, eta_bar=eb), func=f)


@dataclass
class MinimizerReport:
    eta_global: float
    value_global: float
    eta_smallest_local: float
    value_smallest_local: float
    is_unique: bool
    unit: str


def _refine(curve: PotentialCurve, i: int) -> tuple[float, float]:
    eta, v = curve.eta, curve.values
    if i == len(eta) - 1 or i == 0 or curve.func is None:
        return float(eta[i]), float(v[i])
    a, b, c = eta[i - 1], eta[i], eta[i + 1]
    f = lambda x: float(curve.func(x))
    if not (v[i] < v[i - 1] and v[i] < v[i + 1]):
        return float(b), float(v[i])
    eb = curve.params.get("eta_bar")
    if curve.kind == "asymptotic" and eb is not None and a < eb < c:
        # minimise each one-sided piece separately; the kink is never a minimum
        cands = [(float(b), float(v[i]))]
        for lo, hi in ((a, eb), (eb, c)):
            r = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                         options={"xatol": _GOLDEN_XTOL})
            cands.append((float(r.x), float(r.fun)))
        return min(cands, key=lambda t: t[1])
    r = optimize.minimize_scalar(f, bracket=(a, b, c), method="golden",
                                 options={"xtol": _GOLDEN_XTOL})
    if a <= r.x <= c and r.fun <= v[i]:
        return float(r.x), float(r.fun)
    return float(b), float(v[i])


def local_minima_indices(values) -> np.ndarray:
    """Grid indices that are <= both neighbours (right endpoint: <= its left one)."""
    v = np.asarray(values)
    left = np.r_[False, v[1:] <= v[:-1]]
    right = np.r_[v[:-1] <= v[1:], True]
    return np.flatnonzero(left & right)


def find_minimizers(curve: PotentialCurve, max_spacing: float = 1e-4) -> MinimizerReport:
    if np.max(np.diff(curve.eta)) > max_spacing * (1 + 1e-9):
        raise ValueError(f"grid spacing exceeds {max_spacing}")
    ig = int(np.argmin(curve.values))
    eg, vg = _refine(curve, ig)
    mins = local_minima_indices(curve.values)
    il = int(mins[0]) if len(mins) else ig
    el, vl = _refine(curve, il)
    unique = abs(el - eg) <= 10 * max_spacing
    return MinimizerReport(eg, vg, el, vl, unique, curve.unit)


# ---------------------------------------------------------------------------
# thresholds

def threshold_optimal(alpha: float, E_in: float, rtol: float = 1e-10) -> float:
    """Largest sum rate with S (1 - 1/alpha) < 0.5 log2(1 + 2 S E_in); 0 if none."""
    if alpha <= 1 or E_in <= 0:
        raise ValueError("need alpha > 1 and E_in > 0")
    c = 1.0 - 1.0 / alpha
    g = lambda S: 0.5 * math.log2(1.0 + 2.0 * S * E_in) - S * c
    # g(0) = 0 and g is concave: a positive root exists iff g'(0) > 0
    if E_in * LOG2E <= c:
        return 0.0
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
    lo = hi
    while g(lo) <= 0:
        lo /= 2.0
    return optimize.bisect(g, lo, hi, xtol=1e-300,
                           rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=2000)


def threshold_algorithmic(alpha: float, E_in: float) -> float:
    """log2(e)/(1 - 1/alpha) - 1/E_in, clamped at 0."""
    if alpha <= 1 or E_in <= 0:
        raise ValueError("need alpha > 1 and E_in > 0")
    return max(0.0, LOG2E / (1.0 - 1.0 / alpha) - 1.0 / E_in)


def capacity_symmetric(K_a: int, snr: float) -> float:
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return 0.5 * math.log2(1.0 + K_a * snr)


def min_eb_n0(S: float) -> float:
    """Smallest Eb/N0 (linear) with S < 0.5 log2(1 + 2 S Eb/N0)."""
    return (2.0 ** (2.0 * S) - 1.0) / (2.0 * S)


def outer_rate_bound(*, alpha: Optional[float] = None, K_a: Optional[int] = None,
                     J: Optional[int] = None) -> float:
    """OR-MAC outer rate bound: asymptotic (alpha) or finite (K_a, J)."""
    if alpha is not None:
        if K_a is not None or J is not None:
            raise ValueError("give either alpha or (K_a, J)")
        return 1.0 - 1.0 / alpha
    if K_a is None or J is None or K_a < 1 or J < 1:
        raise ValueError("finite bound needs K_a >= 1 and J >= 1")
    h = binary_entropy(inactivity_prob(K_a, J), activity_prob(K_a, J))
    return 2.0**J * h / (K_a * J)


def algorithmic_onset(alpha: float, E_in: float, *, S_max: float = 50.0,
                      rtol: float = 1e-6) -> float:
    """Smallest S at which the limit potential grows a minimum below eta = 1.

    Found by bisection on ``find_minimizers``; it is compared against
    :func:`threshold_algorithmic`.
    """
    def stuck(S):
        rep = find_minimizers(limit_curve(S, E_in, alpha))
        return rep.eta_smallest_local < 1.0 - 1e-6

    if stuck(1e-12):
        return 0.0
    hi = 1.0
    while not stuck(hi):
        hi *= 2.0
        if hi > S_max:
            return math.inf
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if stuck(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def finite_algorithmic_onset(J: int, K_a: int, E_in: float, *, S_max: float = 20.0,
                             rtol: float = 1e-3, eta=None) -> float:
    """Analogue of :func:`algorithmic_onset` on the finite-J potential.

    The onset is the smallest S_in whose smallest local minimiser lies below
    the asymptotic discontinuity location.
    """
    if eta is None:
        eta = default_eta_grid()
    # the good finite-J minimum sits just below 1, so "stuck" means below eta_bar
    cut = eta_bar(E_in, J / math.log2(K_a))

    def stuck(S_in):
        curve = finite_curve(R_in=S_in / K_a, J=J, K_a=K_a, P_hat=2.0 * J * E_in, eta=eta)
        mins = local_minima_indices(curve.values)
        return len(mins) > 0 and curve.eta[mins[0]] < cut

    if stuck(1e-6):
        return 0.0
    hi = 0.5
    while not stuck(hi):
        hi *= 2.0
        if hi > S_max:
            return math.inf
    lo = hi / 2.0 if hi > 0.5 else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if stuck(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class ThresholdReport:
    S_opt: float
    S_alg: float
    S_capacity: Optional[float]
    R_out_bound_finite: Optional[float]
    R_out_bound_asymptotic: float
    eta_bar: float
    S_alg_onset: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def threshold_report(alpha: float, E_in: float, *, K_a: Optional[int] = None,
                     snr: Optional[float] = None, J: Optional[int] = None,
                     with_onset: bool = False) -> ThresholdReport:
    return ThresholdReport(
        S_opt=threshold_optimal(alpha, E_in),
        S_alg=threshold_algorithmic(alpha, E_in),
        S_capacity=capacity_symmetric(K_a, snr) if K_a is not None and snr is not None else None,
        R_out_bound_finite=outer_rate_bound(K_a=K_a, J=J) if K_a is not None and J is not None else None,
        R_out_bound_asymptotic=outer_rate_bound(alpha=alpha),
        eta_bar=eta_bar(E_in, alpha),
        S_alg_onset=algorithmic_onset(alpha, E_in) if with_onset else None,
    )
