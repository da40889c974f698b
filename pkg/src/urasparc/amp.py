"""AMP inner decoder with the two-point posterior-mean denoiser, and its SE.

Working units: the operator is the dictionary divided by the square root of
its nominal column energy ``n P / L`` (so columns have norm ~1), and ``y`` is
expected in units of the noise standard deviation. An active entry then has
amplitude ``sqrt(P_hat)`` and the residual variance settles near 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.special import expit

from .sparc import Dictionary

_TAU2_FLOOR = 1e-12
_DIVERGENCE_FACTOR = 1e6
_GH_POINTS = 127


class AmpDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class AmpParams:
    P_hat: float
    p0: float
    undersampling: Fraction  # 2^J L / n, exact
    max_iters: int = 50
    rel_tol: float = 1e-6
    onsager: bool = True  # test-only switch

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if not self.P_hat > 0:
            raise ValueError("P_hat must be positive")

    @classmethod
    def for_system(cls, n: int, L: int, J: int, P_hat: float, p0: float, **kw) -> "AmpParams":
        return cls(P_hat=P_hat, p0=p0, undersampling=Fraction(L << J, n), **kw)

    @property
    def log_prior_ratio(self) -> float:
        return math.log(self.p0) - math.log1p(-self.p0)


def denoise(x, tau2, params: AmpParams):
    """sqrt(P_hat) * P(active | x) for x = sqrt(P_hat) s + N(0, tau2)."""
    sp = math.sqrt(params.P_hat)
    g = (2.0 * sp * np.asarray(x, dtype=float) - params.P_hat) / (2.0 * tau2) \
        - params.log_prior_ratio
    return sp * expit(g)


def denoise_derivative(x, tau2, params: AmpParams):
    sp = math.sqrt(params.P_hat)
    g = (2.0 * sp * np.asarray(x, dtype=float) - params.P_hat) / (2.0 * tau2) \
        - params.log_prior_ratio
    return params.P_hat / tau2 * expit(g) * expit(-g)


def balance_point(tau2, params: AmpParams) -> float:
    """Input at which the denoiser outputs exactly sqrt(P_hat)/2."""
    sp = math.sqrt(params.P_hat)
    return sp / 2.0 + tau2 / sp * params.log_prior_ratio


@dataclass
class AmpState:
    rho_hat: np.ndarray
    residual: np.ndarray
    tau2: float
    iter: int = 0
    tau2_history: list = field(default_factory=list)
    tau2_initial: Optional[float] = None


def _operator(A):
    """(matrix, scale) with the working operator equal to scale * matrix."""
    if isinstance(A, Dictionary):
        return A.entries, 1.0 / math.sqrt(A.column_energy)
    return np.asarray(A, dtype=float), 1.0


def init_state(y, A, params: AmpParams) -> AmpState:
    mat, _ = _operator(A)
    y = np.asarray(y, dtype=float)
    tau2 = max(float(y @ y) / y.size, _TAU2_FLOOR * params.P_hat)
    return AmpState(np.zeros(mat.shape[1]), y.copy(), tau2, 0, [tau2], tau2)


def amp_iterate(y, A, state: AmpState, params: AmpParams) -> AmpState:
    """One synchronous update of estimate and Onsager-corrected residual."""
    mat, c = _operator(A)
    n = mat.shape[0]
    x = c * (mat.T @ state.residual) + state.rho_hat
    rho = denoise(x, state.tau2, params)
    z = y - c * (mat @ rho)
    if params.onsager:
        deriv = denoise_derivative(x, state.tau2, params)
        z += float(params.undersampling) * float(np.mean(deriv)) * state.residual
    tau2 = max(float(z @ z) / n, _TAU2_FLOOR * params.P_hat)
    if state.tau2_initial is not None and tau2 > _DIVERGENCE_FACTOR * state.tau2_initial:
        raise AmpDivergence(f"divergence: tau2 {tau2:.3g} at iteration {state.iter + 1}")
    return AmpState(rho, z, tau2, state.iter + 1, state.tau2_history + [tau2],
                    state.tau2_initial)


@dataclass
class AmpResult:
    state: AmpState
    sqrt_P_hat: float
    L: int
    J: int
    converged: bool

    @property
    def tau2_history(self) -> list:
        return self.state.tau2_history

    @property
    def activity(self) -> np.ndarray:
        """Posterior activity rho_hat / sqrt(P_hat), flat."""
        return self.state.rho_hat / self.sqrt_P_hat

    def section_activity(self) -> np.ndarray:
        return self.activity.reshape(self.L, 1 << self.J)

    def ranking(self) -> list:
        """Per section: (indices by decreasing activity, their activities)."""
        act = self.section_activity()
        order = np.argsort(-act, axis=1, kind="stable")
        return [(order[l], act[l, order[l]]) for l in range(self.L)]


def run_amp(y, A, params: AmpParams, *, L: Optional[int] = None, J: Optional[int] = None,
            trace=None) -> AmpResult:
    """Iterate from rho = 0 until the relative tau2 change drops below rel_tol.

    ``trace``, if given, is a writable text stream receiving one JSON line per
    iteration.
    """
    if isinstance(A, Dictionary):
        L, J = A.L, A.J
    elif L is None or J is None:
        raise ValueError("L and J are required with a bare matrix")
    y = np.asarray(y, dtype=float)
    state = init_state(y, A, params)
    sp = math.sqrt(params.P_hat)
    converged = False
    for _ in range(params.max_iters):
        prev = state.tau2
        state = amp_iterate(y, A, state, params)
        if trace is not None:
            act = state.rho_hat / sp
            trace.write(json.dumps(dict(iter=state.iter, tau2=state.tau2,
                                        mean_activity=float(act.mean()),
                                        max_activity=float(act.max()))) + "\n")
        if abs(state.tau2 - prev) / state.tau2 < params.rel_tol:
            converged = True
            break
    return AmpResult(state, sp, L, J, converged)


def extract_support(result: AmpResult, threshold: float = 0.5) -> list:
    """Per-section index sets with activity >= threshold (top index if none)."""
    act = result.section_activity()
    out = []
    for row in act:
        idx = np.flatnonzero(row >= threshold)
        if idx.size == 0:
            idx = np.array([int(np.argmax(row))])
        out.append(idx)
    return out


def support_vector(sets, L: int, J: int) -> np.ndarray:
    rho = np.zeros(L << J, dtype=bool)
    for l, idx in enumerate(sets):
        rho[(l << J) + np.asarray(idx, dtype=np.int64)] = True
    return rho


# ---------------------------------------------------------------------------
# state evolution

_GH = np.polynomial.hermite_e.hermegauss(_GH_POINTS)


def denoiser_mse(tau2: float, params: AmpParams) -> float:
    """E[(sqrt(P_hat) S - denoise(sqrt(P_hat) S + tau Z))^2], S ~ Bern(1 - p0)."""
    z, w = _GH
    w = w / w.sum()
    tau = math.sqrt(tau2)
    sp = math.sqrt(params.P_hat)
    e0 = w @ denoise(tau * z, tau2, params) ** 2
    e1 = w @ (sp - denoise(sp + tau * z, tau2, params)) ** 2
    return float(params.p0 * e0 + (1.0 - params.p0) * e1)


def state_evolution(params: AmpParams, T: int, noise_var: float = 1.0) -> np.ndarray:
    """Predicted tau2_0 .. tau2_T, starting from rho = 0."""
    if T < 1:
        raise ValueError("T must be at least 1")
    delta = float(params.undersampling)
    tau2 = [noise_var + delta * (1.0 - params.p0) * params.P_hat]
    for _ in range(T):
        tau2.append(noise_var + delta * denoiser_mse(tau2[-1], params))
    return np.array(tau2)
