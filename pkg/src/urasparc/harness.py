"""End-to-end Monte Carlo: outer encode -> inner encode -> AWGN -> AMP -> tree decode."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .amp import AmpDivergence, AmpParams, extract_support, run_amp
from .model import SystemConfig, check_config, derive_params
from .sparc import (DEFAULT_MEMORY_CAP, IID_GAUSSIAN, Dictionary, DictionaryTooLarge,
                    dictionary_bytes, generate_dictionary)
from .tree_code import (DEFAULT_LIST_CAP, UNIFORM_TAIL, build_profile, decode_outer,
                        encode_outer_many)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("cell_id", "K_a", "n", "L", "J", "eb_n0_db", "r_in", "r_out", "trials",
               "pue_mean", "pue_stderr", "miss_rate", "fa_rate", "amp_iters_mean",
               "tau2_final_mean")
GRID_AXES = ("K_a", "J", "L", "n", "eb_n0_db", "R_out")
DEGRADED_FRACTION = 0.1
_NOISE_FLOOR = 1e-30

# seed-derivation tags
_TRIAL, _DICT, _PARITY = 0, 1, 2


@dataclass(frozen=True)
class SimOptions:
    allocation: str = UNIFORM_TAIL
    list_cap: int = DEFAULT_LIST_CAP
    support_threshold: float = 0.5
    max_iters: int = 50
    rel_tol: float = 1e-6
    fresh_dictionary_per_trial: bool = False
    normalization: str = IID_GAUSSIAN
    memory_cap: int = DEFAULT_MEMORY_CAP


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed from (master_seed, keys) via SeedSequence hashing."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_seed_for(master_seed: int, cell: int, trial: int) -> int:
    return derive_seed(master_seed, _TRIAL, cell, trial)


def awgn_channel(x_sum, N0_half: float, rng: np.random.Generator) -> np.ndarray:
    x_sum = np.asarray(x_sum, dtype=float)
    sigma = math.sqrt(max(N0_half, _NOISE_FLOOR))
    return x_sum + sigma * rng.standard_normal(x_sum.shape)


def compute_pue(sent, decoded) -> tuple[float, int, int]:
    """(pue, distinct misses, false alarms).

    ``sent`` lists one message per active user, duplicates included; pue is
    the fraction of users whose message is absent from ``decoded``.
    """
    sent = list(sent)
    dec = set(decoded)
    if not sent:
        return 0.0, 0, len(dec)
    lost_users = sum(1 for m in sent if m not in dec)
    distinct = set(sent)
    return lost_users / len(sent), len(distinct - dec), len(dec - distinct)


@dataclass
class TrialReport:
    trial_seed: int
    config: dict
    pue: float
    miss_count: int
    false_alarm_count: int
    distinct_sent: int
    decoded_count: int
    survivor_count: int
    amp_iters: int
    tau2_final: float
    overflow: bool
    wall_time_ms: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def random_messages(rng: np.random.Generator, K_a: int, B: int) -> list:
    bits = rng.integers(0, 2, size=(K_a, B), dtype=np.uint8)
    w = [1 << (B - 1 - k) for k in range(B)]
    return [sum(int(b) * v for b, v in zip(row, w)) for row in bits]


def _failed_report(config, seed, t0, err, K_a) -> TrialReport:
    return TrialReport(seed, config.to_dict(), 1.0, K_a, 0, K_a, 0, 0, 0, math.nan, False,
                       (time.perf_counter() - t0) * 1e3, str(err))


def simulate_trial(config: SystemConfig, trial_seed: int, options: SimOptions = SimOptions(),
                   *, dictionary: Optional[Dictionary] = None, profile=None,
                   dict_seed: Optional[int] = None, parity_seed: Optional[int] = None,
                   trace=None) -> TrialReport:
    """Run the whole chain once. Divergence and memory-cap failures are
    recorded in the report (pue = 1) instead of raised."""
    t0 = time.perf_counter()
    c = check_config(config)
    dp = derive_params(c)
    rng = np.random.default_rng(np.random.SeedSequence(trial_seed))
    try:
        if dictionary is None:
            seed = trial_seed if dict_seed is None else dict_seed
            dictionary = generate_dictionary(c.n, c.L, c.J, c.P, seed, options.normalization,
                                             options.memory_cap)
        if profile is None:
            if parity_seed is None:
                parity_seed = derive_seed(trial_seed, _PARITY)
            profile = build_profile(c.B, c.L, c.J, parity_seed, options.allocation)
        sent = random_messages(rng, c.K_a, c.B)
        seqs = encode_outer_many(profile, sent)
        cols = seqs + (np.arange(c.L) << c.J)[None, :]
        x_sum = dictionary.entries[:, cols.ravel()].sum(axis=1)
        y = awgn_channel(x_sum, c.N0_half, rng)
        params = AmpParams.for_system(c.n, c.L, c.J, dp.P_hat, dp.p0,
                                      max_iters=options.max_iters, rel_tol=options.rel_tol)
        res = run_amp(y / math.sqrt(max(c.N0_half, _NOISE_FLOOR)), dictionary, params,
                      trace=trace)
        supports = extract_support(res, options.support_threshold)
        dec = decode_outer(profile, supports, c.K_a, options.list_cap)
    except (AmpDivergence, DictionaryTooLarge) as err:
        log.warning("trial %d failed: %s", trial_seed, err)
        return _failed_report(c, trial_seed, t0, err, c.K_a)
    pue, miss, fa = compute_pue(sent, dec.messages)
    return TrialReport(trial_seed, c.to_dict(), pue, miss, fa, len(set(sent)),
                       len(dec.messages), len(dec.survivors), res.state.iter,
                       res.state.tau2, dec.overflow, (time.perf_counter() - t0) * 1e3)


# ---------------------------------------------------------------------------
# campaigns

@dataclass
class GridSpec:
    base: SystemConfig
    axes: dict = field(default_factory=dict)  # axis name -> list of values

    def __post_init__(self):
        bad = sorted(set(self.axes) - set(GRID_AXES))
        if bad:
            raise ValueError(f"unknown grid axes: {', '.join(bad)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "GridSpec":
        extra = sorted(set(doc) - {"base", "axes"})
        if extra:
            raise ValueError(f"unknown grid keys: {', '.join(extra)}")
        return cls(SystemConfig.from_dict(doc["base"]), dict(doc.get("axes", {})))

    def cells(self) -> list:
        names = list(self.axes)
        out = []
        for values in itertools.product(*(self.axes[k] for k in names)):
            out.append(cell_config(self.base, dict(zip(names, values))))
        return out


def eb_n0_db_of(config: SystemConfig) -> float:
    R = config.B / config.n
    if R == 0:
        return math.inf
    return 10.0 * math.log10(config.P / (R * config.N0))


def cell_config(base: SystemConfig, point: dict) -> SystemConfig:
    c = replace(base, **{k: int(point[k]) for k in ("K_a", "J", "L", "n") if k in point})
    if "R_out" in point:
        B = int(round(float(point["R_out"]) * c.L * c.J))
        c = replace(c, B=min(max(B, c.J), c.L * c.J))
    elif c.B > c.L * c.J:
        c = replace(c, B=c.L * c.J)
    if "eb_n0_db" in point:
        ebn0 = 10.0 ** (float(point["eb_n0_db"]) / 10.0)
        c = replace(c, P=ebn0 * (c.B / c.n) * c.N0)
    return check_config(c)


@dataclass
class CellResult:
    cell_id: int
    config: SystemConfig
    trials: list  # TrialReport, ordered by trial index

    def row(self) -> dict:
        c = self.config
        t = self.trials
        pue = np.array([r.pue for r in t])
        ok = [r for r in t if not r.failed]
        k = len(t)
        dp = derive_params(c)
        return {
            "cell_id": self.cell_id, "K_a": c.K_a, "n": c.n, "L": c.L, "J": c.J,
            "eb_n0_db": eb_n0_db_of(c), "r_in": dp.R_in, "r_out": dp.R_out, "trials": k,
            "pue_mean": float(pue.mean()),
            "pue_stderr": float(pue.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
            "miss_rate": float(np.mean([r.miss_count / max(r.distinct_sent, 1) for r in t])),
            "fa_rate": float(np.mean([r.false_alarm_count / max(r.decoded_count, 1) for r in t])),
            "amp_iters_mean": float(np.mean([r.amp_iters for r in ok])) if ok else math.nan,
            "tau2_final_mean": float(np.mean([r.tau2_final for r in ok])) if ok else math.nan,
        }

    @property
    def failures(self) -> list:
        return [(r.trial_seed, r.error) for r in self.trials if r.failed]

    @property
    def degraded(self) -> bool:
        return len(self.failures) > DEGRADED_FRACTION * len(self.trials)


@dataclass
class CampaignReport:
    axes: dict
    master_seed: int
    trials_per_cell: int
    cells: list  # CellResult

    def rows(self) -> list:
        return [c.row() for c in self.cells]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k]
                        for k in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "axes": self.axes, "master_seed": self.master_seed,
            "trials_per_cell": self.trials_per_cell,
            "cells": [dict(c.row(), config=c.config.to_dict(), degraded=c.degraded,
                           failures=[{"trial_seed": s, "error": e} for s, e in c.failures],
                           overflow_count=sum(r.overflow for r in c.trials))
                      for c in self.cells],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


# Worker-side cache: one cell dictionary at a time keeps memory bounded.
_cache: dict = {}


def _cell_dictionary(c: SystemConfig, seed: int, options: SimOptions) -> Dictionary:
    key = (c.n, c.L, c.J, c.P, seed, options.normalization)
    if key not in _cache:
        _cache.clear()
        _cache[key] = generate_dictionary(c.n, c.L, c.J, c.P, seed, options.normalization,
                                          options.memory_cap)
    return _cache[key]


def _run_chunk(args):
    config, cell, trials, master_seed, options = args
    out = []
    parity_seed = derive_seed(master_seed, _PARITY, cell)
    profile = build_profile(config.B, config.L, config.J, parity_seed, options.allocation)
    shared = None
    if not options.fresh_dictionary_per_trial:
        try:
            shared = _cell_dictionary(config, derive_seed(master_seed, _DICT, cell), options)
        except DictionaryTooLarge as err:
            t0 = time.perf_counter()
            return [(cell, t, _failed_report(config, trial_seed_for(master_seed, cell, t),
                                             t0, err, config.K_a)) for t in trials]
    for t in trials:
        seed = trial_seed_for(master_seed, cell, t)
        rep = simulate_trial(config, seed, options, dictionary=shared, profile=profile,
                             dict_seed=derive_seed(master_seed, _DICT, cell, t))
        out.append((cell, t, rep))
    return out


def run_campaign(grid: GridSpec, trials_per_cell: int, master_seed: int,
                 parallelism: int = 1, options: SimOptions = SimOptions()) -> CampaignReport:
    """Evaluate every grid cell; output depends only on (grid, trials, master_seed)."""
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be at least 1")
    cells = grid.cells()
    for c in cells:
        size = dictionary_bytes(c.n, c.L, c.J)
        if size > options.memory_cap:
            raise DictionaryTooLarge(
                f"dictionary too large: cell with n={c.n}, L={c.L}, J={c.J} needs "
                f"{size / 2**30:.2f} GiB")
    per = max(1, math.ceil(trials_per_cell / max(1, parallelism)))
    work = [(c, i, list(range(s, min(s + per, trials_per_cell))), master_seed, options)
            for i, c in enumerate(cells) for s in range(0, trials_per_cell, per)]
    if parallelism <= 1:
        chunks = [_run_chunk(w) for w in work]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as ex:
            chunks = list(ex.map(_run_chunk, work))
    _cache.clear()
    results = {}
    for chunk in chunks:
        for cell, t, rep in chunk:
            results[(cell, t)] = rep
    out = []
    for i, c in enumerate(cells):
        reps = [results[(i, t)] for t in range(trials_per_cell)]
        cr = CellResult(i, c, reps)
        for seed, err in cr.failures:
            log.warning("cell %d trial seed %d failed: %s", i, seed, err)
        if cr.degraded:
            log.warning("cell %d degraded: %d/%d trials failed", i, len(cr.failures),
                        trials_per_cell)
        out.append(cr)
    return CampaignReport({k: list(v) for k, v in grid.axes.items()}, master_seed,
                          trials_per_cell, out)


def trial_to_json(rep: TrialReport) -> str:
    return json.dumps(asdict(rep), indent=2, sort_keys=True)
