"""Experiment orchestration: configs, seeded drops, sweeps, CSV outputs.

A "drop" run executes the full pipeline (geometry -> pair statistics ->
pilot statistics -> optional precoder optimization -> spectral
efficiency) for one random network placement.  Sweeps run a grid of
antenna counts x drops x processing variants, optionally in a process
pool; the CSV output is assembled in a deterministic order after all
points complete, so identical configurations and seeds produce
byte-identical files regardless of the worker count.
"""

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__, channel, closedform, receive, scenario, wmmse

log = logging.getLogger(__name__)

COMBINERS = ("mr", "lmmse")
PRECODER_MODES = ("none", "wmmse1", "iwmmse")
SE_PATHS = ("mc", "closed")

RESULT_COLUMNS = (
    "drop_seed", "m", "k_total", "l", "n", "combiner", "precoder_mode",
    "se_path", "iteration", "ue_id", "se_bits_per_hz", "sum_se", "wsr", "n_r",
)
TRACE_COLUMNS = (
    "drop_seed", "m", "k_total", "l", "n", "combiner", "precoder_mode",
    "se_path", "iteration", "ue_id", "se_bits_per_hz", "lambda", "trace_f", "wsr",
)

# noise power for -94 dBm
DEFAULT_SIGMA2_W = 10.0 ** ((-94.0 - 30.0) / 10.0)


def default_tau_p(k, n):
    """Pilot length for "half the UEs per matrix": N * ceil(K / 2)."""
    return n * ((k + 1) // 2)


@dataclass
class SystemConfig:
    """All scalars of a simulation point plus processing-variant switches."""

    m: int = 20
    k: int = 10
    l: int = 4
    n: int = 4
    area_side: float = 1000.0
    tau_c: int = 200
    tau_p: int | None = None          # None: derived as N * ceil(K / 2)
    sigma2: float = DEFAULT_SIGMA2_W
    p: float = 0.2                    # per-UE transmit power budget (W)
    mu: float = 1.0                   # per-UE priority weight
    bandwidth: float = 20e6           # reporting only, never enters the math
    n_r: int = 20000
    i_max: int = 20
    epsilon: float = 5e-4
    combiner: str = "mr"
    precoder_mode: str = "none"
    se_path: str = "closed"
    seeds: tuple = (0,)

    def resolved(self):
        """Copy with tau_p filled in and every invariant checked."""
        cfg = replace(self, tau_p=self.tau_p if self.tau_p is not None
                      else default_tau_p(self.k, self.n))
        cfg.validate()
        return cfg

    def validate(self):
        if min(self.m, self.k, self.l, self.n) < 1:
            raise ValueError("m, k, l, n must all be >= 1")
        if self.tau_p is None:
            raise ValueError("tau_p unresolved; call resolved() first")
        if self.tau_p % self.n:
            raise ValueError(f"tau_p={self.tau_p} must be a multiple of n={self.n}")
        if not self.tau_p < self.tau_c:
            raise ValueError(f"tau_p={self.tau_p} must be smaller than tau_c={self.tau_c}")
        if self.sigma2 <= 0 or np.any(np.asarray(self.p) <= 0):
            raise ValueError("sigma2 and p must be positive")
        if self.combiner not in COMBINERS:
            raise ValueError(f"combiner must be one of {COMBINERS}")
        if self.precoder_mode not in PRECODER_MODES:
            raise ValueError(f"precoder_mode must be one of {PRECODER_MODES}")
        if self.se_path not in SE_PATHS:
            raise ValueError(f"se_path must be one of {SE_PATHS}")
        if self.se_path == "closed" and self.combiner != "mr":
            raise ValueError("closed-form statistics exist for MR combining only")

    def powers(self):
        return np.broadcast_to(np.asarray(self.p, dtype=float), (self.k,)).copy()

    def weights(self):
        return np.broadcast_to(np.asarray(self.mu, dtype=float), (self.k,)).copy()


_LIST_KEYS = {"seeds"}
_STR_KEYS = {"combiner", "precoder_mode", "se_path"}
_INT_KEYS = {"m", "k", "l", "n", "tau_c", "tau_p", "n_r", "i_max"}
_PER_UE_KEYS = {"p", "mu"}        # scalar or one value per UE


def parse_config_file(path):
    """Read a ``key = value`` config file mirroring SystemConfig fields.

    Blank lines and ``#`` comments are ignored; unknown keys are rejected.
    """
    known = set(SystemConfig.__dataclass_fields__)
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in _LIST_KEYS:
                out[key] = tuple(int(tok) for tok in value.split(",") if tok.strip())
            elif key in _PER_UE_KEYS and "," in value:
                out[key] = tuple(float(tok) for tok in value.split(",") if tok.strip())
            elif key in _STR_KEYS:
                out[key] = value
            elif key in _INT_KEYS:
                out[key] = int(value)
            else:
                out[key] = float(value)
    return out


@dataclass
class DropResult:
    rows: list
    trace_rows: list
    wall_clock: float
    n_r_used: int


def _base_fields(config, drop_seed):
    return {
        "drop_seed": drop_seed, "m": config.m, "k_total": config.k,
        "l": config.l, "n": config.n, "combiner": config.combiner,
        "precoder_mode": config.precoder_mode, "se_path": config.se_path,
    }


def run_drop(config, drop_seed):
    """Full pipeline for one drop; returns per-iteration per-UE SE rows."""
    config.validate()
    t0 = time.perf_counter()
    drop = scenario.drop_network(config.m, config.k, config.area_side, drop_seed)
    pairs = scenario.generate_pairs(drop, config.l, config.n, drop_seed)
    plan = channel.assign_pilots(config.k, config.n, config.tau_p)
    powers = config.powers()
    f_p = channel.default_precoders(config.k, config.n, powers)
    ops, est = channel.system_operators(pairs, plan, f_p, config.sigma2)
    mu = config.weights()
    f0 = wmmse.initial_precoders(config.k, config.n, powers)
    closed = config.se_path == "closed"
    n_r_used = 0 if closed else config.n_r

    cf = closedform.ClosedFormStats(pairs, est, plan, f_p) if closed else None
    base = _base_fields(config, drop_seed)
    rows, trace_rows = [], []

    def emit(iteration, se, wsr, lam=None, f_trace=None):
        sum_se = float(np.sum(se))
        for ue in range(config.k):
            rows.append({**base, "iteration": iteration, "ue_id": ue,
                         "se_bits_per_hz": float(se[ue]), "sum_se": sum_se,
                         "wsr": wsr, "n_r": n_r_used})
            if lam is not None:
                trace_rows.append({**base, "iteration": iteration, "ue_id": ue,
                                   "se_bits_per_hz": float(se[ue]),
                                   "lambda": float(lam[ue]),
                                   "trace_f": float(f_trace[ue]), "wsr": wsr})
        return sum_se

    if config.precoder_mode == "none":
        if closed:
            stats = cf.decode_stats(f0)
        else:
            stats = receive.mc_decode_stats(
                ops, est, f0, config.combiner, config.n_r, drop_seed
            )
        se = [receive.se_optimal(stats, ue, f0[ue], config.sigma2,
                                 config.tau_p, config.tau_c)
              for ue in range(config.k)]
        wsr = float(np.dot(mu, se))
        sum_se = emit(0, se, wsr)
        final_iter, final_sum, final_wsr = 0, sum_se, wsr
    else:
        provider = cf if closed else wmmse.MonteCarloProvider(
            ops, est, config.combiner, config.n_r, drop_seed
        )
        i_max = 1 if config.precoder_mode == "wmmse1" else config.i_max
        problem = wmmse.WeightedProblem(mu=mu, p=powers)
        state = wmmse.iwmmse_run(
            problem, provider, config.sigma2, config.tau_p, config.tau_c,
            i_max=i_max, epsilon=config.epsilon, f_init=f0,
        )
        for rec in state.records:
            emit(rec.iteration, rec.se, rec.wsr, rec.lam, rec.f_trace)
        last = state.records[-1]
        final_iter, final_sum, final_wsr = last.iteration, float(np.sum(last.se)), last.wsr

    rows.append({**base, "iteration": final_iter, "ue_id": "all",
                 "se_bits_per_hz": final_sum, "sum_se": final_sum,
                 "wsr": final_wsr, "n_r": n_r_used})
    return DropResult(rows, trace_rows, time.perf_counter() - t0, n_r_used)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _point_configs(config, axis, values, combiners, precoders, se_paths):
    """Per-point configs for the sweep grid; infeasible points are skipped."""
    points = []
    for value in values:
        if axis == "l":
            cfg = replace(config, l=int(value))
        elif axis == "n":
            cfg = replace(config, n=int(value), tau_p=None)
        else:
            raise ValueError("axis must be 'l' or 'n'")
        tau_p = cfg.tau_p if cfg.tau_p is not None else default_tau_p(cfg.k, cfg.n)
        if not tau_p < cfg.tau_c:
            log.warning("skipping %s=%s: tau_p=%d >= tau_c=%d",
                        axis, value, tau_p, cfg.tau_c)
            continue
        for comb in combiners:
            for prec in precoders:
                for path in se_paths:
                    if path == "closed" and comb != "mr":
                        log.warning("skipping closed-form path for %s combining", comb)
                        continue
                    points.append(replace(
                        cfg, combiner=comb, precoder_mode=prec, se_path=path
                    ).resolved())
    return points


def _run_point(args):
    config, drop_seed = args
    return config, drop_seed, run_drop(config, drop_seed)


def _row_key(row):
    return (row["l"], row["n"], row["combiner"], row["precoder_mode"],
            row["se_path"], row["drop_seed"], row["iteration"],
            -1 if row["ue_id"] == "all" else -2, str(row["ue_id"]))


def sweep(config, axis, values, drop_seeds, *, combiners=None, precoders=None,
          se_paths=None, workers=1, out_dir=None):
    """Run a grid of simulation points and collect (results, trace, meta).

    Grid points execute independently (optionally in a process pool);
    rows are ordered by (value, variant, drop seed) after completion, so
    the output does not depend on scheduling.
    """
    combiners = combiners or [config.combiner]
    precoders = precoders or [config.precoder_mode]
    se_paths = se_paths or [config.se_path]
    points = _point_configs(config, axis, values, combiners, precoders, se_paths)
    tasks = [(cfg, int(seed)) for cfg in points for seed in drop_seeds]

    results = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]

    rows, trace_rows, timings = [], [], []
    for cfg, seed, res in results:
        rows.extend(res.rows)
        trace_rows.extend(res.trace_rows)
        timings.append({
            "l": cfg.l, "n": cfg.n, "combiner": cfg.combiner,
            "precoder_mode": cfg.precoder_mode, "se_path": cfg.se_path,
            "drop_seed": seed, "wall_clock_s": res.wall_clock,
            "n_r": res.n_r_used,
        })
    rows.sort(key=_row_key)
    trace_rows.sort(key=_row_key)

    meta = {
        "version": __version__,
        "config": _config_json(config),
        "axis": axis,
        "values": [int(v) for v in values],
        "drop_seeds": [int(s) for s in drop_seeds],
        "combiners": list(combiners),
        "precoder_modes": list(precoders),
        "se_paths": list(se_paths),
        "timings": timings,
    }
    if out_dir is not None:
        write_outputs(out_dir, rows, trace_rows, meta)
    return rows, trace_rows, meta


def _config_json(config):
    out = asdict(config)
    out["seeds"] = [int(s) for s in out["seeds"]]
    return out


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_outputs(out_dir, rows, trace_rows, meta):
    """Write results.csv, trace.csv and meta.json into ``out_dir``.

    Per-point wall-clock times live in meta.json (not in the CSV) so that
    the CSV stays byte-identical across reruns and worker counts.
    """
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "results.csv"), RESULT_COLUMNS, rows)
    write_csv(os.path.join(out_dir, "trace.csv"), TRACE_COLUMNS, trace_rows)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
