"""Baselines, scaling identities and parameter sweeps with CSV/JSON output."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from decpep.algorithms import (AccDngdParams, DgdParams, DigingParams, Formulation, build_accdngd,
                               build_dgd, build_diging, rate_problem_diging)
from decpep.consensus import build_w1
from decpep.core import PepError
from decpep.solver import SolveOptions


def theoretical_dgd_bound(D: float, R: float, K: int, lam: float, h: float = 1.0) -> float:
    """Baseline DGD guarantee ``DR [(1/h + h)/(2 sqrt K) + 2h/(sqrt K (1 - lam))]``.

    With the step size ``alpha = D h / (R sqrt K)`` this is the usual bound
    for the average of all iterates; ``h = R / D`` recovers the unscaled form.
    """
    if K < 1:
        raise PepError("need K >= 1")
    if not 0 <= lam < 1:
        raise PepError("bound undefined for lambda outside [0, 1)")
    if not (D > 0 and R > 0 and h > 0):
        raise PepError("need D, R, h > 0")
    sk = math.sqrt(K)
    return D * R * ((1.0 / h + h) / (2.0 * sk) + 2.0 * h / (sk * (1.0 - lam)))


def scale_worst_case(w_tilde: float, D: float, R: float) -> float:
    """Worst case at (D, R) from the D = R = 1 value with the same h."""
    return D * R * w_tilde


# Observed and theoretical rates for DIGing (N=2, lambda=0.9, mu=0.1) as
# published; literal comparison data, the theoretical rate is not computed.
TABLE_I = (
    {"alpha": 1e-4, "one_minus_observed_rate": 2e-5, "one_minus_theoretical_rate": 7e-6},
    {"alpha": 2.6e-4, "one_minus_observed_rate": 5e-5, "one_minus_theoretical_rate": 2e-5},
    {"alpha": 1e-3, "one_minus_observed_rate": 2e-4, "one_minus_theoretical_rate": None},
)

COLUMNS = ("algorithm", "N", "K", "lambda", "alpha_or_h", "eta", "beta", "beta_c", "formulation",
           "objective", "status", "theory_bound", "lsq_remainder", "member", "mc_lower",
           "solve_time_s")
TIMING = ("solve_time_s",)

ALGORITHMS = ("dgd", "diging", "accdngd")
MODES = ("worst-case", "rate")
FORMULATIONS = ("spectral", "exact-w1")
AXES = ("N", "K", "lam", "h", "alpha", "eta", "beta", "beta_c")


@dataclass
class ExperimentConfig:
    """Flat, JSON-serializable sweep description; list fields are sweep axes."""

    algorithm: str = "dgd"
    mode: str = "worst-case"
    name: str = ""
    N: list = field(default_factory=lambda: [3])
    K: list = field(default_factory=lambda: [5])
    lam: list = field(default_factory=lambda: [0.5])
    h: list = field(default_factory=lambda: [1.0])
    alpha: list = field(default_factory=lambda: [0.1])
    eta: list = field(default_factory=lambda: [0.05])
    beta: list = field(default_factory=lambda: [0.0])
    # rate mode only; None means alpha / L
    beta_c: list = field(default_factory=lambda: [None])
    formulation: str = "spectral"
    spectral_mode: str = "auto"
    D: float = 1.0
    R: float = 1.0
    E: float = 1.0
    mu: float = 0.1
    L: float = 1.0
    k0: float = 1.0
    policy: str = "time-varying"
    s_init: str = "average"
    recover: bool = False
    mc_samples: int = 0
    seed: int = 0
    tol: float = 1e-8
    engine: str = "auto"
    solver: str = "embedded"
    parallel: int = 1
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise PepError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in MODES:
            raise PepError(f"unknown mode {self.mode!r}")
        if self.mode == "rate" and self.algorithm != "diging":
            raise PepError("rate mode is only available for diging")
        if self.formulation not in FORMULATIONS:
            raise PepError(f"unknown formulation {self.formulation!r}")
        if self.format not in ("csv", "json"):
            raise PepError(f"unknown output format {self.format!r}")
        for ax in AXES:
            vals = getattr(self, ax)
            if not isinstance(vals, list) or not vals:
                raise PepError(f"sweep axis {ax!r} must be a non-empty list")
            for v in vals:
                if v is None and ax == "beta_c":
                    continue
                if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                    raise PepError(f"sweep axis {ax!r} has a non-finite entry {v!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise PepError(f"unknown config keys: {sorted(extra)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def axes(self) -> list[str]:
        """Axes that matter for this algorithm, in sweep order."""
        per = {"dgd": ("N", "K", "lam", "h"), "diging": ("N", "K", "lam", "alpha"),
               "accdngd": ("N", "K", "lam", "eta", "beta")}[self.algorithm]
        if self.mode == "rate":
            per = ("N", "lam", "alpha", "beta_c")
        return list(per)

    def points(self) -> list[dict]:
        names = self.axes()
        return [dict(zip(names, combo)) for combo in itertools.product(*(getattr(self, n) for n in names))]


def _formulation(cfg: ExperimentConfig, N: int, lam: float) -> Formulation:
    if cfg.formulation == "exact-w1":
        return Formulation.exact(build_w1(N, lam))
    return Formulation.symmetric(lam, cfg.spectral_mode)


def build_point(cfg: ExperimentConfig, pt: dict):
    """(built instance, algorithm params) for one sweep point."""
    N = int(pt["N"])
    form = _formulation(cfg, N, float(pt["lam"]))
    if cfg.algorithm == "dgd":
        p = DgdParams(N, int(pt["K"]), form, h=float(pt["h"]), D=cfg.D, R=cfg.R)
        return build_dgd(p), p
    if cfg.algorithm == "diging":
        K = 1 if cfg.mode == "rate" else int(pt["K"])
        p = DigingParams(N, K, float(pt["alpha"]), form, mu=cfg.mu, L=cfg.L, D=cfg.D, E=cfg.E,
                         policy=cfg.policy)
        if cfg.mode == "rate":
            return rate_problem_diging(p, pt["beta_c"]), p
        return build_diging(p), p
    p = AccDngdParams(N, int(pt["K"]), float(pt["eta"]), form, beta=float(pt["beta"]), k0=cfg.k0,
                      L=cfg.L, D=cfg.D, s_init=cfg.s_init)
    return build_accdngd(p), p


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_point(cfg: ExperimentConfig, pt: dict) -> dict:
    """One record; failures are recorded in ``status`` instead of raised."""
    rec = {c: None for c in COLUMNS}
    rec.update(algorithm=cfg.algorithm, N=int(pt["N"]), K=1 if cfg.mode == "rate" else int(pt["K"]),
               formulation=cfg.formulation)
    rec["lambda"] = float(pt["lam"])
    if cfg.algorithm == "dgd":
        rec["alpha_or_h"] = float(pt["h"])
    elif cfg.algorithm == "diging":
        rec["alpha_or_h"] = float(pt["alpha"])
    else:
        rec["eta"], rec["beta"] = float(pt["eta"]), float(pt["beta"])
    if cfg.mode == "rate":
        bc = pt["beta_c"]
        rec["beta_c"] = float(pt["alpha"]) / cfg.L if bc is None else float(bc)
    if cfg.algorithm == "dgd" and 0 <= rec["lambda"] < 1:
        rec["theory_bound"] = theoretical_dgd_bound(cfg.D, cfg.R, rec["K"], rec["lambda"], rec["alpha_or_h"])
    t0 = time.perf_counter()
    try:
        built, params = build_point(cfg, pt)
        opts = SolveOptions(feas_tol=cfg.tol, rel_gap=cfg.tol, engine=cfg.engine)
        res = built.solve(opts, cfg.solver)
        rec["objective"], rec["status"] = float(res.objective), res.status
        if cfg.recover and built.groups and res.status in ("optimal", "numerical-limit"):
            from decpep.recovery import worst_case_instance

            wc = worst_case_instance(res)
            rec["lsq_remainder"] = max(g.remainder for g in wc.groups)
            rec["member"] = all(g.member for g in wc.groups)
        if cfg.mc_samples > 0 and cfg.mode == "worst-case":
            from decpep.simulate import monte_carlo_lower_bound

            rec["mc_lower"] = monte_carlo_lower_bound(params, cfg.mc_samples, cfg.seed)
    except Exception as exc:  # recorded, the sweep goes on
        rec["status"] = f"error: {type(exc).__name__}: {exc}"
    rec["solve_time_s"] = time.perf_counter() - t0
    return rec


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> list[dict]:
    """Cartesian sweep; records come back in config order whatever the parallelism."""
    pts = cfg.points()
    if cfg.parallel > 1:
        with ThreadPoolExecutor(cfg.parallel) as ex:
            records = list(ex.map(lambda p: run_point(cfg, p), pts))
    else:
        records = [run_point(cfg, p) for p in pts]
    out = out if out is not None else cfg.out
    if out is not None:
        write_records(records, out, cfg)
    return records


def records_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([r[c] if isinstance(r[c], str) else _num(r[c]) for c in COLUMNS])
    return buf.getvalue()


def records_json(records: list[dict]) -> str:
    clean = [{c: (r[c].item() if isinstance(r[c], np.generic) else r[c]) for c in COLUMNS} for r in records]
    return json.dumps(clean, indent=1)


def write_records(records: list[dict], out, cfg: ExperimentConfig) -> Path:
    """Write ``results.csv`` or ``results.json`` (plus the config echo) into ``out``."""
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    stem = cfg.name or "results"
    (d / f"{stem}.config.json").write_text(cfg.to_json() + "\n")
    if cfg.format == "json":
        path = d / f"{stem}.json"
        path.write_text(records_json(records) + "\n")
    else:
        path = d / f"{stem}.csv"
        path.write_text(records_csv(records))
    return path


def strip_timing(text: str, fmt: str = "csv") -> str:
    """Output text with timing fields blanked, for byte comparisons."""
    if fmt == "json":
        recs = json.loads(text)
        for r in recs:
            for c in TIMING:
                r[c] = None
        return json.dumps(recs, indent=1)
    rows = list(csv.reader(io.StringIO(text)))
    idx = [rows[0].index(c) for c in TIMING]
    for r in rows[1:]:
        for i in idx:
            r[i] = ""
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()
