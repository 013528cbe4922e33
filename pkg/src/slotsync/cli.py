"""Command-line front end: ``slotsync {exponents,simulate,compare,verify}``.

Configuration is a JSON object; see README for the schema.  All quantities
are in nats.  Every output starts with the resolved configuration and the
package version, and re-running that configuration reproduces the file.

Exit codes: 0 success, 2 invalid input, 3 tolerance breach in ``compare``.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .channel import EnsembleConfig, codebook_size, make_rng, sample_codebook, validate_dmc
from .detector import DEFAULT_BUDGET, BudgetExceededError, DetectorParams, dominance_check
from .exponents import ExponentProblem, compute_exponents, _json_real
from .oracles import DoubleGrid, JointGrid, all_exponents
from .probability import Distribution, TypeDescriptor
from .search import SearchSettings
from .validation import (
    FULL_ORACLE_BUDGET,
    estimate_probabilities,
    exact_full_oracle,
    exact_y_average,
    fit_exponent,
    inclusion_check,
)

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 2, 3
METHODS = ("auto", "monte-carlo", "exact-y", "exact-full")

CSV_HEADERS = {
    "exponents": ["alpha", "beta", "R", "E_A", "E_B", "E_FA", "E_MD", "E_1", "E_2", "E_DE", "D_PW", "I_PW", "no_rate_loss"],
    "simulate": [
        "n", "M", "R_eff", "counts", "alpha", "beta", "method", "trials",
        "p_fa", "p_md", "p_de", "se_fa", "se_md", "se_de", "log_fa", "log_md", "log_de", "error",
    ],
    "compare": ["kind", "alpha", "beta", "slope", "predicted", "gap", "tolerance", "within", "intercept", "log_coef", "n_points"],
    "verify": ["property", "instances", "violations", "skipped", "passed", "detail"],
}


class ConfigError(ValueError):
    pass


def _as_list(v, name, kind=float):
    items = v if isinstance(v, list) else [v]
    if not items:
        raise ConfigError(f"{name} must not be empty")
    try:
        return [kind(x) for x in items]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


@dataclass
class VerifySettings:
    dominance_n: list = field(default_factory=lambda: [2, 3, 4])
    dominance_M: list = field(default_factory=lambda: [1, 2, 3])
    dominance_codebooks: int = 20
    dominance_partitions: int = 100
    inclusion_max_n: int = 10
    inclusion_M: int = 3
    inclusion_alpha: list = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    inclusion_beta: list = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    oracle_points: list = field(default_factory=lambda: [[0.1, 0.0, 0.5], [0.1, 0.5, 0.0], [0.05, -0.5, 0.0]])
    oracle_resolution: list = field(default_factory=lambda: [400, 100])
    oracle_tolerance: float = 0.02


@dataclass
class RunConfig:
    W: list
    silent_index: int
    P: list
    n: list
    alpha: list
    beta: list
    R: list | None = None
    M: int | None = None
    input_labels: list | None = None
    output_labels: list | None = None
    method: str = "auto"
    trials: int = 100_000
    codebooks: int = 200
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    tolerance: dict = field(default_factory=lambda: {"FA": 0.10, "MD": 0.10, "DE": 0.15})
    resolution: int | None = None
    verify: VerifySettings = field(default_factory=VerifySettings)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        raw = dict(raw)
        ch = raw.pop("channel", None)
        if not isinstance(ch, dict) or "W" not in ch:
            raise ConfigError("missing channel.W")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown keys: {sorted(unknown)}")
        ver = raw.pop("verify", {}) or {}
        vknown = {f.name for f in fields(VerifySettings)}
        if set(ver) - vknown:
            raise ConfigError(f"unknown verify keys: {sorted(set(ver) - vknown)}")
        tol = raw.pop("tolerance", None)
        if tol is None:
            tol = {"FA": 0.10, "MD": 0.10, "DE": 0.15}
        elif not isinstance(tol, dict):
            tol = {k: float(tol) for k in ("FA", "MD", "DE")}
        try:
            cfg = cls(
                W=[[float(v) for v in row] for row in ch["W"]],
                silent_index=int(ch.get("silent_index", 0)),
                input_labels=ch.get("input_labels"),
                output_labels=ch.get("output_labels"),
                P=[float(v) for v in raw.pop("P")],
                n=_as_list(raw.pop("n", [8]), "n", int),
                alpha=_as_list(raw.pop("alpha", 0.0), "alpha"),
                beta=_as_list(raw.pop("beta", 0.0), "beta"),
                R=_as_list(raw.pop("R"), "R") if raw.get("R") is not None else raw.pop("R", None),
                tolerance={k: float(v) for k, v in tol.items()},
                verify=VerifySettings(**ver),
                **raw,
            )
        except KeyError as exc:
            raise ConfigError(f"missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self):
        try:
            dmc = validate_dmc(self.W, self.silent_index)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.dmc = dmc
        if len(self.P) != len(dmc.inputs):
            raise ConfigError(f"P has {len(self.P)} entries, channel has {len(dmc.inputs)} active inputs")
        try:
            self.p_dist = Distribution(self.P)
        except ValueError as exc:
            raise ConfigError(f"P: {exc}") from None
        if self.input_labels is not None and len(self.input_labels) != len(self.W):
            raise ConfigError("input_labels must name every row of W")
        if self.output_labels is not None and len(self.output_labels) != len(self.W[0]):
            raise ConfigError("output_labels must name every column of W")
        if (self.R is None) == (self.M is None):
            raise ConfigError("give exactly one of R and M")
        if self.R is not None and any(r < 0 or not math.isfinite(r) for r in self.R):
            raise ConfigError("R must be finite and nonnegative")
        if self.M is not None and self.M < 1:
            raise ConfigError("M must be at least 1")
        if any(n < 1 for n in self.n):
            raise ConfigError("block lengths must be positive")
        if not all(math.isfinite(v) for v in self.alpha + self.beta):
            raise ConfigError("alpha and beta must be finite")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.trials < 1 or self.codebooks < 1 or self.budget < 1:
            raise ConfigError("trials, codebooks and budget must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        missing = {"FA", "MD", "DE"} - set(self.tolerance)
        if missing:
            raise ConfigError(f"tolerance lacks {sorted(missing)}")

    def to_dict(self) -> dict:
        return {
            "channel": {
                "W": self.W,
                "silent_index": self.silent_index,
                "input_labels": self.input_labels,
                "output_labels": self.output_labels,
            },
            "P": self.P,
            "R": self.R,
            "M": self.M,
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "method": self.method,
            "trials": self.trials,
            "codebooks": self.codebooks,
            "budget": self.budget,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "resolution": self.resolution,
            "verify": {f.name: getattr(self.verify, f.name) for f in fields(VerifySettings)},
        }

    # derived quantities
    def grid(self):
        return list(itertools.product(self.alpha, self.beta))

    def M_at(self, n: int, rate: float | None = None) -> int:
        if self.M is not None:
            return self.M
        return codebook_size(self.R[0] if rate is None else rate, n)

    def settings(self) -> SearchSettings:
        return SearchSettings(resolution=self.resolution)


# output -------------------------------------------------------------------------

def _clean(v):
    if isinstance(v, float):
        return _json_real(v) if v != -math.inf else "-inf"
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def render(command: str, cfg: RunConfig, records: list[dict], fmt: str) -> str:
    head = {"record": "run", "command": command, "version": __version__, "config": cfg.to_dict()}
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("# " + json.dumps(head, sort_keys=True) + "\n")
        writer = csv.DictWriter(buf, CSV_HEADERS[command], extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for r in records:
            writer.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in _clean(r).items()})
        return buf.getvalue()
    lines = [json.dumps(head, sort_keys=True)]
    lines += [json.dumps(_clean(r), sort_keys=True) for r in records]
    return "\n".join(lines) + "\n"


def read_records(path: Path) -> tuple[dict, list[dict]]:
    """Parse a JSON-lines output file into (run header, records)."""
    text = Path(path).read_text().splitlines()
    rows = [json.loads(line) for line in text if line.strip()]
    if not rows or rows[0].get("record") != "run":
        raise ConfigError(f"{path} is not an output of this tool")
    return rows[0], rows[1:]


# commands ----------------------------------------------------------------------

def _problem(cfg: RunConfig, rate, alpha, beta) -> ExponentProblem:
    try:
        return ExponentProblem(cfg.dmc, cfg.p_dist, rate, alpha, beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _rates(cfg: RunConfig) -> list[float]:
    if cfg.R is not None:
        return cfg.R
    return sorted({math.log(cfg.M) / n for n in cfg.n})


def cmd_exponents(cfg: RunConfig, fmt: str = "jsonl") -> tuple[int, list[dict]]:
    if not cfg.dmc.full_support:
        x, y = cfg.dmc.zero_entries()[0]
        raise ConfigError(f"exponents need a full-support channel; W({y}|{x}) = 0")
    records = []
    for rate in _rates(cfg):
        for alpha, beta in cfg.grid():
            rep = compute_exponents(_problem(cfg, rate, alpha, beta), cfg.settings())
            d = rep.to_dict()
            if fmt == "csv":
                flat = {"alpha": alpha, "beta": beta, "R": rate, **rep.values()}
                nr = d["no_rate_loss"]
                flat.update(D_PW=nr["D_PW"], I_PW=nr["I_PW"], no_rate_loss=nr["holds"])
                records.append(flat)
            else:
                d.pop("version")
                records.append({"record": "exponents", **d})
    return EXIT_OK, records


def _simulate_one(cfg: RunConfig, n: int, alpha: float, beta: float, seq: np.random.SeedSequence) -> dict:
    M = cfg.M_at(n)
    counts = TypeDescriptor.from_distribution(cfg.p_dist.probs, n)
    rec = {"record": "simulate", "n": n, "M": M, "R_eff": math.log(M) / n, "counts": list(counts.counts),
           "alpha": alpha, "beta": beta}
    try:
        ens = EnsembleConfig(cfg.dmc, counts, n, M, seed=cfg.seed)
        det = DetectorParams(alpha, beta)
        method = cfg.method
        if method == "auto":
            method = "exact-y" if cfg.dmc.n_outputs**n <= cfg.budget else "monte-carlo"
        if method == "exact-y":
            est = exact_y_average(ens, det, cfg.codebooks, make_rng(seq), budget=cfg.budget)
        elif method == "exact-full":
            est = exact_full_oracle(ens, det, budget=min(cfg.budget, FULL_ORACLE_BUDGET))
        else:
            if cfg.trials > cfg.budget:
                raise BudgetExceededError(f"{cfg.trials} trials exceed budget {cfg.budget}")
            est = estimate_probabilities(ens, det, cfg.trials, make_rng(seq))
    except (BudgetExceededError, ValueError) as exc:
        rec.update(method=cfg.method, error=str(exc))
        return rec
    rec.update(est.to_dict())
    rec["error"] = None
    return rec


def cmd_simulate(cfg: RunConfig) -> tuple[int, list[dict]]:
    jobs = [(n, a, b) for n in cfg.n for a, b in cfg.grid()]
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(jobs))
    return EXIT_OK, [_simulate_one(cfg, n, a, b, s) for (n, a, b), s in zip(jobs, seqs)]


def _kind_series(records, kind):
    out = []
    for r in records:
        log_p = r.get("log_" + kind)
        if r.get("error") or log_p is None or isinstance(log_p, str):
            continue
        se = r.get("se_" + kind)
        out.append((r["n"], None, se, float(log_p)))
    return out


def predicted_exponents(cfg: RunConfig, alpha, beta, ns) -> dict[str, float]:
    """Engine exponents averaged over the realized rates ln(M)/n."""
    vals = []
    for n in ns:
        rate = math.log(cfg.M_at(n)) / n
        vals.append(compute_exponents(_problem(cfg, rate, alpha, beta), cfg.settings()).values())
    return {k: float(np.mean([v[k] for v in vals])) for k in ("E_FA", "E_MD", "E_DE")}


def cmd_compare(cfg: RunConfig, records: list[dict] | None = None) -> tuple[int, list[dict]]:
    if records is None:
        _, records = cmd_simulate(cfg)
    status = EXIT_OK
    rows = []
    for alpha, beta in cfg.grid():
        mine = [r for r in records if r.get("record") == "simulate" and r["alpha"] == alpha and r["beta"] == beta]
        ns = sorted({r["n"] for r in mine if not r.get("error")})
        if len(ns) < 3:
            raise ConfigError(f"(alpha, beta) = ({alpha}, {beta}): need 3 usable block lengths, have {len(ns)}")
        pred = predicted_exponents(cfg, alpha, beta, ns)
        for kind in ("FA", "MD", "DE"):
            series = _kind_series(mine, kind.lower())
            usable = [s for s in series if math.isfinite(s[3])]
            if len(usable) < 3:
                raise ConfigError(f"{kind} at ({alpha}, {beta}): fewer than 3 positive probabilities")
            fit = fit_exponent(usable)
            expected = pred["E_" + kind]
            gap = abs(fit.slope - expected) if math.isfinite(expected) else math.inf
            tol = cfg.tolerance[kind]
            ok = gap <= tol
            if not ok:
                status = EXIT_TOLERANCE
            rows.append({
                "record": "compare", "kind": kind, "alpha": alpha, "beta": beta,
                "slope": fit.slope, "predicted": expected, "gap": gap, "tolerance": tol, "within": ok,
                "intercept": fit.intercept, "log_coef": fit.log_coef, "n_points": len(usable),
                "points": fit.points,
            })
    return status, rows


def _verify_dominance(cfg: RunConfig, seq) -> dict:
    v = cfg.verify
    rng = make_rng(seq)
    instances = violations = premises = 0
    for n in v.dominance_n:
        counts = TypeDescriptor.from_distribution(cfg.p_dist.probs, n)
        size = cfg.dmc.n_outputs**n
        for M in v.dominance_M:
            ens = EnsembleConfig(cfg.dmc, counts, n, M)
            for _ in range(v.dominance_codebooks):
                cb = sample_codebook(ens, rng)
                det = DetectorParams(*rng.uniform(-0.5, 0.5, size=2))
                for _ in range(v.dominance_partitions):
                    labels = rng.integers(0, M + 1, size=size)
                    rep = dominance_check(cb, cfg.dmc, det, labels, budget=cfg.budget)
                    instances += 1
                    premises += rep.premise
                    violations += not rep.lemma_holds
    return {"property": "dominance", "instances": instances, "violations": violations, "skipped": 0,
            "passed": violations == 0, "detail": {"premise_held": premises}}


def _verify_inclusions(cfg: RunConfig, seq) -> list[dict]:
    v = cfg.verify
    rng = make_rng(seq)
    inst = v_max = v_np = skipped = 0
    for n in range(1, v.inclusion_max_n + 1):
        if cfg.dmc.n_outputs**n > cfg.budget:
            break
        counts = TypeDescriptor.from_distribution(cfg.p_dist.probs, n)
        cb = sample_codebook(EnsembleConfig(cfg.dmc, counts, n, v.inclusion_M), rng)
        for a, b in itertools.product(v.inclusion_alpha, v.inclusion_beta):
            rep = inclusion_check(cb, cfg.dmc, DetectorParams(a, b), budget=cfg.budget)
            inst += 1
            v_max += rep.max_violations
            if rep.np_violations is None:
                skipped += 1
            else:
                v_np += rep.np_violations
    return [
        {"property": "inclusion_max", "instances": inst, "violations": v_max, "skipped": 0, "passed": v_max == 0,
         "detail": None},
        {"property": "inclusion_np", "instances": inst - skipped, "violations": v_np, "skipped": skipped,
         "passed": v_np == 0, "detail": "checked for alpha >= 0 only"},
    ]


def _verify_oracle(cfg: RunConfig) -> dict:
    v = cfg.verify
    if not cfg.dmc.full_support:
        return {"property": "engine_vs_oracle", "instances": 0, "violations": 0, "skipped": len(v.oracle_points),
                "passed": True, "detail": "channel has zero entries"}
    active = cfg.dmc.active_matrix()
    if active.shape == (2, 2):
        grid = DoubleGrid(cfg.dmc.w, cfg.dmc.silent, cfg.p_dist.probs, *v.oracle_resolution)
    else:
        grid = JointGrid(cfg.dmc.w, cfg.dmc.silent, cfg.p_dist.probs, v.oracle_resolution[-1])
    worst = 0.0
    violations = inst = 0
    for rate, alpha, beta in v.oracle_points:
        rep = compute_exponents(_problem(cfg, rate, alpha, beta), cfg.settings()).values()
        ref = all_exponents(grid, rate, alpha, beta)
        for name, want in ref.items():
            got = rep[name]
            inst += 1
            if math.isinf(want) and math.isinf(got):
                continue
            gap = abs(got - want)
            worst = max(worst, gap)
            violations += gap > v.oracle_tolerance
    return {"property": "engine_vs_oracle", "instances": inst, "violations": violations, "skipped": 0,
            "passed": violations == 0, "detail": {"max_gap": worst, "tolerance": v.oracle_tolerance}}


def cmd_verify(cfg: RunConfig) -> tuple[int, list[dict]]:
    s_dom, s_inc = np.random.SeedSequence(cfg.seed).spawn(2)
    rows = [_verify_dominance(cfg, s_dom), *_verify_inclusions(cfg, s_inc), _verify_oracle(cfg)]
    for r in rows:
        r["record"] = "verify"
    return EXIT_OK, rows


# entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slotsync", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("exponents", "simulate", "compare", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", type=Path, help="output file (.csv for a table, anything else for JSON lines)")
        p.add_argument("--budget", type=int, help="override the enumeration budget")
        p.add_argument("--tolerance", type=float, help="one tolerance for all exponent kinds")
        if name == "compare":
            p.add_argument("--records", type=Path, help="simulate output to reuse instead of simulating")
    return ap


def load_config(args) -> RunConfig:
    try:
        text = args.config.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        # an earlier output file: its first line is the run header
        try:
            raw = json.loads(text.split("\n", 1)[0])
        except json.JSONDecodeError:
            raise ConfigError(f"{args.config}: {exc}") from None
    if isinstance(raw, dict) and raw.get("record") == "run":
        raw = raw["config"]
    if isinstance(raw, dict):
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.budget is not None:
            raw["budget"] = args.budget
        if args.tolerance is not None:
            raw["tolerance"] = args.tolerance
    return RunConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = "csv" if args.out is not None and args.out.suffix == ".csv" else "jsonl"
    try:
        cfg = load_config(args)
        if args.command == "exponents":
            status, records = cmd_exponents(cfg, fmt)
        elif args.command == "simulate":
            status, records = cmd_simulate(cfg)
        elif args.command == "compare":
            prior = None
            if args.records is not None:
                if not args.records.exists():
                    raise ConfigError(f"simulate records {args.records} not found")
                _, prior = read_records(args.records)
            status, records = cmd_compare(cfg, prior)
        else:
            status, records = cmd_verify(cfg)
    except ConfigError as exc:
        print(f"slotsync: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = render(args.command, cfg, records, fmt)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return status
