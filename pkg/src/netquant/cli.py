"""Command-line interface: simulate / estimate / band / truth / replicate.

Configuration comes from an optional JSON file plus command-line flags
(flags win). Every output CSV starts with a `# netquant ...` comment line
embedding the resolved-config hash and seed, followed by a mandatory
header row; a JSON run manifest with the fully resolved configuration and
nuisance diagnostics is written next to the tables.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ArgumentError, CapacityError, ConfigError,
                     DatasetValidationError, DegenerateOutcomeError, FitError,
                     NetquantError, OverlapError, PositivityError, SolverError,
                     VarianceError)
from .estimators import (EstimatorOptions, build_nuisance, effects,
                         ipw_quantile_crossfit, np_quantile_from_nuisance)
from .inference import band_over_delta, band_over_q, pointwise_ci
from .records import ClusterRecord, EstimandKind, build_dataset
from .simulation import (DgpSpec, ReplicateConfig, TruthOracle, generate_study,
                         replicate)
from .policies import PolicySpec

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_OVERLAP = 4
EXIT_SOLVER = 5
EXIT_IO = 6

_EXIT_BY_ERROR = (
    (ConfigError, EXIT_CONFIG),
    (ArgumentError, EXIT_CONFIG),
    (CapacityError, EXIT_CONFIG),
    (DatasetValidationError, EXIT_VALIDATION),
    (DegenerateOutcomeError, EXIT_VALIDATION),
    (OverlapError, EXIT_OVERLAP),
    (PositivityError, EXIT_OVERLAP),
    (SolverError, EXIT_SOLVER),
    (VarianceError, EXIT_SOLVER),
    (FitError, EXIT_SOLVER),
    (OSError, EXIT_IO),
)


def _fmt(x) -> str:
    """Full-precision, round-trippable cell formatting."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return "" if x is None else str(x)


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path, header, rows, config_hash: str, seed) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# netquant v{__version__} config_hash={config_hash} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_dataset_csv(dataset, path, config_hash: str, seed) -> None:
    header = ["cluster_id", "unit_id", "A", "Y"] + list(dataset.covariate_names)
    rows = []
    for c in dataset.clusters:
        for j in range(c.size):
            rows.append([c.cluster_id, j + 1, int(c.treatments[j]), c.outcomes[j],
                         *c.covariates[j]])
    write_csv(path, header, rows, config_hash, seed)


def read_dataset_csv(path):
    """Parse the long-format dataset schema back into a Dataset.

    Clusters are grouped by cluster_id; unit order follows file order.
    """
    path = Path(path)
    groups: dict = {}
    order: list = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.reader(lines)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetValidationError(["dataset file is empty"]) from None
        required = ["cluster_id", "unit_id", "A", "Y"]
        if header[:4] != required:
            raise DatasetValidationError(
                [f"header must start with {required}, got {header[:4]}"])
        cov_names = header[4:]
        if not cov_names:
            raise DatasetValidationError(["no covariate columns found"])
        for line_no, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetValidationError(
                    [f"line {line_no}: expected {len(header)} fields, got {len(row)}"])
            cid = row[0]
            if cid not in groups:
                groups[cid] = {"A": [], "Y": [], "X": []}
                order.append(cid)
            try:
                groups[cid]["A"].append(float(row[2]))
                groups[cid]["Y"].append(float(row[3]))
                groups[cid]["X"].append([float(v) for v in row[4:]])
            except ValueError as exc:
                raise DatasetValidationError([f"line {line_no}: {exc}"]) from None
    clusters = [ClusterRecord(cluster_id=cid, covariates=np.array(g["X"]),
                              treatments=np.array(g["A"]),
                              outcomes=np.array(g["Y"]))
                for cid, g in ((cid, groups[cid]) for cid in order)]
    return build_dataset(clusters, covariate_names=tuple(cov_names))


def write_manifest(path, command, config, config_hash, outputs, diagnostics=None):
    manifest = {
        "command": command,
        "package": f"netquant {__version__}",
        "config_hash": config_hash,
        "resolved_config": config,
        "outputs": [str(o) for o in outputs],
        "diagnostics": diagnostics or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return manifest


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object of key-value pairs")
    return cfg


def resolve_config(defaults: dict, file_cfg: dict, flag_cfg: dict) -> dict:
    """defaults < config file < command-line flags; unknown keys rejected."""
    unknown = sorted(set(file_cfg) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}; "
                          f"known keys: {', '.join(sorted(defaults))}")
    resolved = dict(defaults)
    resolved.update(file_cfg)
    resolved.update({k: v for k, v in flag_cfg.items() if v is not None})
    return resolved


def _parse_policies(text) -> list[PolicySpec]:
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    out = []
    for item in items:
        out.append(PolicySpec.parse(item))
    return out


def _parse_estimands(text) -> list[EstimandKind]:
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    return [EstimandKind.parse(s) for s in items]


def _parse_floats(text) -> list[float]:
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        return [float(v) for v in items]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _options_from(config: dict) -> EstimatorOptions:
    return EstimatorOptions(eps=config.get("eps", 0.05),
                            kernel=config.get("kernel", "normal"),
                            bandwidth=config.get("bandwidth"),
                            truncate_weights=config.get("truncate_weights", False),
                            truncation_cap=config.get("truncation_cap", 50.0),
                            eta_pairing=config.get("eta_pairing", "fixed-own"),
                            ipw_bootstrap=config.get("ipw_bootstrap", 500))


# ---------------------------------------------------------------- simulate

SIMULATE_DEFAULTS = {
    "n": 500, "scenario": "A", "seed": 0, "out": "dataset.csv",
    "out_dir": ".", "rho_a": 0.1, "rho_y": 0.1,
    "ps_coefs": [-0.5, 0.3, 0.3, 0.3],
    "outcome_coefs": [3.0, 1.5, 3.0, 5.0, 5.0, 2.0],
    "size_support": [3, 4, 5, 6],
}


def cmd_simulate(args) -> int:
    cfg = resolve_config(SIMULATE_DEFAULTS, _load_config_file(args.config), {
        "n": args.n, "scenario": args.scenario, "seed": args.seed,
        "out": args.out, "out_dir": args.out_dir,
    })
    spec = DgpSpec(n=int(cfg["n"]), scenario=str(cfg["scenario"]), seed=cfg["seed"],
                   rho_a=float(cfg["rho_a"]), rho_y=float(cfg["rho_y"]),
                   ps_coefs=tuple(cfg["ps_coefs"]),
                   outcome_coefs=tuple(cfg["outcome_coefs"]),
                   size_support=tuple(cfg["size_support"]))
    dataset = generate_study(spec)
    hash_ = _config_hash(cfg)
    out = Path(cfg["out_dir"]) / cfg["out"]
    write_dataset_csv(dataset, out, hash_, cfg["seed"])
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    write_manifest(manifest_path, "simulate", cfg, hash_, [out],
                   {"n_clusters": dataset.n_clusters,
                    "n_individuals": dataset.n_individuals,
                    "dgp_overrides": spec.overrides()})
    print(f"wrote {dataset.n_individuals} rows ({dataset.n_clusters} clusters) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- estimate

ESTIMATE_DEFAULTS = {
    "input": None, "policies": "cps:1", "estimands": "star,0,1", "q": "0.5",
    "reference": None, "estimator": "both", "L": 3, "learner": "logistic",
    "alpha": 0.05, "seed": 0, "out_dir": ".", "out": "estimates.csv",
    "eps": 0.05, "kernel": "normal", "bandwidth": None,
    "truncate_weights": False, "truncation_cap": 50.0,
    "eta_pairing": "fixed-own", "ipw_bootstrap": 500, "figures": True,
}

ESTIMATE_HEADER = ["estimand", "policy_kind", "parameter", "reference_kind",
                   "reference_parameter", "t", "q", "estimator", "point", "se",
                   "ci_lo", "ci_hi", "ee_residual", "solver_iterations",
                   "truncated_clusters"]


def _estimate_rows(nuis, policies, estimands, q_levels, estimators, alpha):
    rows, diag = [], {}
    seen = set()
    for spec in policies:
        for t in estimands:
            for q in q_levels:
                key = (spec.kind, spec.parameter, t.value, q)
                if key in seen:
                    warnings.warn(f"duplicate estimand row {key} dropped", stacklevel=2)
                    continue
                seen.add(key)
                if "np" in estimators:
                    est = np_quantile_from_nuisance(nuis, t, q, spec)
                    lo, hi = pointwise_ci(est, alpha)
                    rows.append([f"Q({t.value})", spec.kind, spec.parameter, None, None,
                                 t.value, q, "np", est.theta_hat, est.se, lo, hi,
                                 est.diagnostics["ee_residual"],
                                 est.diagnostics["solver_iterations"],
                                 est.diagnostics["truncated_clusters"]])
                    diag.setdefault("np", est.diagnostics)
                if "ipw" in estimators:
                    est = ipw_quantile_crossfit(nuis, t, q, spec)
                    rows.append([f"Q({t.value})", spec.kind, spec.parameter, None, None,
                                 t.value, q, "ipw", est.theta_hat, est.se,
                                 est.diagnostics["ci_lo"], est.diagnostics["ci_hi"],
                                 None, None, None])
    return rows, diag


def _effect_rows(dataset, nuis, policies, reference, q_levels, alpha):
    from .inference import z_quantile
    rows = []
    for spec in policies:
        for q in q_levels:
            res = effects(dataset, q, spec, reference, nuisance=nuis)
            for key in ("oqe", "dqe", "dqe_ref", "sqe0", "sqe1", "tqe"):
                eff = res[key]
                z = z_quantile(alpha)
                rows.append([key, eff.policy.kind, eff.policy.parameter,
                             eff.reference.kind, eff.reference.parameter,
                             None, q, "np", eff.value, eff.se,
                             eff.value - z * eff.se, eff.value + z * eff.se,
                             None, None, None])
    return rows


def cmd_estimate(args) -> int:
    cfg = resolve_config(ESTIMATE_DEFAULTS, _load_config_file(args.config), {
        "input": args.input, "policies": args.policies, "estimands": args.estimands,
        "q": args.q, "reference": args.reference, "estimator": args.estimator,
        "L": args.L, "learner": args.learner, "seed": args.seed,
        "out_dir": args.out_dir, "out": args.out, "alpha": args.alpha,
        "figures": None if args.no_figures is False else False,
    })
    if cfg["input"] is None:
        raise ConfigError("estimate requires an input dataset (--input or config key 'input')")
    dataset = read_dataset_csv(cfg["input"])
    policies = _parse_policies(cfg["policies"])
    estimands = _parse_estimands(cfg["estimands"])
    q_levels = _parse_floats(cfg["q"])
    estimators = {"both": ("np", "ipw"), "np": ("np",), "ipw": ("ipw",)}.get(cfg["estimator"])
    if estimators is None:
        raise ConfigError(f"estimator must be np, ipw, or both, got {cfg['estimator']!r}")
    options = _options_from(cfg)
    nuis = build_nuisance(dataset, L=int(cfg["L"]), learner=cfg["learner"],
                          options=options, seed=int(cfg["seed"]))
    rows, diag = _estimate_rows(nuis, policies, estimands, q_levels, estimators,
                                float(cfg["alpha"]))
    if cfg["reference"] is not None:
        reference = PolicySpec.parse(cfg["reference"])
        rows += _effect_rows(dataset, nuis, policies, reference, q_levels,
                             float(cfg["alpha"]))
    hash_ = _config_hash(cfg)
    out = Path(cfg["out_dir"]) / cfg["out"]
    write_csv(out, ESTIMATE_HEADER, rows, hash_, cfg["seed"])
    outputs = [out]
    if cfg["figures"]:
        from .report import estimate_figure
        fig_path = out.with_suffix(".png")
        estimate_figure([dict(zip(ESTIMATE_HEADER, r)) for r in rows], fig_path)
        outputs.append(fig_path)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    write_manifest(manifest_path, "estimate", cfg, hash_, outputs,
                   {"nuisance": nuis.diagnostics})
    print(f"wrote {len(rows)} estimate rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- band

BAND_DEFAULTS = {
    "input": None, "mode": "q", "t": "star", "policy": "cps:1", "kind": "cps",
    "q": 0.5, "grid": "0.2,0.3,0.4,0.5,0.6,0.7,0.8", "L": 3,
    "learner": "logistic", "alpha": 0.05, "B": 1000, "seed": 0,
    "out_dir": ".", "out": "band.csv", "eps": 0.05, "kernel": "normal",
    "bandwidth": None, "truncate_weights": False, "truncation_cap": 50.0,
    "eta_pairing": "fixed-own", "ipw_bootstrap": 0, "figures": True,
}

BAND_HEADER = ["row_kind", "grid_name", "grid", "estimate", "se", "pointwise_lo",
               "pointwise_hi", "uniform_lo", "uniform_hi", "c_alpha", "B",
               "alpha", "seed"]


def cmd_band(args) -> int:
    cfg = resolve_config(BAND_DEFAULTS, _load_config_file(args.config), {
        "input": args.input, "mode": args.mode, "t": args.t, "policy": args.policy,
        "kind": args.kind, "q": args.q, "grid": args.grid, "L": args.L,
        "learner": args.learner, "alpha": args.alpha, "B": args.B,
        "seed": args.seed, "out_dir": args.out_dir, "out": args.out,
        "figures": None if args.no_figures is False else False,
    })
    if cfg["input"] is None:
        raise ConfigError("band requires an input dataset (--input or config key 'input')")
    dataset = read_dataset_csv(cfg["input"])
    t = EstimandKind.parse(cfg["t"])
    grid = _parse_floats(cfg["grid"])
    options = _options_from(cfg)
    common = dict(L=int(cfg["L"]), learner=cfg["learner"], alpha=float(cfg["alpha"]),
                  B=int(cfg["B"]), options=options, seed=int(cfg["seed"]))
    if cfg["mode"] == "q":
        band = band_over_q(dataset, t, PolicySpec.parse(cfg["policy"]), grid, **common)
    elif cfg["mode"] == "delta":
        band = band_over_delta(dataset, t, float(cfg["q"]), grid,
                               kind=cfg["kind"], **common)
    else:
        raise ConfigError(f"band mode must be 'q' or 'delta', got {cfg['mode']!r}")
    hash_ = _config_hash(cfg)
    rows = []
    for g in range(band.grid.shape[0]):
        rows.append(["grid", band.grid_name, band.grid[g], band.theta[g], band.se[g],
                     band.pointwise_lo[g], band.pointwise_hi[g], band.uniform_lo[g],
                     band.uniform_hi[g], band.c_alpha, band.B, band.alpha, band.seed])
    rows.append(["meta", band.grid_name, None, None, None, None, None, None, None,
                 band.c_alpha, band.B, band.alpha, band.seed])
    out = Path(cfg["out_dir"]) / cfg["out"]
    write_csv(out, BAND_HEADER, rows, hash_, cfg["seed"])
    outputs = [out]
    if cfg["figures"]:
        from .report import band_figure
        fig_path = out.with_suffix(".png")
        band_figure(band, fig_path)
        outputs.append(fig_path)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    write_manifest(manifest_path, "band", cfg, hash_, outputs,
                   {"c_alpha": band.c_alpha,
                    "uniform_narrower_flag": band.uniform_narrower_flag})
    print(f"wrote band over {band.grid.shape[0]} grid points to {out} "
          f"(c_alpha={band.c_alpha:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------- truth

TRUTH_DEFAULTS = {
    "policies": "cps:0.5,cps:1,cps:2", "estimands": "star,1,0", "q": "0.5",
    "n_super": 2_000_000, "seed": 1, "scenario": "A", "out_dir": ".",
    "out": "truth.csv", "figures": True,
}

TRUTH_HEADER = ["policy_kind", "parameter", "t", "q", "value", "n_super", "mc_se"]


def cmd_truth(args) -> int:
    cfg = resolve_config(TRUTH_DEFAULTS, _load_config_file(args.config), {
        "policies": args.policies, "estimands": args.estimands, "q": args.q,
        "n_super": args.n_super, "seed": args.seed, "out_dir": args.out_dir,
        "out": args.out, "figures": None if args.no_figures is False else False,
    })
    policies = _parse_policies(cfg["policies"])
    estimands = _parse_estimands(cfg["estimands"])
    q_levels = _parse_floats(cfg["q"])
    oracle = TruthOracle(DgpSpec(scenario=str(cfg["scenario"]), seed=int(cfg["seed"])),
                         n_super=int(cfg["n_super"]), seed=int(cfg["seed"]))
    rows, dict_rows = [], []
    for spec in policies:
        for t in estimands:
            for q in q_levels:
                entry = oracle.quantile(spec, t, q)
                rows.append([spec.kind, spec.parameter, t.value, q, entry.value,
                             entry.n_super, entry.mc_se])
                dict_rows.append({"policy_kind": spec.kind, "parameter": spec.parameter,
                                  "t": t.value, "q": q, "value": entry.value})
    hash_ = _config_hash(cfg)
    out = Path(cfg["out_dir"]) / cfg["out"]
    write_csv(out, TRUTH_HEADER, rows, hash_, cfg["seed"])
    outputs = [out]
    if cfg["figures"] and len(q_levels) > 1:
        from .report import truth_figure
        fig_path = out.with_suffix(".png")
        truth_figure(dict_rows, fig_path)
        outputs.append(fig_path)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    write_manifest(manifest_path, "truth", cfg, hash_, outputs)
    print(f"wrote {len(rows)} truth rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- replicate

REPLICATE_DEFAULTS = {
    "replicates": 200, "n": 500, "scenario": "A", "policies": "cps:1",
    "estimands": "star,1,0", "q": 0.5, "L": 3, "learner": "logistic",
    "alpha": 0.05, "seed": 0, "workers": 1, "ipw_bootstrap": 500,
    "n_super": 2_000_000, "truth_seed": 777, "truth_file": None,
    "out_dir": ".", "out": "replicates.csv", "figures": True,
    "eps": 0.05, "kernel": "normal", "bandwidth": None,
    "truncate_weights": False, "truncation_cap": 50.0, "eta_pairing": "fixed-own",
}

REPLICATE_HEADER = ["estimator", "policy_kind", "parameter", "t", "q", "truth",
                    "bias", "mcsd", "coverage", "rmse_ratio", "failures", "seed"]


def _truths_from_file(path, policies, estimands, q):
    truths = {}
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        for row in reader:
            key = (PolicySpec(row["policy_kind"], float(row["parameter"])).label(),
                   row["t"])
            if abs(float(row["q"]) - q) < 1e-12:
                truths[key] = float(row["value"])
    missing = [(p.label(), t.value) for p in policies for t in estimands
               if (p.label(), t.value) not in truths]
    if missing:
        raise ConfigError(f"truth file {path} lacks entries for {missing}")
    return truths


def cmd_replicate(args) -> int:
    cfg = resolve_config(REPLICATE_DEFAULTS, _load_config_file(args.config), {
        "replicates": args.replicates, "n": args.n, "scenario": args.scenario,
        "policies": args.policies, "estimands": args.estimands, "q": args.q,
        "L": args.L, "learner": args.learner, "seed": args.seed,
        "workers": args.workers, "truth_file": args.truth_file,
        "n_super": args.n_super, "out_dir": args.out_dir, "out": args.out,
        "figures": None if args.no_figures is False else False,
    })
    policies = _parse_policies(cfg["policies"])
    estimands = _parse_estimands(cfg["estimands"])
    rep_cfg = ReplicateConfig(replicates=int(cfg["replicates"]), n=int(cfg["n"]),
                              scenario=str(cfg["scenario"]), policies=tuple(policies),
                              estimands=tuple(estimands), q=float(cfg["q"]),
                              L=int(cfg["L"]), learner=cfg["learner"],
                              alpha=float(cfg["alpha"]), seed=int(cfg["seed"]),
                              n_super=int(cfg["n_super"]),
                              truth_seed=int(cfg["truth_seed"]),
                              workers=int(cfg["workers"]),
                              ipw_bootstrap=int(cfg["ipw_bootstrap"]),
                              options=_options_from(cfg))
    truths = None
    if cfg["truth_file"]:
        truths = _truths_from_file(cfg["truth_file"], policies, estimands,
                                   float(cfg["q"]))
    table = replicate(rep_cfg, truths=truths)
    hash_ = _config_hash(cfg)
    rows = [[r[k] for k in REPLICATE_HEADER] for r in table]
    out = Path(cfg["out_dir"]) / cfg["out"]
    write_csv(out, REPLICATE_HEADER, rows, hash_, cfg["seed"])
    outputs = [out]
    if cfg["figures"]:
        from .report import replicate_figure
        fig_path = out.with_suffix(".png")
        replicate_figure(table, fig_path)
        outputs.append(fig_path)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    write_manifest(manifest_path, "replicate", cfg, hash_, outputs,
                   {"invalid_rows": sum(1 for r in table if r["invalid"])})
    print(f"wrote {len(rows)} Monte Carlo rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netquant",
        description="Network quantile causal effects under partial interference")
    parser.add_argument("--version", action="version", version=f"netquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", dest="out_dir", default=None)
        p.add_argument("--out", default=None, help="output CSV filename")

    p = sub.add_parser("simulate", help="generate a synthetic clustered study CSV")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of clusters")
    p.add_argument("--scenario", default=None, choices=("A", "B"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="policy-specific quantiles and effects from a dataset CSV")
    common(p)
    p.add_argument("--input", default=None, help="dataset CSV (simulate schema)")
    p.add_argument("--policies", default=None, help="comma list like cps:0.5,cps:1")
    p.add_argument("--estimands", default=None, help="comma list from {star,0,1}")
    p.add_argument("--q", default=None, help="comma list of quantile levels")
    p.add_argument("--reference", default=None,
                   help="reference policy for effect contrasts, e.g. cps:1")
    p.add_argument("--estimator", default=None, choices=("np", "ipw", "both"))
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--learner", default=None, choices=("logistic", "boost"))
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--no-figures", action="store_true", default=False)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("band", help="uniform confidence band over a q or delta grid")
    common(p)
    p.add_argument("--input", default=None)
    p.add_argument("--mode", default=None, choices=("q", "delta"))
    p.add_argument("--t", default=None, help="estimand: star, 0, or 1")
    p.add_argument("--policy", default=None, help="policy for mode=q, e.g. cps:1")
    p.add_argument("--kind", default=None, choices=("cps", "ips", "uap"),
                   help="policy family for mode=delta")
    p.add_argument("--q", type=float, default=None, help="quantile level for mode=delta")
    p.add_argument("--grid", default=None, help="comma list of grid values")
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--learner", default=None, choices=("logistic", "boost"))
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--B", type=int, default=None, help="bootstrap draws")
    p.add_argument("--no-figures", action="store_true", default=False)
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("truth", help="super-population truth table")
    common(p)
    p.add_argument("--policies", default=None)
    p.add_argument("--estimands", default=None)
    p.add_argument("--q", default=None)
    p.add_argument("--n-super", dest="n_super", type=int, default=None)
    p.add_argument("--no-figures", action="store_true", default=False)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("replicate", help="Monte Carlo bias/coverage study")
    common(p)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--scenario", default=None, choices=("A", "B"))
    p.add_argument("--policies", default=None)
    p.add_argument("--estimands", default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--learner", default=None, choices=("logistic", "boost"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--truth-file", dest="truth_file", default=None,
                   help="reuse a cmd_truth CSV instead of rebuilding the oracle")
    p.add_argument("--n-super", dest="n_super", type=int, default=None)
    p.add_argument("--no-figures", action="store_true", default=False)
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NetquantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for err_type, code in _EXIT_BY_ERROR:
            if isinstance(exc, err_type):
                return code
        return EXIT_UNEXPECTED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
