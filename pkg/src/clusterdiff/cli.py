"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or numerical error.
Cluster, feature and observation indices on the command line and in all
outputs are 1-based.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.stats import kstest

from .errors import ClusterDiffError, DataError
from .inference import ClusteringMethod, bh_adjust, estimate_covariance, fit_clustering, run_test
from .io import read_matrix, read_table, write_matrix, write_table
from .model import FeatureCovariance
from .preprocess import preprocess_counts
from .simulate import SimConfig, run_power, run_type1

METHODS = ("kmeans", "single", "average", "centroid", "ward")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in names if v not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"methods must be among {','.join(METHODS)}")
    return names


def _dump(obj, path) -> None:
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


# --- test -------------------------------------------------------------------


def _cmd_test(args) -> int:
    _, x = read_matrix(args.data)
    method = ClusteringMethod(args.method, args.k, seed=args.seed, t_max=args.tmax)
    fit = fit_clustering(x, method)
    if args.sigma == "estimate":
        sigma = estimate_covariance(x, fit.labels)
    else:
        _, s = read_matrix(args.sigma)
        sigma = FeatureCovariance(s)
    if sigma.q != x.shape[1]:
        raise DataError(f"sigma is {sigma.q}x{sigma.q} but the data have {x.shape[1]} features")
    if len(args.pair) != 2:
        raise UsageError("--pair takes two cluster numbers, e.g. 1,2")
    pair = (args.pair[0] - 1, args.pair[1] - 1)
    features = range(x.shape[1]) if args.feature == "all" else [j - 1 for j in _ints(args.feature)]
    reports = []
    for j in features:
        if not 0 <= j < x.shape[1]:
            raise DataError(f"feature {j + 1} is outside 1..{x.shape[1]}")
        reports.append(run_test(x, sigma, fit, pair, j))
    _dump([r.to_json() for r in reports], args.output)
    if args.table:
        write_table(
            args.table,
            ["feature", "statistic", "sd", "p_selective", "p_naive"],
            [(r.feature + 1, r.statistic, r.sd, r.p_selective, r.p_naive) for r in reports],
        )
    return 0


# --- simulations --------------------------------------------------------------

_SIM_KEYS = ("n", "q", "rho", "K", "replicates", "alpha", "seed", "t_max")


def _sim_base(args, design: str) -> dict:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(base, dict):
            raise DataError("config must be a JSON object")
    base = dict(base)
    base["design"] = design
    for key in _SIM_KEYS:
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    return base


def _sweep(base: dict, args, key: str, default):
    """Values of a sweepable setting: the flag, else the config (scalar or list), else the default."""
    flag = getattr(args, key)
    if flag is not None:
        return flag
    val = base.pop(key, default)
    return val if isinstance(val, list) else [val]


def _cmd_simulate_null(args) -> int:
    base = _sim_base(args, "null_two_cluster")
    base.setdefault("n", 100)
    methods = _sweep(base, args, "method", ["kmeans", "average", "centroid", "single"])
    rows, summary = [], []
    for m in methods:
        cfg = SimConfig.from_dict({**base, "method": m})
        out = run_type1(cfg)
        p = np.array([r.p_selective for r in out])
        pn = np.array([r.p_naive for r in out])
        summary.append({
            "method": m,
            "rho": cfg.rho,
            "replicates": cfg.replicates,
            "alpha": cfg.alpha,
            "selective_rejection_rate": float(np.mean(p <= cfg.alpha)),
            "naive_rejection_rate": float(np.mean(pn <= cfg.alpha)),
            "ks_uniform_p": float(kstest(p, "uniform").pvalue),
        })
        rows += [(m, cfg.rho, r.replicate + 1, r.feature, r.cluster_a, r.cluster_b, r.statistic,
                  r.p_selective, r.p_naive) for r in out]
    write_table(args.output, ["method", "rho", "replicate", "feature", "cluster_a", "cluster_b",
                              "statistic", "p_selective", "p_naive"], rows)
    _dump(summary, args.summary)
    return 0


def _cmd_simulate_power(args) -> int:
    base = _sim_base(args, "three_cluster_power")
    base.setdefault("n", 150)
    methods = _sweep(base, args, "method", ["kmeans", "average", "centroid", "single"])
    deltas = _sweep(base, args, "delta", [4.0, 6.0, 8.0])
    rows, summary = [], []
    for m in methods:
        for d in deltas:
            cfg = SimConfig.from_dict({**base, "method": m, "delta": float(d)})
            s, out = run_power(cfg)
            summary.append({
                "method": m, "rho": cfg.rho, "delta": cfg.delta, "replicates": s.replicates,
                "rejections": s.rejections, "clusters_correct": s.correct,
                "conditional_power": s.conditional_power,
                "detection_probability": s.detection_probability,
            })
            rows += [(m, cfg.rho, cfg.delta, r.replicate + 1, r.feature, r.cluster_a, r.cluster_b,
                      r.effect, r.p_selective, int(r.reject), int(r.clusters_correct)) for r in out]
    write_table(args.output, ["method", "rho", "delta", "replicate", "feature", "cluster_a", "cluster_b",
                              "effect", "p_selective", "reject", "clusters_correct"], rows)
    if args.summary_csv:
        keys = list(summary[0])
        write_table(args.summary_csv, keys, [[s[k] for k in keys] for s in summary])
    _dump(summary, args.summary)
    return 0


# --- adjust / preprocess / oracle ---------------------------------------------


def _cmd_adjust(args) -> int:
    header, body = read_table(args.input)
    if not body:
        raise DataError(f"{args.input} has no data rows")
    col = args.column
    if col is None:
        for cand in ("p_selective", "p", "pvalue", "p_value"):
            if cand in header:
                col = cand
                break
        else:
            if len(header) != 1:
                raise UsageError("cannot tell which column holds p-values; pass --column")
            col = header[0]
    if col not in header:
        raise DataError(f"no column named {col!r} in {args.input}")
    k = header.index(col)
    try:
        p = np.array([float(r[k]) for r in body])
    except ValueError:
        raise DataError(f"column {col!r} is not numeric") from None
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DataError("p-values must lie in [0, 1]")
    adj = bh_adjust(p)
    write_table(args.output, header + [f"{col}_bh"], [r + [float(a)] for r, a in zip(body, adj)])
    return 0


def _cmd_preprocess(args) -> int:
    header, raw = read_matrix(args.input)
    res = preprocess_counts(raw, args.min_total, args.top_k)
    write_matrix(args.output, [header[j] for j in res.columns], res.x)
    _dump({
        "rows_in": int(raw.shape[0]),
        "rows_kept": int(res.rows.size),
        "columns_kept": int(res.columns.size),
        "scale": res.scale,
        "transform": "log2(x + 1)",
        "min_total": args.min_total,
    }, args.meta)
    return 0


def _cmd_oracle_check(args) -> int:
    from .oracle import check_instance, random_instance

    results = []
    if args.data:
        _, x = read_matrix(args.data)
        if args.method is None or args.k is None or args.pair is None or args.feature is None:
            raise UsageError("with --data, --method, --k, --pair and --feature are required")
        method = ClusteringMethod(args.method, args.k, seed=args.seed, t_max=args.tmax)
        if args.sigma:
            _, s = read_matrix(args.sigma)
            sigma = FeatureCovariance(s)
        else:
            sigma = estimate_covariance(x, fit_clustering(x, method).labels)
        rep = check_instance(x, sigma, method, (args.pair[0] - 1, args.pair[1] - 1), args.feature - 1, args.grid)
        if args.csv:
            rep.write_csv(args.csv)
        results.append({"instance": 1, "method": args.method, **rep.summary(), "passed": rep.passed()})
    else:
        rng = np.random.default_rng(args.seed)
        methods = [args.method] if args.method else list(METHODS)
        for i in range(args.random):
            name = methods[i % len(methods)]
            x, sigma, fit, pair, j = random_instance(rng, name)
            rep = check_instance(x, sigma, fit, pair, j, args.grid)
            results.append({"instance": i + 1, "method": name, **rep.summary(), "passed": rep.passed()})
    _dump(results, args.output)
    return 0 if all(r["passed"] for r in results) else 2


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clusterdiff", description="Selective tests for a feature's mean difference between estimated clusters.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test features between two estimated clusters")
    t.add_argument("data", help="numeric CSV, observations as rows")
    t.add_argument("--method", choices=METHODS, default="kmeans")
    t.add_argument("--k", type=int, default=2)
    t.add_argument("--pair", type=_ints, default=[1, 2], help="two clusters, e.g. 1,2")
    t.add_argument("--feature", default="1", help="comma-separated features, or 'all'")
    t.add_argument("--sigma", default="estimate", help="q x q covariance CSV, or 'estimate'")
    t.add_argument("--seed", type=int, default=0, help="k-means initialisation seed")
    t.add_argument("--tmax", type=int, default=50, help="k-means iteration cap")
    t.add_argument("--output", "-o", help="JSON output (default stdout)")
    t.add_argument("--table", help="also write a per-feature p-value CSV")
    t.set_defaults(func=_cmd_test)

    for name, func, help_ in (
        ("simulate-null", _cmd_simulate_null, "Type-I calibration under the two-cluster null design"),
        ("simulate-power", _cmd_simulate_power, "conditional power and detection probability"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON object with SimConfig fields")
        s.add_argument("--n", type=int)
        s.add_argument("--q", type=int)
        s.add_argument("--rho", type=float)
        s.add_argument("--k", dest="K", type=int)
        s.add_argument("--replicates", type=int)
        s.add_argument("--alpha", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--tmax", dest="t_max", type=int)
        s.add_argument("--method", type=_methods, help="comma-separated methods")
        if name == "simulate-power":
            s.add_argument("--delta", type=_floats, help="comma-separated effect sizes")
            s.add_argument("--summary-csv", help="per-cell summary CSV")
        s.add_argument("--output", "-o", help="per-replicate CSV (default stdout)")
        s.add_argument("--summary", help="JSON summary (default stdout)")
        s.set_defaults(func=func)

    a = sub.add_parser("adjust", help="Benjamini-Hochberg adjustment of a p-value column")
    a.add_argument("input")
    a.add_argument("--column", help="p-value column (default: p_selective, p, pvalue or the only column)")
    a.add_argument("--output", "-o")
    a.set_defaults(func=_cmd_adjust)

    pr = sub.add_parser("preprocess", help="normalise and log-transform a counts CSV")
    pr.add_argument("input")
    pr.add_argument("output")
    pr.add_argument("--min-total", type=float, default=1.0)
    pr.add_argument("--top-k", type=int, default=500)
    pr.add_argument("--meta", help="JSON summary (default stdout)")
    pr.set_defaults(func=_cmd_preprocess)

    o = sub.add_parser("oracle-check", help="compare analytic truncation sets with grid re-clustering")
    o.add_argument("--data", help="numeric CSV; otherwise random instances are generated")
    o.add_argument("--random", type=int, default=10, help="number of random instances")
    o.add_argument("--method", choices=METHODS)
    o.add_argument("--k", type=int)
    o.add_argument("--pair", type=_ints)
    o.add_argument("--feature", type=int)
    o.add_argument("--sigma", help="q x q covariance CSV (default: estimated)")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--tmax", type=int, default=50)
    o.add_argument("--grid", type=int, default=4001, help="grid points over +-6 sd")
    o.add_argument("--csv", help="per-point CSV for a --data instance")
    o.add_argument("--output", "-o")
    o.set_defaults(func=_cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ClusterDiffError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
