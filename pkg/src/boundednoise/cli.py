"""Command-line front end.

Every subcommand writes data (JSON or CSV) to stdout or ``--output`` and
progress to stderr.  Exit codes: 0 success, 1 usage error, 2 infeasible or
rejected, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .adaptive import GAUSS_SPLITS, GAUSSIAN, max_queries_for_sample_size
from .certification import (SCHEMA_VERSION, CertConfig, PrivacyParams, gaussian_sigma_opt,
                            max_error_quantile, noise_upper_bound, test_privacy)
from .empirical import falsifier_check
from .errors import DomainError, InfeasibleError, NumericError
from .noise import NoiseFamily, ScaledNoise
from .sampler import RngState, sample
from .theory import (RateFunction, delta_star_k, heavy_tail_bound, moment_constant_m, t_star)

EXIT_OK, EXIT_USAGE, EXIT_REJECTED, EXIT_NUMERIC = 0, 1, 2, 3
QUANTILES = (0.5, 0.95, 0.999, 1.0 - 1e-6)
QUANTILE_LABELS = ("q0.5", "q0.95", "q0.999", "q1-1e-6")
JOBS_ENV = "BOUNDEDNOISE_JOBS"

_CAMEL = {
    "delta1Fraction": "delta1_fraction", "mgfPanels": "mgf_panels", "tailT": "tail_horizon",
    "tailHorizon": "tail_horizon", "tGridPoints": "t_grid_points",
    "lambdaTolerance": "lambda_tolerance", "bisectRelTol": "bisect_rel_tol",
    "lambdaGridRatio": "lambda_grid_ratio", "lambdaGridMax": "lambda_grid_max",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _float_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _family(args) -> NoiseFamily:
    if args.family == "poly":
        return NoiseFamily.poly(args.p)
    if args.family == "single":
        return NoiseFamily.single_exp()
    return NoiseFamily.double_exp()


def _config(args) -> CertConfig:
    if not getattr(args, "config", None):
        return CertConfig()
    with open(args.config) as fh:
        raw = json.load(fh)
    raw.pop("schemaVersion", None)
    return CertConfig.from_dict({_CAMEL.get(k, k): v for k, v in raw.items()})


def _jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    return max(1, int(os.environ.get(JOBS_ENV, "1")))


def _emit(args, text):
    if getattr(args, "output", None):
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(args):
    return getattr(args, "format", None)


def _emit_table(args, header, rows):
    if _fmt(args) == "json":
        body = {"schemaVersion": SCHEMA_VERSION, "columns": list(header),
                "rows": [[float(x) if isinstance(x, float) else x for x in r] for r in rows]}
        _emit(args, _json_text(body))
    else:
        _emit(args, _csv_text(header, rows))


def _emit_doc(args, doc):
    if _fmt(args) == "csv":
        flat = {k: v for k, v in doc.items() if not isinstance(v, (dict, list))}
        _emit(args, _csv_text(list(flat), [list(flat.values())]))
    else:
        _emit(args, _json_text(doc))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))       # preserves input order


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_calibrate(args):
    fam = _family(args)
    params = PrivacyParams(args.eps, args.delta, args.k, args.Delta)
    R, cert = noise_upper_bound(fam, params, _config(args), return_certificate=True)
    _emit_doc(args, cert.to_dict())
    return EXIT_OK


def cmd_verify(args):
    cert = test_privacy(_family(args), args.R, PrivacyParams(args.eps, args.delta, args.k, args.Delta),
                        _config(args))
    _emit_doc(args, cert.to_dict())
    return EXIT_OK if cert.certified else EXIT_REJECTED


def _compare_row(job):
    fam_dict, eps, delta, k, Delta, cfg = job
    fam = NoiseFamily(fam_dict["kind"], fam_dict.get("p", 0.0))
    params = PrivacyParams(eps, delta, k, Delta)
    R = noise_upper_bound(fam, params, CertConfig.from_dict(cfg))
    scaled = ScaledNoise(fam, R)
    sigma = gaussian_sigma_opt(params)
    norm = math.sqrt(k * math.log(1.0 / delta)) / eps
    bq = [max_error_quantile(scaled, k, q) for q in QUANTILES]
    gq = [max_error_quantile(sigma, k, q) for q in QUANTILES]
    raw = [R] + bq + [sigma] + gq
    return [k, eps, delta, Delta, norm] + raw + [x / norm for x in raw]


def cmd_compare(args):
    fam = _family(args)
    sweeps = [(n, v) for n, v in (("k", args.k_sweep), ("eps", args.eps_sweep),
                                  ("delta", args.delta_sweep)) if v is not None]
    if len(sweeps) != 1:
        raise UsageError("give exactly one of --k-sweep, --eps-sweep, --delta-sweep")
    name, values = sweeps[0]
    cfg = _config(args).to_dict()
    famd = {"kind": fam.kind.value, "p": fam.p}
    jobs = []
    for v in values:
        k = int(v) if name == "k" else args.k
        eps = v if name == "eps" else args.eps
        delta = v if name == "delta" else args.delta
        if eps is None or delta is None or k is None:
            raise UsageError("--eps, --delta and --k are required for the fixed axes")
        PrivacyParams(eps, delta, k, args.Delta)
        jobs.append((famd, eps, delta, k, args.Delta, cfg))
    _progress(f"compare: {len(jobs)} points, {_jobs(args)} jobs")
    rows = _map(_compare_row, jobs, _jobs(args))
    raw_names = (["bounded_R"] + [f"bounded_{q}" for q in QUANTILE_LABELS] + ["gauss_sigma"]
                 + [f"gauss_{q}" for q in QUANTILE_LABELS])
    header = (["k", "epsilon", "delta", "Delta", "normalizer"] + raw_names
              + [f"{c}_norm" for c in raw_names])
    _emit_table(args, header, rows)
    return EXIT_OK


def _adaptive_row(job):
    n, alpha, beta, split, cfg = job
    cfgo = CertConfig.from_dict(cfg)
    k1 = max_queries_for_sample_size(n, alpha, beta, NoiseFamily.poly(1), cfgo)
    k2 = max_queries_for_sample_size(n, alpha, beta, NoiseFamily.poly(2), cfgo)
    kg = max_queries_for_sample_size(n, alpha, beta, GAUSSIAN, gaussian_split=split)
    return [n, k1, k2, kg]


def cmd_adaptive(args):
    jobs = [(int(n), args.alpha, args.beta, args.gaussian_split, _config(args).to_dict())
            for n in args.n_sweep]
    _progress(f"adaptive: {len(jobs)} sample sizes, {_jobs(args)} jobs")
    rows = _map(_adaptive_row, jobs, _jobs(args))
    _emit_table(args, ["n", "k_bounded_p1", "k_bounded_p2", "k_gaussian"], rows)
    return EXIT_OK


def cmd_sample(args):
    scaled = ScaledNoise(_family(args), args.R)
    draws = sample(scaled, RngState(args.seed, args.stream), args.n)
    _emit_table(args, ["index", "value"], [(i, float(x)) for i, x in enumerate(draws)])
    return EXIT_OK


def cmd_falsify(args):
    scaled = ScaledNoise(_family(args), args.R)
    rep = falsifier_check(scaled, args.k, args.Delta, args.eps, args.delta, args.n,
                          RngState(args.seed, args.stream))
    out = {"schemaVersion": SCHEMA_VERSION, "R": args.R, "epsilon": args.eps,
           "delta": args.delta, "k": args.k, "Delta": args.Delta, "seed": args.seed}
    out.update(rep.to_dict())
    _emit_doc(args, out)
    return EXIT_REJECTED if rep.refuted else EXIT_OK


def cmd_theory(args):
    if args.rate == "poly":
        rate = RateFunction.poly(args.p)
    elif args.rate == "double":
        rate = RateFunction.double_exp()
    else:
        rate = RateFunction.linear()
    k = args.k
    ts = t_star(rate, k)
    M = moment_constant_m(rate, args.C)
    n = args.n if args.n is not None else int(k)
    tgrid = args.t_grid if args.t_grid is not None else [ts * f for f in (0.25, 0.5, 1, 2, 4)]
    out = {
        "schemaVersion": SCHEMA_VERSION, "rate": rate.label, "k": k, "C": args.C, "Cf": args.Cf,
        "tStar": ts, "deltaStarK": delta_star_k(rate, k, args.Cf), "M": M, "n": n,
        "heavyTail": [{"t": t, "bound": heavy_tail_bound(rate, args.C, M, n, t)} for t in tgrid],
    }
    _emit_doc(args, out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_family(p):
    p.add_argument("--family", choices=("poly", "single", "double"), default="poly")
    p.add_argument("--p", type=float, default=2.0, help="exponent for --family poly")


def _add_privacy(p, required=True):
    p.add_argument("--eps", type=float, required=required)
    p.add_argument("--delta", type=float, required=required)
    p.add_argument("--k", type=int, required=required)
    p.add_argument("--Delta", type=float, default=1.0)


def _add_common(p):
    p.add_argument("--output", "-o", help="write data here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--config", help="JSON file with certificate settings")


def build_parser():
    ap = _Parser(prog="boundednoise", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("calibrate", help="smallest certified noise magnitude R*")
    _add_family(p), _add_privacy(p), _add_common(p)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("verify", help="certificate at an explicit R")
    _add_family(p), _add_privacy(p), _add_common(p)
    p.add_argument("--R", type=float, required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("compare", help="bounded noise vs Gaussian over a sweep")
    _add_family(p), _add_privacy(p, required=False), _add_common(p)
    p.add_argument("--k-sweep", type=_float_list)
    p.add_argument("--eps-sweep", type=_float_list)
    p.add_argument("--delta-sweep", type=_float_list)
    p.add_argument("--jobs", type=int)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("adaptive", help="queries answerable per sample size")
    _add_common(p)
    p.add_argument("--n-sweep", type=_float_list, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--gaussian-split", choices=GAUSS_SPLITS, default="half")
    p.add_argument("--jobs", type=int)
    p.set_defaults(fn=cmd_adaptive)

    p = sub.add_parser("sample", help="seeded noise draws")
    _add_family(p)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("falsify", help="Monte Carlo refutation attempt at an explicit R")
    _add_family(p), _add_privacy(p), _add_common(p)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.set_defaults(fn=cmd_falsify)

    p = sub.add_parser("theory", help="t*, delta*_k, M and the heavy-tail bound")
    p.add_argument("--rate", choices=("poly", "double", "linear"), default="poly")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--Cf", type=float, default=1.0)
    p.add_argument("--n", type=int)
    p.add_argument("--t-grid", type=_float_list)
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(fn=cmd_theory)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except DomainError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc} {getattr(exc, 'diagnostics', '')}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
