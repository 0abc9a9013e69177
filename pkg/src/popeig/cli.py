"""Command-line front end: ``popeig <subcommand> [flags]``.

Exit codes: 0 success, 2 usage error, 3 invalid input, 4 numerical failure.
Failures print a JSON error object on stderr and write no report.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, NumericalError, PopEigError
from .estimator import cluster_blocks, estimate_rho, solve_mu
from .model import load_model, make_model
from .montecarlo import export_density, run_trials, summarize
from .radio import (
    RadioScenario,
    confidence_margin,
    estimate_powers,
    scenario_to_model,
    simulate_coverage,
)
from .sampling import load_data, sample_spectrum, synthesize_spectrum
from .spectrum import separability_check, support_clusters
from .variance import (
    DEFAULT_NODES,
    empirical_theta,
    empirical_theta_quadrature,
    limiting_theta,
)

EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------------------
# output


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_text(header, rows, metadata) -> str:
    buf = io.StringIO()
    for key in ("version", "seed"):
        buf.write(f"# {key}={metadata.get(key)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# argument helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _bins(text: str) -> int:
    v = _positive_int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"need at least 2 bins, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _model_source(args, *, require_full_rank: bool = True):
    inline = args.rhos is not None
    from_file = getattr(args, "model", None) is not None
    if inline == from_file:
        raise UsageError("give the model either inline (--rhos/--mults/--samples) or with --model, not both")
    if from_file:
        return load_model(args.model)
    if args.mults is None or args.samples is None:
        raise UsageError("--rhos needs --mults and --samples")
    return make_model(args.rhos, args.mults, args.samples, require_full_rank=require_full_rank)


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} draws random data and needs an explicit --seed")
    return args.seed


def _spectrum_and_mults(args):
    """Sample spectrum from --data (with --mults) or synthesized from a model and --seed."""
    if args.data is not None:
        if args.rhos is not None or args.model is not None:
            raise UsageError("--data cannot be combined with a model source")
        if args.mults is None:
            raise UsageError("--data needs --mults")
        spec = sample_spectrum(load_data(args.data))
        if sum(args.mults) != spec.n_dim:
            raise InputError(f"--mults sum to {sum(args.mults)} but the data has N={spec.n_dim} rows")
        return spec, list(args.mults), None
    model = _model_source(args)
    spec = synthesize_spectrum(model, _require_seed(args))
    return spec, list(model.mults), model


# ----------------------------------------------------------------------------
# subcommands


def cmd_separability(args):
    model = _model_source(args, require_full_rank=False)
    report = separability_check(model)
    payload = report.to_json()
    rows = [(k + 1, m) for k, m in enumerate(report.margins)]
    return payload, (["cluster", "margin"], rows)


def cmd_support(args):
    model = _model_source(args, require_full_rank=False)
    support = support_clusters(model)
    payload = {"intervals": [[float(a), float(b)] for a, b in support.intervals]}
    rows = [(k + 1, a, b) for k, (a, b) in enumerate(support.intervals)]
    return payload, (["cluster", "left", "right"], rows)


def cmd_estimate(args):
    spec, mults, _ = _spectrum_and_mults(args)
    mus = solve_mu(spec)
    rho_hat = estimate_rho(spec, cluster_blocks(mults), mus)
    payload = {"rho_hat": rho_hat, "mu_hat": mus}
    rows = [(k + 1, r) for k, r in enumerate(rho_hat)]
    return payload, (["cluster", "rho_hat"], rows)


def cmd_variance(args):
    quad = dict(
        margin_frac=args.contour_margin,
        height=args.contour_height,
        nodes=args.quad_nodes,
    )
    if args.limiting:
        if args.data is not None:
            raise UsageError("--limiting uses the model, not --data")
        model = _model_source(args)
        theta = limiting_theta(model, **quad)
        payload = {"theta": theta, "method": "quadrature", "source": "limiting"}
    else:
        spec, mults, _ = _spectrum_and_mults(args)
        mus = solve_mu(spec)
        if args.method == "residue":
            theta = empirical_theta(spec, mus, cluster_blocks(mults))
        else:
            theta = empirical_theta_quadrature(spec, mults, mus=mus, **quad)
        payload = {"theta_hat": theta, "method": args.method, "source": "empirical"}
    L = theta.shape[0]
    rows = [(k + 1, *theta[k]) for k in range(L)]
    return payload, (["cluster", *[f"theta_{l + 1}" for l in range(L)]], rows)


def cmd_simulate(args):
    model = _model_source(args)
    seed = _require_seed(args)
    stats = run_trials(model, args.trials, seed, retain_theta=args.retain_theta)
    theta = limiting_theta(model)
    payload = {
        "model": model.to_json(),
        "requested": stats.requested,
        "included": stats.trials,
        "excluded": len(stats.failures),
        "failures": [{"trial": t, "error": msg} for t, msg in stats.failures[:20]],
        "rho_hat_mean": stats.rho_hat.mean(axis=0),
        "theta_limiting": theta,
    }
    if stats.trials >= 2:
        payload["fluctuations"] = summarize(stats, theta).to_json()
    if stats.theta_hats is not None:
        payload["theta_hat_mean"] = stats.theta_hats.mean(axis=0)
    header, rows = ["cluster", "bin_center", "empirical_density", "theoretical_density"], []
    if args.bins is not None:
        tables = export_density(stats, args.bins, theta)
        payload["histograms"] = [
            {
                "cluster": t.cluster + 1,
                "bin_center": t.centers,
                "empirical_density": t.empirical,
                "theoretical_density": t.theoretical,
            }
            for t in tables
        ]
        rows = [(t.cluster + 1, *r) for t in tables for r in t.rows()]
    return payload, (header, rows)


def _scenario(args):
    if args.powers is None or args.codes is None or args.samples is None:
        raise UsageError("radio needs --powers, --codes and --samples")
    if (args.noise_var is None) == (args.snr_db is None):
        raise UsageError("give exactly one of --noise-var and --snr-db")
    noise = args.noise_var if args.noise_var is not None else 10.0 ** (-args.snr_db / 10.0)
    n_dim = args.dim if args.dim is not None else sum(args.codes)
    return RadioScenario(tuple(args.powers), tuple(args.codes), n_dim, args.samples, noise)


def cmd_radio(args):
    s = _scenario(args)
    model = scenario_to_model(s)
    if args.data is not None:
        spec = sample_spectrum(load_data(args.data))
    else:
        spec = synthesize_spectrum(model, _require_seed(args))
    est = estimate_powers(spec, s, estimate_noise=args.estimate_noise)
    theta_kk = est.margin_variance(-1)
    margin = confidence_margin(theta_kk, s.m_samples, args.q, literal=args.literal_margin)
    payload = {
        "p_hat": est.p_hat,
        "sigma2": est.sigma2,
        "margin": margin,
        "worst_case": float(est.p_hat[-1] + margin),
        "theta_kk": theta_kk,
        "q": args.q,
        "margin_form": "literal" if args.literal_margin else "scaled",
        "model": model.to_json(),
    }
    if args.snr_db is not None:
        payload["noise_interpretation"] = "sigma2 = 10^(-SNR/10) relative to unit reference power"
    if args.trials is not None:
        cov = simulate_coverage(
            s,
            args.trials,
            _require_seed(args),
            args.q,
            estimate_noise=args.estimate_noise,
            literal=args.literal_margin,
        )
        payload["coverage"] = cov.to_json()
    rows = [(k + 1, p) for k, p in enumerate(est.p_hat)]
    return payload, (["user", "p_hat"], rows)


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--rhos", type=_float_list, help="population eigenvalues, comma separated")
    common.add_argument("--mults", type=_int_list, help="multiplicities, comma separated")
    common.add_argument("--samples", type=_positive_int, help="number of samples M")
    common.add_argument("--model", type=Path, help="JSON model file with rhos, mults, N, M")
    common.add_argument("--seed", type=int, help="seed for every random draw (required when drawing)")
    common.add_argument("--out", type=Path, help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    data = _Parser(add_help=False)
    data.add_argument("--data", type=Path, help="N x M complex data matrix, one row per line, a+bi tokens")

    quad = _Parser(add_help=False)
    quad.add_argument("--quad-nodes", type=_positive_int, default=DEFAULT_NODES, help="starting nodes per contour edge")
    quad.add_argument("--contour-margin", type=_positive_float, default=0.25, help="contour margin as a fraction of cluster width")
    quad.add_argument("--contour-height", type=_positive_float, default=None, help="contour half-height (default: half the width)")

    parser = _Parser(prog="popeig", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("separability", parents=[common], help="separability margins of a model")
    p.set_defaults(handler=cmd_separability)
    p = sub.add_parser("support", parents=[common], help="limiting support intervals")
    p.set_defaults(handler=cmd_support)
    p = sub.add_parser("estimate", parents=[common, data], help="rho_hat from data or a synthetic draw")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("variance", parents=[common, data, quad], help="fluctuation covariance")
    p.add_argument("--method", choices=("residue", "quadrature"), default="residue", help="closed form or contour quadrature")
    p.add_argument("--limiting", action="store_true", help="limiting-law covariance of the model")
    p.set_defaults(handler=cmd_variance)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo fluctuation study")
    p.add_argument("--trials", type=_positive_int, default=1000, help="number of independent draws")
    p.add_argument("--bins", type=_bins, default=None, help="also export density histograms with this many bins")
    p.add_argument("--retain-theta", action="store_true", help="keep each trial's theta_hat and report its mean")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("radio", parents=[common, data], help="user power estimates with a margin")
    p.add_argument("--powers", type=_float_list, help="user powers, ascending, comma separated")
    p.add_argument("--codes", type=_int_list, help="codes per user, comma separated")
    p.add_argument("--dim", type=_positive_int, help="dimension N (default: sum of codes)")
    p.add_argument("--noise-var", type=_positive_float, help="noise variance sigma^2")
    p.add_argument("--snr-db", type=float, help="noise as an SNR in dB, sigma^2 = 10^(-SNR/10)")
    p.add_argument("--q", type=float, default=0.05, help="target probability that the true power exceeds the bound")
    p.add_argument("--estimate-noise", action="store_true", help="estimate sigma^2 from the noise-only cluster")
    p.add_argument("--literal-margin", action="store_true", help="unscaled margin theta_KK * z(q), for comparison")
    p.add_argument("--trials", type=_positive_int, help="also measure coverage over this many draws")
    p.set_defaults(handler=cmd_radio)
    return parser


def _config_echo(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("handler",):
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _emit_error(exc: Exception, code: int) -> int:
    kind = "UsageError" if isinstance(exc, UsageError) else type(exc).__name__
    print(dumps({"error": {"type": kind, "message": str(exc), "exit_code": code}}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        start = time.perf_counter()
        payload, (header, rows) = args.handler(args)
        elapsed = time.perf_counter() - start
    except UsageError as exc:
        return _emit_error(exc, EXIT_USAGE)
    except InputError as exc:
        return _emit_error(exc, EXIT_INPUT)
    except (NumericalError, PopEigError, np.linalg.LinAlgError) as exc:
        return _emit_error(exc, EXIT_NUMERICAL)
    except OSError as exc:
        return _emit_error(exc, EXIT_INPUT)

    metadata = {
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "config": _config_echo(args),
        "timing": {"seconds": elapsed},
    }
    if args.format == "csv":
        text = _csv_text(header, rows, metadata)
    else:
        text = dumps({**payload, "metadata": metadata}) + "\n"
    if args.out is not None:
        args.out.write_text(text)
        if args.command == "simulate" and args.bins is not None and args.format == "json":
            _write_histogram_files(args.out, payload["histograms"], metadata)
    else:
        sys.stdout.write(text)
    return 0


def _write_histogram_files(out: Path, histograms, metadata) -> None:
    for h in histograms:
        path = out.with_name(f"{out.stem}_cluster{h['cluster']}.csv")
        rows = zip(h["bin_center"], h["empirical_density"], h["theoretical_density"])
        path.write_text(_csv_text(["bin_center", "empirical_density", "theoretical_density"], rows, metadata))


if __name__ == "__main__":
    sys.exit(main())
