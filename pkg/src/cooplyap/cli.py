"""Command line experiment runner.

Usage: ``cooplyap <command> --config <path> [--seed N] [--output <path>]``.
The command and flags override the corresponding config fields.  Results are
written atomically (temp file then rename) with a metadata header carrying
the canonical config echo, the master seed, the library version, and a
timestamp; reruns with the same config and seed are byte-identical except
for the timestamp line.

Exit codes: 0 success, 2 configuration or value error, 3 violated structural
assumption (e.g. reducibility), 4 numerical failure, 5 I/O failure.  On
failure a single-line JSON error record goes to stderr.
"""

from __future__ import annotations

import argparse
import datetime
import io
import json
import math
import os
import sys
import tempfile

from . import __version__
from .config import COMMANDS, ExperimentConfig, build_environment, parse_config, with_overrides
from .dynamics import integrate, write_trajectory_csv
from .errors import AssumptionViolationError, ConfigError, NumericalError
from .lyapunov import (
    METHOD_ERGODIC_AVERAGE,
    LambdaEstimate,
    contraction_diagnostics,
    corollary_bounds,
    estimate_lambda,
    lambda_floquet,
    lambda_periodic_exact,
)
from .regimes import log_spaced_timescales, occupation_concentration, sweep_lambda, write_sweep_csv

_CONFIG_KEY_REFERENCE = """\
config document keys (YAML; the metadata echo is JSON, which also parses):

  command                one of: estimate, periodic-exact, floquet, bounds,
                         sweep, contraction, concentration
  seed                   unsigned 64-bit master seed; required whenever paths
                         are drawn (markov_switch / circle_diffusion
                         trajectories, and always for sweep)
  method                 estimate only: ErgodicAverage (default) or
                         LogNormGrowth

  environment.kind       periodic | quasi_periodic | markov_switch |
                         circle_diffusion
  environment.timescale  T > 0; the state seen at time t is the intrinsic
                         state at t/T (default 1.0)
  environment.fourier    matrix map A(s) = A0 + sum_k Ck cos(2 pi k s)
                         + Dk sin(2 pi k s); keys A0 (required), C1, D1, ...
                         (periodic and circle_diffusion)
  environment.initial_phase      periodic: starting circle point (default 0)
  environment.frequencies        quasi_periodic: list of flow frequencies
  environment.initial_phases     quasi_periodic: starting torus point
  environment.fourier.A0         quasi_periodic: constant term
  environment.fourier.coords     quasi_periodic: list (one entry per
                         frequency) of {C1, D1, ...} harmonic blocks
  environment.rates      markov_switch: n x n generator matrix (rows sum to
                         0, off-diagonal >= 0, irreducible)
  environment.matrices   markov_switch: list of n Metzler matrices
  environment.initial_state      markov_switch: starting state, 1-based
                         (default 1)
  environment.sigma      circle_diffusion: noise amplitude > 0
  environment.initial_point      circle_diffusion: starting circle point

  numerics.horizon       integration horizon > 0 (estimate, sweep,
                         contraction, concentration; sweep uses it as the
                         per-point floor, scaled to max(horizon, 100 T))
  numerics.step          integrator step; 0 < step <= horizon/10
                         (periodic-exact and floquet need only step: it is
                         the unit-period step after time rescaling)
  numerics.burn_in       0 <= burn_in < horizon (default: 10% of horizon)

  sweep.T_min            sweep only: smallest timescale > 0
  sweep.T_max            sweep only: largest timescale > T_min
  sweep.points_per_decade  sweep only: log-grid density (default 5)

  output.path            result file path (written atomically)
  output.format          csv (default) or json
  output.trajectory_path estimate only: also dump the sampled trajectory
                         (columns time, theta_1..theta_d, log_rho,
                         running_avg)
"""

_COMMAND_HELP = {
    "estimate": "trajectory-average exponent estimate (ErgodicAverage or LogNormGrowth)",
    "periodic-exact": "deterministic exponent of a periodic system via the period-map fixed point",
    "floquet": "deterministic exponent of a periodic system via the monodromy Perron root",
    "bounds": "certified sandwich intervals from column sums and the symmetric part",
    "sweep": "exponent across a log grid of timescales, with fast/slow limit predictions",
    "contraction": "first positivity time and empirical Birkhoff contraction rate",
    "concentration": "time-averaged distance of theta to its predicted concentration point",
}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_opt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return _fmt(x)


def _json_opt(x):
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _estimate_row(est: LambdaEstimate) -> tuple[list[str], dict]:
    csv_row = [
        _fmt(est.value),
        est.method,
        _fmt(est.horizon),
        _fmt(est.step),
        _fmt(est.burn_in),
        _fmt(est.half_split_gap),
        "" if est.seed is None else str(est.seed),
    ]
    json_obj = {
        "value": est.value,
        "method": est.method,
        "horizon": est.horizon,
        "step": est.step,
        "burn_in": est.burn_in,
        "half_split_gap": est.half_split_gap,
        "seed": est.seed,
    }
    return csv_row, json_obj

_ESTIMATE_HEADER = "value,method,horizon,step,burn_in,half_split_gap,seed"


def _run_command(cfg: ExperimentConfig):
    """Dispatch to the library; returns (csv payload text, json result object)."""
    spec = build_environment(cfg)
    num = cfg.numerics or {}
    horizon = num.get("horizon")
    step = num.get("step")
    burn_in = num.get("burn_in")

    if cfg.command == "estimate":
        method = cfg.method or METHOD_ERGODIC_AVERAGE
        est = estimate_lambda(spec, cfg.seed, method, horizon, step, burn_in)
        row, obj = _estimate_row(est)
        return f"{_ESTIMATE_HEADER}\n{','.join(row)}\n", obj

    if cfg.command == "periodic-exact":
        est = lambda_periodic_exact(spec, step)
        row, obj = _estimate_row(est)
        return f"{_ESTIMATE_HEADER}\n{','.join(row)}\n", obj

    if cfg.command == "floquet":
        est = lambda_floquet(spec, step)
        row, obj = _estimate_row(est)
        return f"{_ESTIMATE_HEADER}\n{','.join(row)}\n", obj

    if cfg.command == "bounds":
        (l1, u1), (l2, u2) = corollary_bounds(spec)
        csv_text = (
            "column_sum_lower,column_sum_upper,symmetric_lower,symmetric_upper\n"
            f"{_fmt(l1)},{_fmt(u1)},{_fmt(l2)},{_fmt(u2)}\n"
        )
        obj = {
            "column_sums": {"lower": l1, "upper": u1},
            "symmetric_part": {"lower": l2, "upper": u2},
        }
        return csv_text, obj

    if cfg.command == "sweep":
        t_values = log_spaced_timescales(
            cfg.sweep["T_min"], cfg.sweep["T_max"], cfg.sweep["points_per_decade"]
        )
        result = sweep_lambda(spec, t_values, cfg.seed, horizon, step)
        buf = io.StringIO()
        write_sweep_csv(result, buf)
        rows = [
            {
                "T": t,
                "lambda_hat": est.value,
                "half_split_gap": est.half_split_gap,
                "concentration": conc,
                "seed": est.seed,
                "horizon": est.horizon,
                "step": est.step,
            }
            for t, est, conc in zip(result.T_values, result.lambda_hats, result.concentration)
        ]
        obj = {
            "fast_limit": result.fast_limit,
            "slow_limit": result.slow_limit,
            "points": rows,
        }
        return buf.getvalue(), obj

    if cfg.command == "contraction":
        first_positive, rate = contraction_diagnostics(spec, cfg.seed, horizon, step)
        csv_text = (
            "first_positive_time,empirical_rate\n"
            f"{_fmt_opt(first_positive)},{_fmt_opt(rate)}\n"
        )
        obj = {
            "first_positive_time": _json_opt(first_positive),
            "empirical_rate": _json_opt(rate),
        }
        return csv_text, obj

    if cfg.command == "concentration":
        t_scale = spec.timescale
        value = occupation_concentration(spec, t_scale, cfg.seed, horizon, step, burn_in)
        effective_burn = 0.1 * horizon if burn_in is None else burn_in
        csv_text = (
            "T,concentration,horizon,step,burn_in,seed\n"
            f"{_fmt(t_scale)},{_fmt(value)},{_fmt(horizon)},{_fmt(step)},"
            f"{_fmt(effective_burn)},{'' if cfg.seed is None else cfg.seed}\n"
        )
        obj = {
            "T": t_scale,
            "concentration": value,
            "horizon": horizon,
            "step": step,
            "burn_in": effective_burn,
            "seed": cfg.seed,
        }
        return csv_text, obj

    raise ConfigError(f"unhandled command {cfg.command!r}", key="command")


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "command": cfg.command,
        "library_version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_document(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _render_csv(meta: dict, payload: str) -> str:
    lines = [
        f"# command: {meta['command']}",
        f"# library_version: {meta['library_version']}",
        f"# seed: {'none' if meta['seed'] is None else meta['seed']}",
        f"# config: {json.dumps(meta['config'], sort_keys=True, separators=(', ', ': '))}",
        f"# timestamp: {meta['timestamp']}",
    ]
    return "\n".join(lines) + "\n" + payload


def _render_json(meta: dict, result_obj) -> str:
    return json.dumps({"metadata": meta, "result": result_obj}, indent=2, sort_keys=True) + "\n"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".cooplyap-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_trajectory(cfg: ExperimentConfig, meta: dict) -> None:
    spec = build_environment(cfg)
    num = cfg.numerics
    record = integrate(
        spec, cfg.seed, None, horizon=num["horizon"], step=num["step"]
    )
    buf = io.StringIO()
    write_trajectory_csv(record, buf)
    _atomic_write(cfg.output["trajectory_path"], _render_csv(meta, buf.getvalue()))


def run_experiment(cfg: ExperimentConfig) -> str:
    """Execute a validated config and write its result file; returns the
    output path.  Library errors propagate to the caller."""
    csv_payload, json_result = _run_command(cfg)
    meta = _metadata(cfg)
    if cfg.output["format"] == "csv":
        text = _render_csv(meta, csv_payload)
    else:
        text = _render_json(meta, json_result)
    _atomic_write(cfg.output["path"], text)
    if "trajectory_path" in cfg.output:
        _write_trajectory(cfg, meta)
    return cfg.output["path"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cooplyap",
        description=(
            "Top Lyapunov exponents of linear cooperative systems in "
            "switching, periodic, quasi-periodic, and diffusive environments."
        ),
        epilog=_CONFIG_KEY_REFERENCE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(
            name,
            help=_COMMAND_HELP[name],
            description=_COMMAND_HELP[name],
            epilog=_CONFIG_KEY_REFERENCE,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("--config", required=True, help="path to the YAML config document")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--output", default=None, help="override output.path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text)
        cfg = with_overrides(cfg, command=args.command, seed=args.seed, output_path=args.output)
        out_path = run_experiment(cfg)
    except ConfigError as exc:
        return _fail(2, exc)
    except AssumptionViolationError as exc:
        return _fail(3, exc)
    except NumericalError as exc:
        return _fail(4, exc)
    except ValueError as exc:
        return _fail(2, exc)
    except OSError as exc:
        return _fail(5, exc)
    print(out_path)
    return 0


def _fail(code: int, exc: Exception) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
