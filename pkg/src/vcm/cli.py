"""Command-line entry point: ``vcm <subcommand> [options]``.

Every subcommand prints a JSON object (``flops`` and ``table5`` print a text
table unless ``--json`` is given). Failures print ``{"error": ..., "message": ...}``
on stderr. Exit status: 0 on success, 1 when a requested check fails,
2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checks, formats
from .alignment import (
    best_path_decode,
    compute_lattice,
    count_runs,
    path_log_weight,
    path_to_mask,
)
from .concepts import greedy_select, merge_segments
from .errors import CheckFailed, InvalidInput, VCMError
from .fixtures import WORKED_L, WORKED_TOTAL
from .flops import FlopsProfile, flops_table
from .length import (
    CoefficientParams,
    KeywordStats,
    LengthConfig,
    configs_from_dict,
    effective_keyword_diff,
    epsilon,
    estimate_length,
    load_config,
    parse_scalar,
    raw_length,
)
from .trainer import TrainConfig, train_logits

ORACLE_TOL = 1e-9
GRADCHECK_TOL = 1e-4
WORKED_TOTAL_TOL = 1e-3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
        sys.exit(2)


class CheckFailure(Exception):
    """Raised after printing a result whose check did not pass."""


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("VCM_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InvalidInput(f"VCM_SEED must be an integer, got {env!r}") from None


def _emit(obj) -> None:
    sys.stdout.write(formats.dumps(obj))


def _require(flag, value):
    if value is None:
        raise InvalidInput(f"missing required option {flag}")
    return value


def _configs(args):
    length, coeffs = LengthConfig(), CoefficientParams()
    if getattr(args, "config", None):
        length, coeffs = load_config(args.config)
    overrides = {}
    for key in ("S", "a", "b", "k"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        length, coeffs = configs_from_dict(overrides, length, coeffs)
    return length, coeffs


# ---------------------------------------------------------------------------


def cmd_align(args):
    seq = formats.load_emissions(_require("--input", args.input))
    L = _require("--l", args.l)
    lat = compute_lattice(seq, L, mode=args.mode)
    terminal, initial, per_step = lat.log_probability_routes()
    summary = {
        "M": lat.M,
        "L": lat.L,
        "mode": lat.mode.value,
        "table_space": "log" if lat.mode.value == "log" else "probability",
        "loss": -lat.log_prob,
        "total_prob": lat.total_prob,
        "log_prob_routes": {
            "alpha_terminal": terminal,
            "beta_initial": initial,
            "per_step_max_gap": float(np.max(np.abs(per_step - terminal))),
        },
    }
    if args.output:
        out = args.output
        formats.write_files({
            os.path.join(out, "alpha.csv"): formats.lattice_csv(lat.alpha, args.precision),
            os.path.join(out, "beta.csv"): formats.lattice_csv(lat.beta, args.precision),
            os.path.join(out, "gamma.csv"): formats.lattice_csv(lat.gamma, args.precision),
            os.path.join(out, "summary.json"): formats.dumps(summary),
        })
    _emit(summary)


def cmd_table5(args):
    res = checks.worked_example_check()
    ok_cells = res["cells_matching"] == res["cells"]
    ok_total = abs(res["total_prob"] - WORKED_TOTAL) <= WORKED_TOTAL_TOL
    passed = ok_cells and ok_total
    if args.output:
        formats.write_files({args.output: formats.lattice_csv(res["alpha"], args.precision)})
    if args.json:
        _emit({
            "alpha": res["alpha"].tolist(),
            "delta": res["delta"].tolist(),
            "max_abs_delta": float(np.abs(res["delta"]).max()),
            "cells_matching": res["cells_matching"],
            "cells": res["cells"],
            "total_prob": res["total_prob"],
            "reference_total": WORKED_TOTAL,
            "pass": passed,
        })
    else:
        lines = [f"worked lattice, M=8, L={WORKED_L}: computed alpha (reference) [delta]"]
        for t, (row, ref, dl) in enumerate(zip(res["alpha"], res["reference"], res["delta"]), start=1):
            cells = "  ".join(f"{a:.4f} ({p:.3f}) [{d:+.4f}]" for a, p, d in zip(row, ref, dl))
            lines.append(f"t={t}  {cells}")
        lines.append(f"cells matching at 3 decimals: {res['cells_matching']}/{res['cells']}")
        lines.append(f"total probability: {res['total_prob']:.6f} (reference {WORKED_TOTAL:.3f})")
        lines.append("PASS" if passed else "FAIL")
        sys.stdout.write("\n".join(lines) + "\n")
    if not passed:
        raise CheckFailure


def cmd_oracle(args):
    res = checks.oracle_check([args.m], args.trials, seed=_seed(args), L=args.l)
    res.update({"M": args.m, "tolerance": args.tol, "pass": res["max_rel_err"] <= args.tol})
    _emit(res)
    if not res["pass"]:
        raise CheckFailure


def cmd_gradcheck(args):
    res = checks.gradient_check(args.trials, max_M=args.m, seed=_seed(args), h=args.h)
    res.update({"max_M": args.m, "h": args.h, "tolerance": args.tol, "pass": res["max_rel_err"] <= args.tol})
    _emit(res)
    if not res["pass"]:
        raise CheckFailure


def cmd_decode(args):
    em = formats.load_emissions(_require("--input", args.input))
    L = _require("--l", args.l)
    path = best_path_decode(em, L)
    mask = path_to_mask(path)
    _emit({
        "L": L,
        "path": (path + 1).tolist(),
        "mask": mask.tolist(),
        "runs": count_runs(mask),
        "log_weight": path_log_weight(em, path),
    })


def cmd_merge(args):
    features = formats.load_features(_require("--input", args.input))
    em = formats.load_emissions(_require("--emissions", args.emissions))
    segments = merge_segments(features, greedy_select(em))
    text = formats.segments_to_json(segments)
    if args.output:
        formats.write_files({args.output: text})
    sys.stdout.write(text)


def cmd_length(args):
    length, _ = _configs(args)
    M = _require("--m", args.m)
    if args.n_key is not None:
        n_key = args.n_key
    else:
        stats = KeywordStats(_require("--n-instruction", args.n_instruction),
                             _require("--n-response", args.n_response), args.r)
        n_key = effective_keyword_diff(stats, length)
    _emit({"M": M, "S": length.S, "n_key": n_key, "raw_length": raw_length(M, n_key, length),
           "L": estimate_length(M, n_key, length)})


def cmd_epsilon(args):
    _, coeffs = _configs(args)
    sys.stdout.write(f"{epsilon(args.r, coeffs)!r}\n")


def cmd_flops(args):
    profile = FlopsProfile(T=args.layers, d=args.hidden, m=args.ffn, n_mean=args.nmean,
                           n_var=args.nvar, scale=args.scale)
    rows = flops_table(profile)
    if args.json:
        _emit(rows)
        return
    out = [f"{'case':<10} {'scale':>8} {'E[n]':>10} {'exact@E[n]':>14} {'expected':>14}"]
    for row in rows[:2]:
        out.append(f"{row['case']:<10} {row['scale']:>8.4g} {row['mean_length']:>10.4g} "
                   f"{row['exact_at_mean']:>14.6e} {row['expected']:>14.6e}")
    out.append(f"R = {rows[2]['R']:.10f}   reduction = {100 * rows[2]['reduction']:.2f}%")
    sys.stdout.write("\n".join(out) + "\n")


def cmd_train(args):
    cfg = TrainConfig(M=_require("--m", args.m), L=_require("--l", args.l), lr=args.lr,
                      max_steps=args.steps, seed=_seed(args))
    trace = train_logits(cfg)
    passed = trace.decoded_runs == cfg.L and trace.losses[-1] < trace.losses[0]
    if args.require_convergence:
        passed = passed and trace.converged
    summary = {
        "M": cfg.M,
        "L": cfg.L,
        "lr": cfg.lr,
        "seed": cfg.seed,
        "steps": trace.steps,
        "initial_loss": trace.losses[0],
        "final_loss": trace.losses[-1],
        "converged": trace.converged,
        "decoded_runs": trace.decoded_runs,
        "greedy_runs": trace.greedy_runs,
        "pass": passed,
    }
    if args.output:
        out = args.output
        steps = np.column_stack([np.arange(trace.steps), trace.losses])
        trace_csv = "step,loss\n" + "".join(f"{int(s)},{l!r}\n" for s, l in steps)
        final = {
            **summary,
            "logits": trace.logits.tolist(),
            "mask": trace.mask.tolist(),
            "best_path": (trace.best_path + 1).tolist(),
            "concepts": trace.concepts.to_dict(),
        }
        formats.write_files({
            os.path.join(out, "trace.csv"): trace_csv,
            os.path.join(out, "final.json"): formats.dumps(final),
        })
    _emit(summary)
    if not passed:
        raise CheckFailure


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vcm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $VCM_SEED, then 0)")
        return p

    p = add("align", cmd_align, "forward/backward/posterior tables and loss")
    p.add_argument("--input", help="JSON object with 'probs' or 'logits'")
    p.add_argument("--l", type=int)
    p.add_argument("--mode", choices=["linear", "log"], default="log")
    p.add_argument("--output", help="directory for alpha/beta/gamma CSVs and summary.json")
    p.add_argument("--precision", type=int, default=None)

    p = add("table5", cmd_table5, "reproduce the reference 8-token worked lattice")
    p.add_argument("--output", help="write the computed forward table as CSV")
    p.add_argument("--precision", type=int, default=None)
    p.add_argument("--json", action="store_true")

    p = add("oracle", cmd_oracle, "lattice probability against exhaustive enumeration")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--l", type=int, default=None, help="single concept count (default: all feasible)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=ORACLE_TOL)

    p = add("gradcheck", cmd_gradcheck, "analytic gradient against central differences")
    p.add_argument("--m", type=int, default=10, help="largest sequence length sampled")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)

    p = add("decode", cmd_decode, "most probable alignment path")
    p.add_argument("--input")
    p.add_argument("--l", type=int)

    p = add("merge", cmd_merge, "greedy selection and segment merging")
    p.add_argument("--input", help="features as CSV (M x d) or JSON {'features': ...}")
    p.add_argument("--emissions", help="JSON object with 'probs' or 'logits'")
    p.add_argument("--output")

    p = add("length", cmd_length, "concept length from keyword counts")
    p.add_argument("--m", type=int)
    p.add_argument("--n-instruction", type=int)
    p.add_argument("--n-response", type=int)
    p.add_argument("--n-key", type=float, default=None, help="use this keyword difference directly")
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--s", dest="S", type=parse_scalar, default=None, help="information domain scalar, e.g. 1/4")
    p.add_argument("--config")

    p = add("epsilon", cmd_epsilon, "loss weight for a mask ratio")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--config")

    p = add("flops", cmd_flops, "expected FLOPs and reduction ratio")
    p.add_argument("--layers", type=int, default=32)
    p.add_argument("--hidden", type=int, default=4096)
    p.add_argument("--ffn", type=int, default=None, help="FFN width (default 4 * hidden)")
    p.add_argument("--nmean", type=float, default=None, help="mean sequence length (default hidden / 4)")
    p.add_argument("--nvar", type=float, default=0.0)
    p.add_argument("--scale", type=parse_scalar, default=0.125)
    p.add_argument("--json", action="store_true")

    p = add("train", cmd_train, "gradient-descent demo on synthetic logits")
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--l", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--output", help="directory for trace.csv and final.json")
    p.add_argument("--require-convergence", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CheckFailure:
        return 1
    except CheckFailed as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 1
    except VCMError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io_error", "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
