"""Command-line interface.

Subcommands mirror the pipeline stages (``generate``, ``recover-weights``,
``init-shifts``, ``refine``), plus the composed runs (``pipeline``,
``baseline``, ``study``) and ``diagnose``.  Options can come from a config
file (one section per module, ``key = value``) with every key overridable
by the flag of the same name.  Exit codes: 0 success, 2 validation error,
3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .activations import make_activation, slope_sign_certificate
from .baseline import run_baseline_sgd
from .diagnostics import (check_incoherence, estimate_alpha, kernel_floor_omega,
                          match_and_score)
from .exceptions import ConfigError, RecoveryError, StageError
from .numdiff import FDConfig
from .pipeline import (PipelineConfig, child_seed, run_pipeline,
                       run_scaling_study)
from .refine import RefineConfig, refine
from .shift_init import init_signs_shifts
from .spm import SpmConfig, collect_weights
from .subspace import build_hessian_matrix, top_m_projector
from .teacher import (FixedShifts, GaussianShifts, StudentNetwork,
                      UniformShifts, load_teacher, sample_teacher,
                      save_teacher)

logger = logging.getLogger("netrecover")


def parse_shift_law(text: str):
    """``uniform:a,b`` | ``gaussian:sigma`` | ``fixed:v1,v2,...``"""
    kind, _, rest = text.partition(":")
    try:
        if kind == "uniform":
            lo, hi = (float(v) for v in rest.split(","))
            return UniformShifts(lo, hi)
        if kind == "gaussian":
            return GaussianShifts(float(rest))
        if kind == "fixed":
            return FixedShifts(tuple(float(v) for v in rest.split(",")))
    except ValueError as exc:
        raise ConfigError(f"bad shift law {text!r}: {exc}") from None
    raise ConfigError(f"unknown shift law {text!r}")


def _add_pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file with [pipeline]/[spm]/[refine] sections")
    p.add_argument("--d", type=int, dest="dim")
    p.add_argument("--m", type=int, dest="n_neurons")
    p.add_argument("--beta", type=float, dest="beta_order")
    p.add_argument("--activation", choices=["tanh", "sigmoid"])
    p.add_argument("--shift-law", dest="shift_law")
    p.add_argument("--fd-step", type=float, dest="fd_step")
    p.add_argument("--exact-derivatives", action="store_true", default=None,
                   dest="exact_derivatives")
    p.add_argument("--n-h", type=int, dest="n_hessians")
    p.add_argument("--n-eval", type=int, dest="n_eval")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--dump-spectrum", action="store_true", default=None,
                   dest="dump_spectrum")
    p.add_argument("--spm-gamma", type=float)
    p.add_argument("--spm-steps", type=int)
    p.add_argument("--spm-beta", type=float)
    p.add_argument("--spm-restarts", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--max-steps", type=int, dest="refine_max_steps")
    p.add_argument("--timeout-s", type=float, dest="timeout_s")


_PIPELINE_KEYS = {
    "d": ("dim", int), "dim": ("dim", int), "m": ("n_neurons", int),
    "beta": ("beta_order", float), "activation": ("activation", str),
    "shift_law": ("shift_law", str), "fd_step": ("fd_step", float),
    "exact_derivatives": ("exact_derivatives", lambda v: v.lower() in ("1", "true", "yes")),
    "n_h": ("n_hessians", int), "n_eval": ("n_eval", int), "seed": ("seed", int),
    "out_dir": ("out_dir", str),
    "dump_spectrum": ("dump_spectrum", lambda v: v.lower() in ("1", "true", "yes")),
}
_SPM_KEYS = {"gamma": float, "max_steps": int, "beta": float,
             "dedup_cos": float, "max_restarts": int, "conv_tol": float}
_REFINE_KEYS = {"n_train": ("n_train", int), "lr": ("lr", float),
                "batch": ("batch", int), "max_steps": ("refine_max_steps", int),
                "stop_loss": ("stop_loss", float), "timeout_s": ("timeout_s", float)}


def build_pipeline_config(args) -> PipelineConfig:
    """Merge defaults, config-file sections, and CLI flags (flags win)."""
    values: dict = {}
    spm_kwargs: dict = {}
    if getattr(args, "config", None):
        sections = fileio.read_config_file(args.config)
        for key, raw in sections.get("pipeline", {}).items():
            if key not in _PIPELINE_KEYS:
                raise ConfigError(f"unknown [pipeline] key {key!r}")
            dest, conv = _PIPELINE_KEYS[key]
            values[dest] = conv(raw)
        for key, raw in sections.get("spm", {}).items():
            if key not in _SPM_KEYS:
                raise ConfigError(f"unknown [spm] key {key!r}")
            spm_kwargs[key] = _SPM_KEYS[key](raw)
        for key, raw in sections.get("refine", {}).items():
            if key not in _REFINE_KEYS:
                raise ConfigError(f"unknown [refine] key {key!r}")
            dest, conv = _REFINE_KEYS[key]
            values[dest] = conv(raw)
        for section in sections:
            if section not in ("pipeline", "spm", "refine"):
                raise ConfigError(f"unknown config section [{section}]")

    for dest in ("dim", "n_neurons", "beta_order", "activation", "shift_law",
                 "fd_step", "exact_derivatives", "n_hessians", "n_eval", "seed",
                 "out_dir", "dump_spectrum", "n_train", "lr", "batch",
                 "refine_max_steps", "timeout_s"):
        flag_val = getattr(args, dest, None)
        if flag_val is not None:
            values[dest] = flag_val
    for flag, key in (("spm_gamma", "gamma"), ("spm_steps", "max_steps"),
                      ("spm_beta", "beta"), ("spm_restarts", "max_restarts")):
        v = getattr(args, flag, None)
        if v is not None:
            spm_kwargs[key] = v

    if isinstance(values.get("shift_law"), str):
        values["shift_law"] = parse_shift_law(values["shift_law"])
    if "dim" not in values:
        raise ConfigError("input dimension is required (--d or config [pipeline] d)")
    if spm_kwargs:
        values["spm"] = SpmConfig(**spm_kwargs)
    return PipelineConfig(**values)


def _cmd_generate(args) -> int:
    act = make_activation(args.activation or "tanh")
    law = parse_shift_law(args.shift_law or "uniform:-0.5,0.5")
    net = sample_teacher(args.dim, args.n_neurons, law, act, args.seed or 0)
    save_teacher(net, args.out)
    print(f"wrote teacher D={net.dim} m={net.n_neurons} -> {args.out}")
    return 0


def _cmd_recover_weights(args) -> int:
    net = load_teacher(args.net)
    cfg = build_pipeline_config(args) if args.config else None
    spm_cfg = cfg.spm if cfg else SpmConfig(
        **{k: v for k, v in (("gamma", args.spm_gamma), ("max_steps", args.spm_steps),
                             ("beta", args.spm_beta), ("max_restarts", args.spm_restarts))
           if v is not None})
    n_h = args.n_hessians or max(net.n_neurons,
                                 int(np.ceil(np.log(net.dim) * net.n_neurons)))
    fd_cfg = FDConfig(step_h=args.fd_step or 0.01)
    seed = args.seed or 0
    cols, _, _ = build_hessian_matrix(net, n_h, fd_cfg, child_seed(seed, "hessians"),
                                      exact=bool(args.exact_derivatives))
    proj = top_m_projector(cols, net.n_neurons)
    if args.dump_spectrum:
        spectrum = getattr(proj, "spectrum", proj.singular_values)
        fileio.write_csv(Path(args.out).with_suffix(".spectrum.csv"),
                         ["index", "sigma"],
                         [[i, float(s)] for i, s in enumerate(spectrum)])
    w_hat, stats = collect_weights(proj, net.n_neurons, spm_cfg, child_seed(seed, "spm"))
    fileio.save_weights(w_hat, args.out)
    print(f"recovered {w_hat.shape[1]} directions in {stats.n_processed} restarts -> {args.out}")
    return 0


def _cmd_init_shifts(args) -> int:
    net = load_teacher(args.net)
    w_hat = fileio.load_weights(args.weights)
    fd_cfg = FDConfig(step_h=args.fd_step or 0.01)
    res = init_signs_shifts(net, w_hat, net.act, fd_cfg,
                            exact=bool(args.exact_derivatives))
    fileio.save_init_result(res, args.out)
    print(f"wrote signs/shifts (cond_g2={res.cond_g2:.3g}, cond_g3={res.cond_g3:.3g}) "
          f"-> {args.out}")
    return 0


def _cmd_refine(args) -> int:
    net = load_teacher(args.net)
    w_hat = fileio.load_weights(args.weights)
    signs, tau0, _, _ = fileio.load_init_result(args.init)
    student = StudentNetwork(w_hat * signs, tau0, net.act)
    cfg = RefineConfig(
        n_train=args.n_train or net.n_neurons * net.dim ** 2,
        lr=args.lr or 1e-3,
        batch=args.batch if args.batch is not None else 64,
        max_steps=args.refine_max_steps or 200_000,
        timeout_s=args.timeout_s if args.timeout_s is not None else 180.0,
    )
    res = refine(student, net, cfg, args.seed or 0)
    fileio.write_csv(args.out, ["step", "loss"],
                     [[int(s), float(l)] for s, l in zip(res.record_steps, res.losses)])
    final = Path(args.out).with_suffix(".shifts.txt")
    with open(final, "w") as fh:
        fh.write(" ".join(repr(float(t)) for t in res.student.shifts) + "\n")
    print(f"refined for {res.steps} steps ({res.stop_reason}); "
          f"final loss {res.losses[-1]:.3e} -> {args.out}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = build_pipeline_config(args)
    res = run_pipeline(cfg)
    met = res.metrics
    print(f"pipeline D={res.dim} m={res.m} seed={res.seed}: "
          f"e_inf={met.e_inf:.3e} max_weight_err={met.max_weight_err:.3e} "
          f"shift_rms={met.shift_rms:.3e} sign_accuracy={res.sign_accuracy:.3f}")
    return 0


def _cmd_baseline(args) -> int:
    cfg = build_pipeline_config(args)
    res = run_baseline_sgd(cfg)
    met = res.metrics
    print(f"baseline D={res.dim} m={res.m} seed={res.seed}: "
          f"e_inf={met.e_inf:.3e} max_weight_err={met.max_weight_err:.3e} "
          f"({res.refine_stop_reason})")
    return 0


def _cmd_diagnose(args) -> int:
    net = load_teacher(args.net)
    rep = check_incoherence(net.weights, rip_trials=args.rip_trials, seed=args.seed or 0)
    n_mc = args.n_mc or max(4 * net.n_neurons, 50)
    alpha = estimate_alpha(net, n_mc, seed=child_seed(args.seed or 0, "score"))
    omega = kernel_floor_omega(net.act)
    sign, min_abs = slope_sign_certificate(net.act)
    rows = [
        ["max_sq_corr", rep.max_sq_corr],
        ["c2_hat", rep.c2_hat],
        ["gram_inv_norm_2", rep.gram_inv_norms[2]],
        ["gram_inv_norm_3", rep.gram_inv_norms[3]],
        ["gram_inv_norm_4", rep.gram_inv_norms[4]],
        ["rip_p", rep.rip_samples[0][0] if rep.rip_samples else 0],
        ["rip_worst_delta", max((d for _, d in rep.rip_samples), default=0.0)],
        ["alpha_hat", alpha],
        ["omega", omega.omega],
        ["omega_tau_argmin", omega.tau_argmin],
        ["omega_tail_bound", omega.tail_bound],
        ["mean_slope_sign", sign],
        ["mean_slope_min_abs", min_abs],
    ]
    if args.out:
        fileio.write_csv(args.out, ["quantity", "value"], rows)
    for name, val in rows:
        print(f"{name:>22s}  {val}")
    return 0


def _cmd_study(args) -> int:
    dims = [int(v) for v in args.d_list.split(",")] if args.d_list else []
    betas = [float(v) for v in args.beta_list.split(",")] if args.beta_list else []
    if not dims or not betas:
        raise ConfigError("study needs --d-list and --beta-list")
    base = build_pipeline_config(args) if args.config else None
    grid = []
    for d in dims:
        for b in betas:
            kwargs = dict(dim=d, beta_order=b, seed=args.seed or 0)
            if base is not None:
                cfg = PipelineConfig(**{**base.__dict__, **kwargs, "n_neurons": None})
            else:
                cfg = PipelineConfig(**kwargs)
            grid.append(cfg)
    rows = run_scaling_study(grid, args.reps, out_csv=args.out)
    print(f"study: {len(rows)} rows -> {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netrecover",
                                     description="Recover planted shallow networks "
                                                 "from black-box queries.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample and write a teacher network")
    p.add_argument("--d", type=int, required=True, dest="dim")
    p.add_argument("--m", type=int, required=True, dest="n_neurons")
    p.add_argument("--activation", choices=["tanh", "sigmoid"])
    p.add_argument("--shift-law", dest="shift_law")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("recover-weights", help="Hessian PCA + sphere ascent")
    p.add_argument("--net", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_recover_weights)

    p = sub.add_parser("init-shifts", help="signs and initial shifts from a weight file")
    p.add_argument("--net", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fd-step", type=float, dest="fd_step")
    p.add_argument("--exact-derivatives", action="store_true", dest="exact_derivatives")
    p.set_defaults(func=_cmd_init_shifts)

    p = sub.add_parser("refine", help="gradient-descent shift refinement")
    p.add_argument("--net", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--max-steps", type=int, dest="refine_max_steps")
    p.add_argument("--timeout-s", type=float, dest="timeout_s")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("pipeline", help="full recovery run with scoring")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("baseline", help="joint-SGD teacher-student baseline")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("diagnose", help="incoherence / learnability report")
    p.add_argument("--net", required=True)
    p.add_argument("--out")
    p.add_argument("--rip-trials", type=int, default=20)
    p.add_argument("--n-mc", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("study", help="grid of pipeline runs, long-format CSV")
    p.add_argument("--d-list", required=True)
    p.add_argument("--beta-list", required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_study)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return 3
    except RecoveryError as exc:
        print(f"recovery failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
