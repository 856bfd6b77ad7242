"""Shift refinement by least-squares gradient descent.

Only the shifts are trained; the weight estimates stay frozen, so the
per-sample preactivations ``<w_k, x_i>`` are computed once and every descent
step reduces to elementwise activation work.  Supports full-batch descent
and mini-batch descent with a seed-fixed permutation per epoch, which keeps
trajectories reproducible.
"""

from __future__ import annotations

import dataclasses
import logging
import time

import numpy as np

from .exceptions import ConfigError, DivergenceError
from .teacher import StudentNetwork

__all__ = ["RefineConfig", "RefineResult", "loss", "grad_loss", "power_iteration_lmax",
           "refine"]

logger = logging.getLogger(__name__)

_DIVERGENCE_PATIENCE = 50


@dataclasses.dataclass(frozen=True)
class RefineConfig:
    """Training-loop knobs for the shift refinement."""

    n_train: int
    lr: float = 1e-3
    batch: int = 64          # 0 -> full-batch gradient descent
    max_steps: int = 10_000  # descent steps (mini-batch updates count individually)
    stop_loss: float = 1e-8
    timeout_s: float | None = 180.0
    lr_auto: bool = False    # override lr with 0.9 / lambda_max of the empirical kernel

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.n_train < 1:
            raise ConfigError("n_train must be >= 1")
        if self.batch < 0:
            raise ConfigError("batch must be 0 (full) or positive")


@dataclasses.dataclass
class RefineResult:
    student: StudentNetwork
    tau_path: np.ndarray        # recorded shift iterates, (n_records, m)
    record_steps: np.ndarray    # descent-step index of each record
    losses: np.ndarray          # full-sample loss at each record
    shift_errors: np.ndarray | None  # ||tau_hat - tau||_2 at each record
    steps: int
    stop_reason: str
    lr: float
    lmax: float | None


def loss(student: StudentNetwork, xs, ys) -> float:
    """Half mean squared prediction error over the sample set."""
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise ConfigError("empty sample set")
    resid = student.eval_batch(xs) - ys
    return 0.5 * float(resid @ resid) / ys.size


def grad_loss(student: StudentNetwork, xs, ys) -> np.ndarray:
    """Exact gradient of :func:`loss` with respect to the shifts."""
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise ConfigError("empty sample set")
    pre = np.asarray(xs, dtype=float) @ student.weights + student.shifts
    resid = np.sum(student.act.g(pre), axis=1) - ys
    return (student.act.g1(pre).T @ resid) / ys.size


def power_iteration_lmax(mat: np.ndarray, iters: int = 200, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = mat @ v
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        lam = nrm
    return float(lam)


def _loss_grad_cached(act, pre, ys):
    g = act.g(pre)
    resid = np.sum(g, axis=1) - ys
    j = 0.5 * float(resid @ resid) / ys.size
    grad = (act.g1(pre).T @ resid) / ys.size
    return j, grad


def refine(student: StudentNetwork, teacher, cfg: RefineConfig, seed: int,
           tau_truth=None, record_every: int | None = None,
           audit_grad: bool = False) -> RefineResult:
    """Minimize the least-squares objective over the shifts.

    Draws ``n_train`` fresh Gaussian inputs, queries the teacher for targets
    (counted against the query budget), and iterates plain gradient descent
    from the student's current shifts.  Stops on the step budget, the loss
    threshold, or the wall clock.  When the recorded loss fails to improve on
    its running best for 50 consecutive records, the run aborts with a
    step-size diagnostic.

    ``tau_truth``, when given, must already be aligned with the student's
    column order; the distance to it is recorded alongside the loss.
    Records land every ``record_every`` steps (default: each step for
    full-batch runs, each epoch for mini-batch runs).
    """
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((cfg.n_train, student.dim))
    ys = teacher.eval_batch(xs)
    act = student.act
    z = xs @ student.weights  # shifts enter additively; cache the linear part
    tau = np.array(student.shifts, dtype=float)
    truth = None if tau_truth is None else np.asarray(tau_truth, dtype=float)

    lr = cfg.lr
    lmax = None
    if cfg.lr_auto:
        f0 = act.g1(z + tau)
        lmax = power_iteration_lmax((f0.T @ f0) / (2.0 * cfg.n_train), seed=seed)
        if lmax > 0:
            lr = 0.9 / lmax
        logger.info("auto step size: lambda_max ~ %.4g -> lr = %.4g", lmax, lr)

    full_batch = cfg.batch == 0 or cfg.batch >= cfg.n_train
    steps_per_epoch = 1 if full_batch else -(-cfg.n_train // cfg.batch)
    if record_every is None:
        record_every = 1 if full_batch else steps_per_epoch

    records, rec_steps, losses, errs = [], [], [], []
    best = np.inf
    stall = 0
    stop_reason = "max_steps"
    deadline = None if cfg.timeout_s is None else time.monotonic() + cfg.timeout_s
    step = 0

    def record(step_idx) -> bool:
        nonlocal best, stall, stop_reason
        j = 0.5 * float(np.sum((np.sum(act.g(z + tau), axis=1) - ys) ** 2)) / cfg.n_train
        records.append(tau.copy())
        rec_steps.append(step_idx)
        losses.append(j)
        if truth is not None:
            errs.append(float(np.linalg.norm(tau - truth)))
        if j < best * (1.0 - 1e-12):
            best = j
            stall = 0
        else:
            stall += 1
            if stall >= _DIVERGENCE_PATIENCE and j > 2.0 * best + 1e-300:
                # diagnose the kernel at the starting shifts; the diverged
                # iterate sits in activation saturation where it vanishes
                f0 = act.g1(z + records[0])
                lam = power_iteration_lmax((f0.T @ f0) / (2.0 * cfg.n_train), seed=seed)
                suggestion = 0.9 / lam if lam > 0 else None
                raise DivergenceError(
                    f"loss failed to improve for {_DIVERGENCE_PATIENCE} consecutive "
                    f"records at lr = {lr:.3g}; try lr <= {suggestion:.3g}"
                    if suggestion else
                    f"loss failed to improve for {_DIVERGENCE_PATIENCE} records",
                    lr=lr,
                    suggested_lr=suggestion,
                )
        if j <= cfg.stop_loss:
            stop_reason = "stop_loss"
            return True
        if deadline is not None and time.monotonic() > deadline:
            stop_reason = "timeout"
            return True
        return False

    stopped = record(0)
    while not stopped and step < cfg.max_steps:
        if full_batch:
            _, grad = _loss_grad_cached(act, z + tau, ys)
            tau -= lr * grad
            step += 1
        else:
            perm = rng.permutation(cfg.n_train)
            for lo in range(0, cfg.n_train, cfg.batch):
                idx = perm[lo:lo + cfg.batch]
                pre = z[idx] + tau
                resid = np.sum(act.g(pre), axis=1) - ys[idx]
                tau -= lr * (act.g1(pre).T @ resid) / idx.size
                step += 1
                if step >= cfg.max_steps:
                    break
        if step % record_every == 0 or step >= cfg.max_steps:
            if audit_grad and len(records) % 100 == 99:
                _audit_gradient(act, z, tau, ys)
            stopped = record(step)

    final = student.with_shifts(tau)
    logger.info("refine: %d steps, final loss %.3e (%s)", step, losses[-1], stop_reason)
    return RefineResult(
        student=final,
        tau_path=np.array(records),
        record_steps=np.array(rec_steps, dtype=int),
        losses=np.array(losses),
        shift_errors=np.array(errs) if truth is not None else None,
        steps=step,
        stop_reason=stop_reason,
        lr=lr,
        lmax=lmax,
    )


def _audit_gradient(act, z, tau, ys, h: float = 1e-6, tol: float = 1e-6):
    """Spot-check the analytic gradient against a central difference."""
    n = ys.size

    def j_at(t):
        return 0.5 * float(np.sum((np.sum(act.g(z + t), axis=1) - ys) ** 2)) / n

    _, grad = _loss_grad_cached(act, z + tau, ys)
    for k in range(min(3, tau.size)):
        e = np.zeros_like(tau)
        e[k] = h
        fd = (j_at(tau + e) - j_at(tau - e)) / (2 * h)
        if abs(fd - grad[k]) > tol:
            raise AssertionError(
                f"gradient audit failed at component {k}: analytic {grad[k]!r} vs FD {fd!r}"
            )
