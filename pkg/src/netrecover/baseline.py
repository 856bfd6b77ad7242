"""Plain teacher-student SGD baseline for comparison with the pipeline.

A student of identical architecture is trained jointly on weights and
shifts by mini-batch SGD on the least-squares loss.  Weights are projected
back to unit columns after every update so the student stays inside the
model class (a deviation from unconstrained SGD, logged as such).  The
budget is wall-clock capped; epoch counts are reported as the
hardware-neutral measure of training effort.
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from .activations import make_activation
from .diagnostics import match_and_score
from .exceptions import StageError
from .pipeline import ExperimentResult, PipelineConfig, child_seed
from .teacher import StudentNetwork, sample_teacher

__all__ = ["run_baseline_sgd"]

logger = logging.getLogger(__name__)


def run_baseline_sgd(cfg: PipelineConfig, track_e_inf_every: int = 0,
                     n_track: int = 2000) -> ExperimentResult:
    """Fit a fresh student to the teacher by joint SGD and score it.

    ``track_e_inf_every`` > 0 records the held-out uniform error every that
    many epochs (on ``n_track`` fixed inputs) in ``result.e_inf_track``.
    """
    cfg.validate()
    m = cfg.resolved_m()
    act = make_activation(cfg.activation)
    result = ExperimentResult(
        mode="baseline", dim=cfg.dim, beta_order=cfg.beta_order, m=m,
        seed=cfg.seed, exact_mode=False, fd_step=cfg.fd_step,
    )
    try:
        net = sample_teacher(cfg.dim, m, cfg.shift_law, act,
                             child_seed(cfg.seed, "teacher"))
    except Exception as exc:
        raise StageError("teacher", exc) from exc
    result.n_shifts_clamped = getattr(net, "n_shifts_clamped", 0)

    rng = np.random.default_rng(child_seed(cfg.seed, "baseline_student"))
    weights = rng.standard_normal((cfg.dim, m))
    weights /= np.linalg.norm(weights, axis=0)
    tau = np.zeros(m)

    n_train = (cfg.baseline_n_train if cfg.baseline_n_train is not None
               else math.ceil(2.5 * m * cfg.dim ** 2))
    batch = max(1, cfg.batch) if cfg.batch else 64
    lr = cfg.baseline_lr
    logger.info("baseline: joint SGD, %d samples, batch %d, lr %g "
                "(unit-column projection after each step)", n_train, batch, lr)

    t0 = time.perf_counter()
    before = net.query_count
    xs = rng.standard_normal((n_train, cfg.dim))
    ys = net.eval_batch(xs)
    track_xs = rng.standard_normal((n_track, cfg.dim))
    track_ys = net.eval_batch(track_xs) if track_e_inf_every else None

    deadline = None if cfg.timeout_s is None else time.monotonic() + cfg.timeout_s
    e_inf_track = []
    epochs_done = 0
    steps = 0
    stop_reason = "max_epochs"
    full_loss = float("nan")
    for epoch in range(cfg.baseline_max_epochs):
        perm = rng.permutation(n_train)
        for lo in range(0, n_train, batch):
            idx = perm[lo:lo + batch]
            xb = xs[idx]
            pre = xb @ weights + tau
            resid = np.sum(act.g(pre), axis=1) - ys[idx]
            gp = act.g1(pre) * resid[:, None]
            weights -= (lr / idx.size) * (xb.T @ gp)
            tau -= (lr / idx.size) * gp.sum(axis=0)
            weights /= np.linalg.norm(weights, axis=0)
            steps += 1
        np.clip(tau, -act.tau_inf, act.tau_inf, out=tau)
        epochs_done = epoch + 1
        if track_e_inf_every and epochs_done % track_e_inf_every == 0:
            student = StudentNetwork(weights, tau, act)
            e_inf_track.append(
                float(np.max(np.abs(student.eval_batch(track_xs) - track_ys))) / m)
        full_loss = 0.5 * float(np.sum(
            (np.sum(act.g(xs @ weights + tau), axis=1) - ys) ** 2)) / n_train
        if full_loss <= cfg.stop_loss:
            stop_reason = "stop_loss"
            break
        if deadline is not None and time.monotonic() > deadline:
            stop_reason = "timeout"
            break
    result.stage_times["refine"] = time.perf_counter() - t0
    result.stage_queries["refine"] = net.query_count - before
    result.refine_steps = steps
    result.refine_stop_reason = f"{stop_reason} ({epochs_done} epochs)"
    result.final_loss = full_loss

    student = StudentNetwork(weights, tau, act)
    result.metrics = match_and_score(student, net, n_eval=cfg.n_eval,
                                     seed=child_seed(cfg.seed, "score"))
    result.sign_accuracy = float(np.mean(result.metrics.signs == 1))
    result.e_inf_track = e_inf_track
    return result
