"""End-to-end orchestration: teacher sampling through scoring.

The pipeline wires the stages together, derives per-stage seeds from the
master seed with a counter scheme (so concurrency or stage reordering can
never change results), tracks wall time and query counts per stage, and
persists artifacts after every stage so a failed run can be post-mortemed
or resumed.  The result CSV contains only deterministic fields; timings go
to the human-readable report.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from pathlib import Path

import numpy as np

from . import fileio
from .activations import make_activation
from .diagnostics import (Metrics, init_shift_error_bound, match_and_score,
                          match_weights)
from .exceptions import ConfigError, StageError
from .numdiff import FDConfig
from .refine import RefineConfig, refine
from .shift_init import init_signs_shifts
from .spm import SpmConfig, collect_weights
from .subspace import build_hessian_matrix, top_m_projector, unhvec
from .teacher import (StudentNetwork, UniformShifts, sample_teacher,
                      save_teacher)

__all__ = ["PipelineConfig", "ExperimentResult", "child_seed", "neuron_count",
           "default_n_hessians", "run_pipeline", "run_scaling_study",
           "RESULT_COLUMNS"]

logger = logging.getLogger(__name__)

_STAGE_IDS = {
    "teacher": 0,
    "hessians": 1,
    "spm": 2,
    "refine": 3,
    "score": 4,
    "baseline_student": 5,
    "study": 6,
}


def child_seed(master: int, stage: str, extra: int = 0) -> int:
    """Derive a per-stage seed from the master seed (counter-based, stable)."""
    key = (_STAGE_IDS[stage], extra)
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


def neuron_count(dim: int, beta_order: float) -> int:
    """Neuron-count rule m = ceil((2/5) D^beta)."""
    return math.ceil(0.4 * dim ** beta_order)


def default_n_hessians(dim: int, m: int) -> int:
    """Default Hessian-anchor budget ceil(log(D) m)."""
    return math.ceil(math.log(dim) * m)


@dataclasses.dataclass
class PipelineConfig:
    """Declarative description of one pipeline run."""

    dim: int
    n_neurons: int | None = None
    beta_order: float | None = None
    activation: str = "tanh"
    shift_law: object = UniformShifts(-0.5, 0.5)
    fd_step: float = 0.01
    exact_derivatives: bool = False
    n_hessians: int | None = None
    spm: SpmConfig = dataclasses.field(default_factory=SpmConfig)
    n_train: int | None = None      # None -> m * D^2
    lr: float = 1e-3
    batch: int = 64                  # 0 -> full-batch refinement
    refine_max_steps: int = 200_000
    stop_loss: float = 1e-8
    timeout_s: float | None = 180.0
    n_eval: int = 100_000
    seed: int = 0
    out_dir: str | None = None
    dump_spectrum: bool = False
    measure_eps: bool = True   # probe FD accuracy against the analytic oracle
    baseline_lr: float = 5e-3
    baseline_n_train: int | None = None   # None -> ceil(2.5 m D^2)
    baseline_max_epochs: int = 500

    def resolved_m(self) -> int:
        if self.n_neurons is not None:
            if self.n_neurons < 1:
                raise ConfigError("n_neurons must be >= 1")
            return self.n_neurons
        if self.beta_order is None:
            raise ConfigError("either n_neurons or beta_order must be given")
        return neuron_count(self.dim, self.beta_order)

    def validate(self):
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        self.resolved_m()

    def refine_config(self, m: int) -> RefineConfig:
        n_train = self.n_train if self.n_train is not None else m * self.dim ** 2
        return RefineConfig(
            n_train=n_train,
            lr=self.lr,
            batch=self.batch,
            max_steps=self.refine_max_steps,
            stop_loss=self.stop_loss,
            timeout_s=self.timeout_s,
        )


RESULT_COLUMNS = [
    "mode", "D", "beta", "m", "seed", "exact_mode", "fd_step",
    "e_inf", "max_weight_err", "shift_rms", "sign_accuracy",
    "init_shift_rms", "delta_w1", "delta_wo", "delta_ws", "init_shift_bound",
    "eps_hat", "cond_g2", "cond_g3",
    "spm_processed", "spm_accepted", "spm_duplicate", "spm_rejected",
    "refine_steps", "refine_stop_reason", "final_loss",
    "q_hessians", "q_init", "q_refine", "q_algorithm", "query_ceiling_ratio",
    "n_shifts_clamped", "error",
]


@dataclasses.dataclass
class ExperimentResult:
    """Everything one run produces, minus the heavyweight artifacts."""

    mode: str
    dim: int
    beta_order: float | None
    m: int
    seed: int
    exact_mode: bool
    fd_step: float
    metrics: Metrics | None = None
    sign_accuracy: float = float("nan")
    init_shift_rms: float = float("nan")
    init_shift_bound: float = float("nan")
    eps_hat: float = float("nan")
    cond_g2: float = float("nan")
    cond_g3: float = float("nan")
    spm_processed: int = 0
    spm_accepted: int = 0
    spm_duplicate: int = 0
    spm_rejected: int = 0
    refine_steps: int = 0
    refine_stop_reason: str = ""
    final_loss: float = float("nan")
    stage_times: dict = dataclasses.field(default_factory=dict)
    stage_queries: dict = dataclasses.field(default_factory=dict)
    n_shifts_clamped: int = 0
    oracle_count: int = 0
    error: str = ""

    @property
    def query_algorithm(self) -> int:
        return sum(self.stage_queries.get(k, 0) for k in ("hessians", "init", "refine"))

    @property
    def query_ceiling(self) -> float:
        log_m = math.log(self.m) if self.m > 1 else 1.0
        return 10.0 * self.dim * self.m ** 2 * log_m ** 2

    @property
    def query_ceiling_ratio(self) -> float:
        return self.query_algorithm / self.query_ceiling

    def csv_row(self) -> list:
        met = self.metrics
        return [
            self.mode, self.dim,
            "" if self.beta_order is None else self.beta_order,
            self.m, self.seed, int(self.exact_mode), self.fd_step,
            met.e_inf if met else float("nan"),
            met.max_weight_err if met else float("nan"),
            met.shift_rms if met else float("nan"),
            self.sign_accuracy, self.init_shift_rms,
            met.delta_w1 if met else float("nan"),
            met.delta_wo if met else float("nan"),
            met.delta_ws if met else float("nan"),
            self.init_shift_bound, self.eps_hat, self.cond_g2, self.cond_g3,
            self.spm_processed, self.spm_accepted, self.spm_duplicate,
            self.spm_rejected, self.refine_steps, self.refine_stop_reason,
            self.final_loss,
            self.stage_queries.get("hessians", 0),
            self.stage_queries.get("init", 0),
            self.stage_queries.get("refine", 0),
            self.query_algorithm, self.query_ceiling_ratio,
            self.n_shifts_clamped, self.error,
        ]

    def write_result_csv(self, path):
        fileio.write_csv(path, RESULT_COLUMNS, [self.csv_row()])

    def write_report(self, path):
        lines = [f"{self.mode} run: D={self.dim} m={self.m} seed={self.seed}"]
        for name, dt in self.stage_times.items():
            q = self.stage_queries.get(name, 0)
            lines.append(f"  {name:<10s} {dt:9.3f} s   {q} queries")
        lines.append(f"  algorithm queries: {self.query_algorithm} "
                     f"(ceiling ratio {self.query_ceiling_ratio:.4f})")
        lines.append(f"  oracle evaluations (test/eps-probe only): {self.oracle_count}")
        if self.metrics:
            lines.append(f"  e_inf={self.metrics.e_inf:.3e} "
                         f"max_weight_err={self.metrics.max_weight_err:.3e} "
                         f"shift_rms={self.metrics.shift_rms:.3e} "
                         f"sign_accuracy={self.sign_accuracy:.3f}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


class _StageRunner:
    """Times stages, snapshots query counts, and wraps failures."""

    def __init__(self, net_getter, result: ExperimentResult, on_fail):
        self._net_getter = net_getter
        self._result = result
        self._on_fail = on_fail

    def run(self, name, fn):
        net = self._net_getter()
        before = net.query_count if net is not None else 0
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            self._result.stage_times[name] = time.perf_counter() - t0
            self._result.error = f"{name}: {exc}"
            self._on_fail()
            raise StageError(name, exc) from exc
        self._result.stage_times[name] = time.perf_counter() - t0
        after = net.query_count if net is not None else 0
        self._result.stage_queries[name] = after - before
        logger.info("stage %-10s %.3f s, %d queries", name,
                    self._result.stage_times[name], after - before)
        return out


def run_pipeline(cfg: PipelineConfig) -> ExperimentResult:
    """Execute the full recovery chain and score it against the truth.

    Stage order: sample teacher, approximate Hessians, principal subspace,
    sphere-ascent collection, sign/shift initialization, sign folding,
    gradient-descent refinement, matching and scoring.  Raises
    :class:`StageError` on failure after persisting partial artifacts.
    """
    cfg.validate()
    m = cfg.resolved_m()
    act = make_activation(cfg.activation)
    n_h = cfg.n_hessians if cfg.n_hessians is not None else default_n_hessians(cfg.dim, m)
    fd_cfg = FDConfig(step_h=cfg.fd_step)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    result = ExperimentResult(
        mode="pipeline", dim=cfg.dim, beta_order=cfg.beta_order, m=m,
        seed=cfg.seed, exact_mode=cfg.exact_derivatives, fd_step=cfg.fd_step,
    )
    state = {"net": None}
    artifacts = {}

    def persist_partial():
        if out_dir is None:
            return
        if state["net"] is not None:
            save_teacher(state["net"], out_dir / "teacher.net")
        if "w_hat" in artifacts:
            fileio.save_weights(artifacts["w_hat"], out_dir / "weights.txt")
        if "init" in artifacts:
            fileio.save_init_result(artifacts["init"], out_dir / "init.txt")
        result.write_result_csv(out_dir / "result.csv")
        result.write_report(out_dir / "report.txt")

    stages = _StageRunner(lambda: state["net"], result, persist_partial)

    def _teacher():
        net = sample_teacher(cfg.dim, m, cfg.shift_law, act,
                             child_seed(cfg.seed, "teacher"))
        state["net"] = net
        result.n_shifts_clamped = getattr(net, "n_shifts_clamped", 0)
        if out_dir:
            save_teacher(net, out_dir / "teacher.net")
        return net

    net = stages.run("teacher", _teacher)

    def _hessians():
        cols, anchors, _ = build_hessian_matrix(
            net, n_h, fd_cfg, child_seed(cfg.seed, "hessians"),
            exact=cfg.exact_derivatives,
        )
        if cfg.exact_derivatives:
            eps_hat = 0.0
        elif cfg.measure_eps:
            # measured FD accuracy against the analytic oracle on a few probes
            eps_hat = 0.0
            for i in range(min(3, n_h)):
                dev = unhvec(cols[:, i], cfg.dim) - net.analytic_hessian(anchors[i])
                eps_hat = max(eps_hat, float(np.max(np.abs(dev))))
        else:
            eps_hat = float("nan")
        return cols, eps_hat

    cols, result.eps_hat = stages.run("hessians", _hessians)

    def _projector():
        proj = top_m_projector(cols, m)
        if out_dir and cfg.dump_spectrum:
            spectrum = getattr(proj, "spectrum", proj.singular_values)
            fileio.write_csv(out_dir / "spectrum.csv", ["index", "sigma"],
                             [[i, float(s)] for i, s in enumerate(spectrum)])
        return proj

    proj = stages.run("projector", _projector)

    def _spm():
        w_hat, stats = collect_weights(proj, m, cfg.spm, child_seed(cfg.seed, "spm"))
        artifacts["w_hat"] = w_hat
        result.spm_processed = stats.n_processed
        result.spm_accepted = stats.n_accepted
        result.spm_duplicate = stats.n_duplicate
        result.spm_rejected = stats.n_rejected
        if out_dir:
            fileio.save_weights(w_hat, out_dir / "weights.txt")
        return w_hat

    w_hat = stages.run("spm", _spm)

    def _init():
        res = init_signs_shifts(net, w_hat, act, fd_cfg, exact=cfg.exact_derivatives)
        artifacts["init"] = res
        result.cond_g2, result.cond_g3 = res.cond_g2, res.cond_g3
        if out_dir:
            fileio.save_init_result(res, out_dir / "init.txt")
        return res

    init_res = stages.run("init", _init)

    # fold the recovered signs into the columns, then evaluate the
    # initialization against the (diagnostics-only) matching
    student0 = StudentNetwork(w_hat * init_res.signs, init_res.tau0, act)
    perm, match_signs, werrs = match_weights(student0.weights, net.weights)
    delta_max = float(np.max(werrs))
    result.sign_accuracy = float(np.mean(match_signs == 1))
    result.init_shift_rms = float(
        np.linalg.norm(net.shifts - init_res.tau0[perm]) / math.sqrt(m))
    result.init_shift_bound = init_shift_error_bound(
        m, cfg.dim, result.eps_hat, delta_max)
    tau_truth_student = np.empty(m)
    tau_truth_student[perm] = net.shifts

    def _refine():
        ref = refine(student0, net, cfg.refine_config(m),
                     child_seed(cfg.seed, "refine"), tau_truth=tau_truth_student)
        result.refine_steps = ref.steps
        result.refine_stop_reason = ref.stop_reason
        result.final_loss = float(ref.losses[-1])
        if out_dir:
            rows = [[int(s), float(l)] + ([float(e)] if ref.shift_errors is not None else [])
                    for s, l, e in zip(ref.record_steps, ref.losses,
                                       ref.shift_errors if ref.shift_errors is not None
                                       else ref.losses)]
            header = ["step", "loss"] + (["shift_error"] if ref.shift_errors is not None else [])
            fileio.write_csv(out_dir / "trajectory.csv", header, rows)
        return ref

    ref = stages.run("refine", _refine)

    def _score():
        return match_and_score(ref.student, net, n_eval=cfg.n_eval,
                               seed=child_seed(cfg.seed, "score"))

    result.metrics = stages.run("score", _score)
    result.oracle_count = net.oracle_count
    if result.query_ceiling_ratio > 1.0:
        logger.warning("query budget exceeded: ratio %.3f", result.query_ceiling_ratio)

    if out_dir:
        result.write_result_csv(out_dir / "result.csv")
        result.write_report(out_dir / "report.txt")
    return result


def run_scaling_study(grid: list[PipelineConfig], repetitions: int,
                      out_csv=None) -> list[list]:
    """Run every grid cell ``repetitions`` times and tabulate long-format rows.

    Per-cell failures are recorded in the ``error`` column and the study
    continues.  Returns the rows; also writes them when ``out_csv`` is given.
    """
    if not grid:
        raise ConfigError("scaling study needs a nonempty grid")
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    rows = []
    for cell_idx, base in enumerate(grid):
        for rep in range(repetitions):
            cfg = dataclasses.replace(
                base, seed=child_seed(base.seed, "study", extra=cell_idx * 10_000 + rep),
                out_dir=None,
            )
            try:
                res = run_pipeline(cfg)
            except StageError as exc:
                res = ExperimentResult(
                    mode="pipeline", dim=cfg.dim, beta_order=cfg.beta_order,
                    m=cfg.resolved_m(), seed=cfg.seed,
                    exact_mode=cfg.exact_derivatives, fd_step=cfg.fd_step,
                    error=str(exc),
                )
                logger.warning("study cell %d rep %d failed: %s", cell_idx, rep, exc)
            row = res.csv_row()
            for name in ("teacher", "hessians", "projector", "spm", "init",
                         "refine", "score"):
                row.append(res.stage_times.get(name, float("nan")))
            rows.append(row)
    if out_csv is not None:
        header = RESULT_COLUMNS + [f"t_{n}" for n in
                                   ("teacher", "hessians", "projector", "spm",
                                    "init", "refine", "score")]
        fileio.write_csv(out_csv, header, rows)
    return rows
