"""Planted shallow networks and their black-box query oracle.

A teacher network is ``f(x) = sum_k g(<w_k, x> + tau_k)`` with unit-norm
weight columns and bounded shifts.  All parameter access in the recovery
pipeline goes through the counted evaluation oracle; the analytic derivative
methods exist for tests and for the exact-derivative pipeline mode, and are
tallied separately so the harness can verify the black-box budget.
"""

from __future__ import annotations

import dataclasses
import threading

import numpy as np

from .activations import Activation, make_activation
from .exceptions import ConfigError

__all__ = [
    "TeacherNetwork",
    "StudentNetwork",
    "UniformShifts",
    "GaussianShifts",
    "FixedShifts",
    "sample_teacher",
    "save_teacher",
    "load_teacher",
    "analytic_derivatives",
]

_UNIT_TOL = 1e-12


class _Counter:
    """Thread-safe accumulator for query counts."""

    __slots__ = ("_lock", "value")

    def __init__(self):
        self._lock = threading.Lock()
        self.value = 0

    def add(self, k: int):
        with self._lock:
            self.value += k


@dataclasses.dataclass(frozen=True)
class UniformShifts:
    low: float = -0.5
    high: float = 0.5

    def sample(self, m, tau_inf, rng):
        if self.low < -tau_inf or self.high > tau_inf:
            raise ConfigError(
                f"uniform shift range [{self.low}, {self.high}] exceeds "
                f"[-{tau_inf}, {tau_inf}]"
            )
        return rng.uniform(self.low, self.high, size=m), 0

    def describe(self):
        return f"uniform:{self.low},{self.high}"


@dataclasses.dataclass(frozen=True)
class GaussianShifts:
    """Centered Gaussian shifts with std ``sigma``, clamped at +-tau_inf.

    Clamping events are counted and reported by ``sample_teacher``.
    """

    sigma: float = 0.05

    def sample(self, m, tau_inf, rng):
        tau = rng.normal(0.0, self.sigma, size=m)
        clamped = int(np.sum(np.abs(tau) > tau_inf))
        return np.clip(tau, -tau_inf, tau_inf), clamped

    def describe(self):
        return f"gaussian:{self.sigma}"


@dataclasses.dataclass(frozen=True)
class FixedShifts:
    values: tuple

    def sample(self, m, tau_inf, rng):
        tau = np.asarray(self.values, dtype=float)
        if tau.shape != (m,):
            raise ConfigError(f"fixed shift vector has length {tau.shape}, expected {m}")
        if np.max(np.abs(tau)) > tau_inf:
            raise ConfigError("fixed shifts exceed the admissible interval")
        return tau.copy(), 0

    def describe(self):
        return "fixed:" + ",".join(repr(v) for v in self.values)


def _check_network_params(weights, shifts, act):
    weights = np.asarray(weights, dtype=float)
    shifts = np.asarray(shifts, dtype=float)
    if weights.ndim != 2:
        raise ConfigError("weights must be a (D, m) matrix")
    d, m = weights.shape
    if shifts.shape != (m,):
        raise ConfigError(f"shift vector has shape {shifts.shape}, expected ({m},)")
    norms = np.linalg.norm(weights, axis=0)
    bad = np.nonzero(np.abs(norms - 1.0) > _UNIT_TOL)[0]
    if bad.size:
        raise ConfigError(
            f"weight column {bad[0]} has norm {norms[bad[0]]!r}, expected unit"
        )
    if np.max(np.abs(shifts), initial=0.0) > act.tau_inf + 1e-15:
        raise ConfigError("shifts exceed the admissible interval of the activation")
    return weights, shifts, act


class _ShallowNet:
    """Shared evaluation machinery for teacher and student networks."""

    def __init__(self, weights, shifts, act: Activation):
        self.weights, self.shifts, self.act = _check_network_params(weights, shifts, act)
        self.dim, self.n_neurons = self.weights.shape

    def _preactivations(self, x):
        return x @ self.weights + self.shifts

    def eval_raw(self, x):
        return float(np.sum(self.act.g(self._preactivations(np.asarray(x, dtype=float)))))

    def eval_batch_raw(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ConfigError(f"batch must have shape (n, {self.dim})")
        return np.sum(self.act.g(self._preactivations(xs)), axis=1)


class TeacherNetwork(_ShallowNet):
    """The planted model with a counted black-box query oracle.

    ``query_count`` counts scalar f-evaluations served through ``eval`` /
    ``eval_batch``.  The analytic derivative oracles are test-only helpers
    and increment ``oracle_count`` instead.
    """

    def __init__(self, weights, shifts, act: Activation, seed: int | None = None):
        super().__init__(weights, shifts, act)
        self.seed = seed
        self._queries = _Counter()
        self._oracle = _Counter()

    @property
    def query_count(self) -> int:
        return self._queries.value

    @property
    def oracle_count(self) -> int:
        return self._oracle.value

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ConfigError(f"input has shape {x.shape}, expected ({self.dim},)")
        self._queries.add(1)
        return self.eval_raw(x)

    def eval_batch(self, xs) -> np.ndarray:
        vals = self.eval_batch_raw(xs)
        self._queries.add(vals.shape[0])
        return vals

    # -- analytic oracles (do not touch the query budget) ------------------

    def analytic_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._oracle.add(1)
        return self.weights @ self.act.g1(self._preactivations(x))

    def analytic_hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._oracle.add(1)
        w = self.weights
        return (w * self.act.g2(self._preactivations(x))) @ w.T

    def directional_deriv_exact(self, u, n: int) -> float:
        """Exact order-n derivative of t -> f(t u) at t = 0."""
        u = np.asarray(u, dtype=float)
        self._oracle.add(1)
        dots = self.weights.T @ u
        return float(np.sum(self.act.derivative(n)(self.shifts) * dots ** n))


def analytic_derivatives(net: TeacherNetwork, x, order: int):
    """Exact gradient (order 1) or Hessian (order 2) of the teacher at x."""
    if order == 1:
        return net.analytic_gradient(x)
    if order == 2:
        return net.analytic_hessian(x)
    raise ConfigError(f"order must be 1 or 2, got {order}")


class StudentNetwork(_ShallowNet):
    """Recovered model: sign-folded weight estimates plus trainable shifts."""

    def __init__(self, weights, shifts, act: Activation):
        super().__init__(weights, shifts, act)

    def eval_batch(self, xs) -> np.ndarray:
        return self.eval_batch_raw(xs)

    def with_shifts(self, shifts) -> "StudentNetwork":
        return StudentNetwork(self.weights, shifts, self.act)


def sample_teacher(dim: int, n_neurons: int, shift_law, act: Activation, seed: int):
    """Draw a planted network: weight columns i.i.d. uniform on the sphere.

    Columns are normalized standard Gaussian vectors (exact and
    dimension-free); shifts come from the given law.  Reproducible under the
    seed.  Returns the network; the number of clamped Gaussian shifts, if
    any, is available as ``net.n_shifts_clamped``.
    """
    if dim < 1 or n_neurons < 1:
        raise ConfigError("dim and n_neurons must be positive")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((dim, n_neurons))
    w /= np.linalg.norm(w, axis=0)
    tau, clamped = shift_law.sample(n_neurons, act.tau_inf, rng)
    net = TeacherNetwork(w, tau, act, seed=seed)
    net.n_shifts_clamped = clamped
    return net


def save_teacher(net: TeacherNetwork, path):
    """Write a network file: header then one line per neuron.

    Format: ``D m activation tau_inf seed`` followed by m lines of D+1
    decimals (weight column, then shift).  ``repr`` precision makes the
    round trip bit-exact.  Lines starting with ``#`` are comments.
    """
    lines = ["# shallow network file"]
    seed = -1 if net.seed is None else int(net.seed)
    lines.append(f"{net.dim} {net.n_neurons} {net.act.kind} {net.act.tau_inf!r} {seed}")
    for k in range(net.n_neurons):
        vals = [repr(float(v)) for v in net.weights[:, k]] + [repr(float(net.shifts[k]))]
        lines.append(" ".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_teacher(path) -> TeacherNetwork:
    """Parse a network file written by :func:`save_teacher`.

    Malformed content raises ``ConfigError`` with the offending line number;
    the unit-norm and shift-range invariants are re-validated.
    """
    with open(path) as fh:
        raw = fh.readlines()
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(raw)
            if ln.strip() and not ln.strip().startswith("#")]
    if not rows:
        raise ConfigError(f"{path}: empty network file")
    lineno, header = rows[0]
    parts = header.split()
    if len(parts) != 5:
        raise ConfigError(f"{path}:{lineno}: malformed header {header!r}")
    try:
        dim, m = int(parts[0]), int(parts[1])
        kind = parts[2]
        seed = int(parts[4])
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: malformed header: {exc}") from None
    if len(rows) - 1 != m:
        raise ConfigError(
            f"{path}: expected {m} neuron lines, found {len(rows) - 1} (truncated?)"
        )
    act = make_activation(kind)
    weights = np.empty((dim, m))
    shifts = np.empty(m)
    for k, (lineno, line) in enumerate(rows[1:]):
        vals = line.split()
        if len(vals) != dim + 1:
            raise ConfigError(
                f"{path}:{lineno}: expected {dim + 1} values, found {len(vals)}"
            )
        try:
            nums = [float(v) for v in vals]
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        weights[:, k] = nums[:-1]
        shifts[k] = nums[-1]
    return TeacherNetwork(weights, shifts, act, seed=None if seed == -1 else seed)
