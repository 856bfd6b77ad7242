"""Sign and shift initialization from directional derivatives at the origin.

With weight directions in hand (each one correct up to a global sign), the
second- and third-order directional derivatives of the network along those
directions satisfy small Hadamard-power Gram systems whose solutions are
``s_k^n g^(n)(tau_k)``.  Inverting the monotone g'' recovers initial shifts;
the sign of the third-order coefficient against g'''(0) recovers the signs.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import scipy.linalg

from .activations import Activation, invert_g2
from .exceptions import ConfigError, IllConditionedError
from .numdiff import FDConfig, fd_directional

__all__ = ["InitResult", "gram_power", "directional_derivs_at_zero", "init_signs_shifts"]

logger = logging.getLogger(__name__)

_COND_LIMIT = 1e10
_G3_ZERO_TOL = 1e-8


@dataclasses.dataclass
class InitResult:
    """Recovered signs and initial shifts, with solver conditioning info."""

    signs: np.ndarray            # +-1 per neuron
    tau0: np.ndarray             # initial shifts, clamped to the admissible interval
    c2: np.ndarray               # solved second-order coefficients
    c3: np.ndarray               # solved third-order coefficients
    cond_g2: float
    cond_g3: float
    used_g3_fallback: bool = False
    n_undetermined: int = 0


def gram_power(w_hat: np.ndarray, n: int) -> np.ndarray:
    """Entrywise n-th power of the Gram matrix of the columns."""
    if n < 1:
        raise ConfigError("gram power must be >= 1")
    w_hat = np.asarray(w_hat, dtype=float)
    return (w_hat.T @ w_hat) ** n


def directional_derivs_at_zero(net, w_hat: np.ndarray, n: int, cfg: FDConfig | None,
                               exact: bool = False) -> np.ndarray:
    """Order-n derivative of the network along each column, at the origin.

    Finite differences cost 3 queries per column for n = 2 and 4 for n = 3;
    ``exact=True`` uses the network's analytic oracle instead.
    """
    w_hat = np.asarray(w_hat, dtype=float)
    norms = np.linalg.norm(w_hat, axis=0)
    if np.max(np.abs(norms - 1.0)) > 1e-8:
        raise ConfigError("weight estimates must have unit columns")
    m = w_hat.shape[1]
    if exact:
        return np.array([net.directional_deriv_exact(w_hat[:, k], n) for k in range(m)])
    origin = np.zeros(net.dim)
    return np.array([
        fd_directional(net.eval, origin, w_hat[:, k], n, cfg, f_batch=net.eval_batch)
        for k in range(m)
    ])


def _solve_spd(gram: np.ndarray, rhs: np.ndarray, label: str):
    """SPD solve with one step of iterative refinement; surfaces conditioning."""
    evals = np.linalg.eigvalsh(gram)
    if evals[0] <= 0:
        raise IllConditionedError(
            f"{label} Gram system is not positive definite "
            f"(lambda_min = {evals[0]:.3e}); weight incoherence failed",
            cond=np.inf,
        )
    cond = float(evals[-1] / evals[0])
    if cond > _COND_LIMIT:
        raise IllConditionedError(
            f"{label} Gram system condition number {cond:.3e} exceeds {_COND_LIMIT:.0e}; "
            "weight incoherence failed",
            cond=cond,
        )
    factor = scipy.linalg.cho_factor(gram)
    sol = scipy.linalg.cho_solve(factor, rhs)
    sol += scipy.linalg.cho_solve(factor, rhs - gram @ sol)
    return sol, cond


def init_signs_shifts(net, w_hat: np.ndarray, act: Activation,
                      cfg: FDConfig | None, exact: bool = False) -> InitResult:
    """Run the full initialization: Gram solves, g'' inversion, sign rule.

    Signs come from ``sign(c3_k * g'''(0))``; when g''' vanishes at the
    origin (never for tanh or the sigmoid) the rule falls back to g''' at
    the recovered shift, and coefficients that are exactly zero are marked
    undetermined and default to +1.
    """
    t2 = directional_derivs_at_zero(net, w_hat, 2, cfg, exact=exact)
    t3 = directional_derivs_at_zero(net, w_hat, 3, cfg, exact=exact)
    c2, cond_g2 = _solve_spd(gram_power(w_hat, 2), t2, "order-2")
    c3, cond_g3 = _solve_spd(gram_power(w_hat, 3), t3, "order-3")

    tau0 = np.array([invert_g2(act, float(v)) for v in c2])

    g3_origin = float(act.g3(0.0))
    used_fallback = abs(g3_origin) < _G3_ZERO_TOL
    if used_fallback:
        logger.warning("g'''(0) ~ 0; falling back to g''' at the recovered shifts")
        products = c3 * act.g3(tau0)
    else:
        products = c3 * g3_origin
    signs = np.sign(products).astype(int)
    n_undetermined = int(np.sum(signs == 0))
    if n_undetermined:
        logger.warning("%d sign(s) undetermined (zero coefficient); defaulting to +1",
                       n_undetermined)
        signs[signs == 0] = 1
    return InitResult(
        signs=signs,
        tau0=tau0,
        c2=np.asarray(c2),
        c3=np.asarray(c3),
        cond_g2=cond_g2,
        cond_g3=cond_g3,
        used_g3_fallback=used_fallback,
        n_undetermined=n_undetermined,
    )
