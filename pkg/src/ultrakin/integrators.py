"""Adaptive Dormand-Prince 5(4) integration of real ODE systems.

The stepper works on real arrays of any shape.  When the state has more than
one axis the leading axes are treated as a batch of independent systems that
share one step size.  Errors are measured in the max norm over all
components, so every component of every batch member meets
``atol + rtol * |y|`` on each accepted step.

Step-size selection uses the PI controller of Hairer, Norsett & Wanner
(Solving ODEs I, section II.4) and dense output uses the quartic continuous
extension that ships with the pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "IntegrationError",
    "DormandPrince",
    "Solution",
    "solve",
]

# Butcher tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# Difference between the fifth- and fourth-order weights.
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# Continuous extension: y(t_old + x h) = y_old + h * sum_k K_k (P[k] . [x, x^2, x^3, x^4]).
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Raised on step-size underflow or a non-finite state."""


class DormandPrince:
    """Single-trajectory (or batched) Dormand-Prince 5(4) stepper.

    Parameters
    ----------
    fun : callable
        ``fun(t, y)`` returning ``dy/dt`` with the shape of ``y``.
    t0 : float
        Initial value of the independent variable.
    y0 : array_like
        Real initial state.
    rtol, atol : float
        Local error tolerances.
    h0 : float, optional
        First trial step.  Estimated from the field when omitted.
    direction : {+1, -1}
        Integrate forward or backward in ``t``.
    """

    def __init__(self, fun, t0, y0, *, rtol=1e-10, atol=1e-12, h0=None,
                 direction=1, h_min=None):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        if not np.all(np.isfinite(self.y)):
            raise IntegrationError("non-finite initial state")
        self.rtol = rtol
        self.atol = atol
        self.direction = 1.0 if direction >= 0 else -1.0
        self.f = np.asarray(fun(self.t, self.y), dtype=float)
        self.nfev = 1
        self.naccept = 0
        self.nreject = 0
        self._err_old = 1e-4
        self._h_min = h_min
        self.h = abs(h0) if h0 is not None else self._initial_step()
        self.t_old = self.t
        self.y_old = self.y.copy()
        self._K = None
        self._h_last = 0.0

    def _norm(self, x):
        return float(np.max(np.abs(x))) if np.size(x) else 0.0

    def _initial_step(self):
        # Hairer's starting-step heuristic.
        scale = self.atol + np.abs(self.y) * self.rtol
        d0 = self._norm(self.y / scale)
        d1 = self._norm(self.f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = self.y + self.direction * h0 * self.f
        f1 = self.fun(self.t + self.direction * h0, y1)
        self.nfev += 1
        d2 = self._norm((f1 - self.f) / scale) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1)

    def step(self, t_bound=None):
        """Advance by one accepted step, never passing ``t_bound``."""
        d = self.direction
        h_min = self._h_min if self._h_min is not None else 16 * np.spacing(abs(self.t) + 1.0)
        h = self.h
        while True:
            clipped = False
            if t_bound is not None and d * (self.t + d * h - t_bound) > 0:
                h = abs(t_bound - self.t)
                clipped = True
            if clipped and h == 0.0:
                return self.t, self.y
            if h < h_min and not clipped:
                raise IntegrationError(f"step size underflow at t={self.t!r}")
            hs = d * h
            y, t = self.y, self.t
            K = [self.f]
            for i in range(1, 7):
                dy = K[0] * _A[i][0]
                for j in range(1, i):
                    if _A[i][j] != 0.0:
                        dy = dy + K[j] * _A[i][j]
                K.append(np.asarray(self.fun(t + _C[i] * hs, y + hs * dy), dtype=float))
            self.nfev += 6
            # K[6] was evaluated at the fifth-order solution (FSAL).
            y_new = y + hs * (K[0] * _B[0] + K[2] * _B[2] + K[3] * _B[3] + K[4] * _B[4] + K[5] * _B[5])
            err_vec = hs * (K[0] * _E[0] + K[2] * _E[2] + K[3] * _E[3] + K[4] * _E[4]
                            + K[5] * _E[5] + K[6] * _E[6])
            scale = self.atol + np.maximum(np.abs(self.y), np.abs(y_new)) * self.rtol
            err = self._norm(err_vec / scale)
            if not np.isfinite(err):
                self.nreject += 1
                h *= _MIN_FACTOR
                if h < h_min:
                    raise IntegrationError(f"non-finite state near t={self.t!r}")
                continue
            if err <= 1.0:
                err = max(err, 1e-16)
                fac = _SAFETY * err ** -_ALPHA * self._err_old ** _BETA
                fac = min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
                self._err_old = max(err, 1e-4)
                self.t_old, self.y_old = self.t, self.y
                self.t = t_bound if clipped else self.t + hs
                self.y = y_new
                # FSAL: the last stage is the field at the new point.
                self.f = K[6]
                self._K = K
                self._h_last = hs
                self.h = h * fac if not clipped else max(self.h, h * fac)
                self.naccept += 1
                return self.t, self.y
            self.nreject += 1
            fac = max(_MIN_FACTOR, _SAFETY * err ** -_ALPHA)
            h *= fac

    def dense(self, t):
        """Evaluate the continuous extension of the last accepted step."""
        if self._K is None:
            raise IntegrationError("no step taken yet")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = (t - self.t_old) / self._h_last
        powers = np.stack([x, x**2, x**3, x**4])  # (4, m)
        Q = np.tensordot(np.asarray(self._K), _P, axes=(0, 0))  # (*shape, 4)
        out = self.y_old[None, ...] + self._h_last * np.moveaxis(Q @ powers, -1, 0)
        return out


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    nfev: int = 0
    naccept: int = 0
    nreject: int = 0
    stats: dict = field(default_factory=dict)


def solve(fun: Callable, t_span, y0, *, t_eval=None, rtol=1e-10, atol=1e-12,
          h0=None, max_steps=10_000_000) -> Solution:
    """Integrate ``fun`` over ``t_span`` and sample on ``t_eval``.

    Without ``t_eval`` every accepted step is returned.  Samples are taken
    from the dense output so the grid does not constrain the step size.
    """
    t0, t1 = map(float, t_span)
    direction = 1 if t1 >= t0 else -1
    stepper = DormandPrince(fun, t0, y0, rtol=rtol, atol=atol, h0=h0, direction=direction)
    if t_eval is None:
        ts, ys = [t0], [stepper.y.copy()]
        while direction * (t1 - stepper.t) > 0:
            stepper.step(t1)
            ts.append(stepper.t)
            ys.append(stepper.y.copy())
            if stepper.naccept > max_steps:
                raise IntegrationError("maximum number of steps exceeded")
        return Solution(np.array(ts), np.array(ys), stepper.nfev, stepper.naccept, stepper.nreject)

    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (direction * (t_eval[0] - t0) < 0 or direction * (t_eval[-1] - t1) > 0):
        raise ValueError("t_eval must lie inside t_span")
    out = np.empty((t_eval.size,) + stepper.y.shape)
    i = 0
    while i < t_eval.size and t_eval[i] == t0:
        out[i] = stepper.y
        i += 1
    while i < t_eval.size:
        stepper.step(t1)
        if stepper.naccept > max_steps:
            raise IntegrationError("maximum number of steps exceeded")
        j = i
        while j < t_eval.size and direction * (t_eval[j] - stepper.t) <= 0:
            j += 1
        if j > i:
            out[i:j] = stepper.dense(t_eval[i:j])
            i = j
    return Solution(t_eval.copy(), out, stepper.nfev, stepper.naccept, stepper.nreject)
