"""Classical ODE oracles and error metrics.

``rk4`` is the fixed-step classical scheme with linear dense output.
``rk45`` is the Dormand-Prince 5(4) embedded pair with FSAL, standard
error-per-step control and cubic Hermite dense output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


@dataclass
class OdeProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    t1: float
    y0: np.ndarray

    def __post_init__(self):
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=np.float64))
        if self.t1 < self.t0:
            raise ValueError("t1 must not precede t0")


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (len(t), dim)
    method: str
    f: np.ndarray | None = None  # derivatives at nodes, enables Hermite output

    def __call__(self, tq):
        """Dense output at times ``tq`` (cubic Hermite when derivatives exist)."""
        tq = np.atleast_1d(np.asarray(tq, dtype=np.float64))
        if len(self.t) == 1:
            return np.repeat(self.y[:1], len(tq), axis=0)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise ValueError("query outside the integrated interval")
        idx = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        h = (t1 - t0)[:, None]
        s = ((tq - t0) / (t1 - t0))[:, None]
        y0, y1 = self.y[idx], self.y[idx + 1]
        if self.f is None:
            return (1 - s) * y0 + s * y1
        f0, f1 = self.f[idx], self.f[idx + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    def to_csv(self, path, names=None) -> None:
        names = names or [f"y{i}" for i in range(self.y.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names])
            for ti, yi in zip(self.t, self.y):
                w.writerow([repr(float(ti)), *[repr(float(v)) for v in yi]])


def _rhs(problem, t, y):
    f = np.atleast_1d(np.asarray(problem.rhs(t, y), dtype=np.float64))
    if not np.all(np.isfinite(f)):
        raise IntegrationError(f"non-finite derivative at t={t}")
    return f


def rk4(problem: OdeProblem, h: float) -> Trajectory:
    if h <= 0:
        raise ValueError("step must be positive")
    span = problem.t1 - problem.t0
    n = max(int(math.ceil(span / h - 1e-12)), 0)
    ts = [problem.t0]
    ys = [problem.y0.copy()]
    t, y = problem.t0, problem.y0.copy()
    for i in range(n):
        step = min(h, problem.t1 - t) if i == n - 1 else h
        k1 = _rhs(problem, t, y)
        k2 = _rhs(problem, t + step / 2, y + step / 2 * k1)
        k3 = _rhs(problem, t + step / 2, y + step / 2 * k2)
        k4 = _rhs(problem, t + step, y + step * k3)
        y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = problem.t0 + (i + 1) * h if i < n - 1 else problem.t1
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={t}")
        ts.append(t)
        ys.append(y.copy())
    return Trajectory(np.array(ts), np.array(ys), "rk4")


# Dormand-Prince coefficients
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
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _initial_step(problem, t, y, f, rtol, atol):
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + h0 * f
    f1 = _rhs(problem, t + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def rk45(problem: OdeProblem, rtol: float = 1e-6, atol: float = 1e-9, max_steps: int = 1_000_000) -> Trajectory:
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    t, y = float(problem.t0), problem.y0.copy()
    f = _rhs(problem, t, y)
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    if problem.t1 == problem.t0:
        return Trajectory(np.array(ts), np.array(ys), "rk45", np.array(fs))
    h = min(_initial_step(problem, t, y, f, rtol, atol), problem.t1 - t)
    k = np.empty((7, y.size))
    for _ in range(max_steps):
        if t >= problem.t1:
            break
        min_h = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < min_h:
            raise StepSizeUnderflow(f"step size underflow at t={t}")
        h = min(h, problem.t1 - t)
        k[0] = f
        for s in range(1, 7):
            k[s] = _rhs(problem, t + _C[s] * h, y + h * (np.asarray(_A[s]) @ k[:s]))
        y_new = y + h * (_B5 @ k)
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t = problem.t1 if problem.t1 - (t + h) < min_h else t + h
            y = y_new
            f = k[6].copy()
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** (-1 / 5))
        else:
            factor = max(0.2, 0.9 * err ** (-1 / 5))
        h *= factor
    else:
        raise IntegrationError("maximum number of steps exceeded")
    return Trajectory(np.array(ts), np.array(ys), "rk45", np.array(fs))


# ---------------------------------------------------------------- flame oracle


def flame_implicit_check(t, y, delta: float, rho: float):
    """Residual of the separable flame solution's implicit form.

    ``1/y + ln(1/y - 1) - (1/delta + ln(1/delta - 1) - rho t)``, zero on the
    exact solution. Defined for ``0 < y < 1``.
    """
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if np.any(y <= 0) or np.any(y >= 1):
        raise ValueError("implicit check needs 0 < y < 1")
    lhs = 1.0 / y + np.log((1.0 - y) / y)
    rhs = 1.0 / delta + math.log(1.0 / delta - 1.0) - rho * t
    return lhs - rhs


def flame_problem(delta: float, rho: float = 300.0, t1: float | None = None) -> OdeProblem:
    t1 = 2.0 / (delta * rho) if t1 is None else t1
    return OdeProblem(lambda t, y: rho * (y * y - y * y * y), 0.0, t1, [delta])


def vdp_problem(a: float, rho: float = 10.0, t1: float = 1.0) -> OdeProblem:
    """First-order van der Pol system in ``(x, y)`` with ``x(0)=1, y(0)=0``."""

    def rhs(t, s):
        x, v = s
        return np.array([rho * v, rho * (a * (1.0 - x * x) * v - x)])

    return OdeProblem(rhs, 0.0, t1, [1.0, 0.0])


# ---------------------------------------------------------------- metrics


def relative_error(y_ref, y_nn) -> np.ndarray:
    """Pointwise ``|y_ref - y_nn| / (1 + |y_ref|)`` in percent."""
    y_ref = np.asarray(y_ref, dtype=np.float64)
    y_nn = np.asarray(y_nn, dtype=np.float64)
    if y_ref.shape != y_nn.shape:
        raise ValueError(f"length mismatch: {y_ref.shape} vs {y_nn.shape}")
    return np.abs(y_ref - y_nn) / (1.0 + np.abs(y_ref)) * 100.0


def rms(re) -> float:
    re = np.asarray(re, dtype=np.float64)
    return float(np.sqrt(np.mean(re * re)))
