"""Linearised swing dynamics and closed-form system-frequency models.

Units: frequency deviations in Hz, time in s, power in p.u. The swing equation
``M w' = -D w + u - L psi`` (``psi' = w``) is used literally in these units.
Node indices are 0-based.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .grid_model import ReducedNetwork


class ModelError(ValueError):
    """Invalid system-frequency model parameters."""


@dataclass(frozen=True)
class StateMatrix:
    """``A`` of ``x' = A x`` with ``x = [w'; w]``, plus a cache of ``exp(tA)``."""

    A: np.ndarray
    net: ReducedNetwork
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.net.n

    def expm(self, t: float) -> np.ndarray:
        key = float(t)
        out = self._cache.get(key)
        if out is None:
            out = matrix_exponential(self.A, key)
            out.setflags(write=False)
            self._cache[key] = out
        return out

    def rocof_rows(self, t: float) -> np.ndarray:
        """n x n matrix whose row j maps u to ``w'_j(t)``."""
        n = self.n
        return self.expm(t)[:n, :n] / self.net.M[None, :]


def build_state_matrix(net: ReducedNetwork) -> StateMatrix:
    n = net.n
    Minv = 1.0 / net.M
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = np.diag(-Minv * net.D)
    A[:n, n:] = -Minv[:, None] * net.L
    A[n:, :n] = np.eye(n)
    return StateMatrix(A=A, net=net)


def matrix_exponential(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(tA)`` by Pade scaling and squaring."""
    A = np.asarray(A, dtype=float)
    if t < 0:
        raise ValueError("t must be non-negative")
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("non-finite entries in A")
    if t == 0:
        return np.eye(A.shape[0])
    return expm(t * A)


def rocof_functional(sm: StateMatrix, j: int, t: float) -> np.ndarray:
    """Vector ``a`` with ``w'_j(t) = a @ u``."""
    if not 0 <= j < sm.n:
        raise IndexError(f"node {j} out of range for n={sm.n}")
    if t < 0:
        raise ValueError("t must be non-negative")
    return sm.rocof_rows(t)[j].copy()


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    omega: np.ndarray  # (T, n) Hz
    omega_dot: np.ndarray  # (T, n) Hz/s
    system: np.ndarray  # centre-of-inertia frequency, (T,)
    system_dot: np.ndarray

    def write_csv(self, path: str | Path, labels: Sequence[str] | None = None) -> None:
        n = self.omega.shape[1]
        labels = list(labels) if labels is not None else [str(j + 1) for j in range(n)]
        header = (["t", "omega_bar", "omega_bar_dot"] + [f"omega_{l}" for l in labels]
                  + [f"omega_dot_{l}" for l in labels])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [t, self.system[k], self.system_dot[k], *self.omega[k], *self.omega_dot[k]]
                w.writerow([f"{v:.6g}" for v in row])


def _check_u(net: ReducedNetwork, u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (net.n,):
        raise ValueError(f"disturbance has dimension {u.size}, network has {net.n} nodes")
    return u


def _with_system(net, times, omega, omega_dot) -> Trajectory:
    Mtot = net.M.sum()
    return Trajectory(times, omega, omega_dot, omega @ net.M / Mtot, omega_dot @ net.M / Mtot)


def simulate_nodal_trajectory(net: ReducedNetwork, u, times, sm: StateMatrix | None = None
                              ) -> Trajectory:
    u = _check_u(net, u)
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be ascending and non-negative")
    sm = sm or build_state_matrix(net)
    n = net.n
    x0 = np.concatenate([u / net.M, np.zeros(n)])
    X = np.array([sm.expm(t) @ x0 for t in times]).reshape(len(times), 2 * n)
    return _with_system(net, times, X[:, n:], X[:, :n])


def integrate_swing_ode(net: ReducedNetwork, u, times, step: float = 1e-3) -> Trajectory:
    """Fixed-step RK4 on ``M w' = -D w + u - L psi``, ``psi' = w``.

    Independent of the matrix-exponential path; used as a cross-check.
    """
    u = _check_u(net, u)
    times = np.asarray(times, dtype=float)
    n = net.n
    Minv = 1.0 / net.M

    def f(y):
        w, psi = y[:n], y[n:]
        return np.concatenate([Minv * (u - net.D * w - net.L @ psi), w])

    y = np.zeros(2 * n)
    t = 0.0
    omega = np.empty((len(times), n))
    omega_dot = np.empty((len(times), n))
    for k, target in enumerate(times):
        span = target - t
        if span > 0:
            m = max(1, math.ceil(span / step - 1e-9))
            h = span / m
            for _ in range(m):
                k1 = f(y)
                k2 = f(y + 0.5 * h * k1)
                k3 = f(y + 0.5 * h * k2)
                k4 = f(y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = target
        omega[k] = y[:n]
        omega_dot[k] = f(y)[:n]
    return _with_system(net, times, omega, omega_dot)


# --- system (centre-of-inertia) frequency -----------------------------------

@dataclass(frozen=True)
class SystemFreqParams:
    """Uniform-ratio machine set: ``M_i = f_i M``, ``D_i = f_i D`` (and ``1/R_i = f_i/R``)."""

    model: Literal["second-order", "third-order"]
    M: float
    D: float
    ratings: tuple[float, ...]
    R: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if self.model not in ("second-order", "third-order"):
            raise ModelError(f"unknown model {self.model!r}")
        f = np.asarray(self.ratings, dtype=float)
        if f.size == 0 or np.any(f <= 0) or np.any(f > 1) or not math.isclose(f.max(), 1.0):
            raise ModelError("ratings must lie in (0, 1] with maximum 1")
        if self.M <= 0 or self.D <= 0:
            raise ModelError("M and D must be positive")
        if self.model == "third-order":
            if self.R is None or self.tau is None or self.R <= 0 or self.tau <= 0:
                raise ModelError("third-order model needs positive R and tau")
            if self.omega_d_sq <= 0:
                raise ModelError("third-order model requires under-damping (omega_d^2 > 0)")

    @property
    def total_rating(self) -> float:
        return float(np.sum(self.ratings))

    @property
    def eta(self) -> float:
        return 0.5 * (1.0 / self.tau + self.D / self.M)

    @property
    def gamma(self) -> float:
        return 1.0 / self.tau - 1.0 / (self.R * self.M)

    @property
    def omega_d_sq(self) -> float:
        return (self.D + 1.0 / self.R) / (self.M * self.tau) - 0.25 * (1.0 / self.tau + self.D / self.M) ** 2

    @property
    def omega_d(self) -> float:
        return math.sqrt(self.omega_d_sq)

    @property
    def _stiffness(self) -> float:
        return self.D + 1.0 / self.R

    @property
    def _sin_coeff(self) -> float:
        # chosen so that g'(0) = 1 / sum(M_i), matching the ODE initial slope
        return (self.eta - self._stiffness / self.M) / self.omega_d

    @classmethod
    def from_network(cls, net: ReducedNetwork, model="second-order", R=None, tau=None,
                     rtol: float = 1e-9) -> "SystemFreqParams":
        f = net.M / net.M.max()
        j = int(np.argmax(net.M))
        if not np.allclose(net.D, f * net.D[j], rtol=rtol, atol=0):
            raise ModelError("network damping is not proportional to inertia")
        return cls(model=model, M=float(net.M[j]), D=float(net.D[j]), ratings=tuple(f), R=R, tau=tau)


def system_freq_g(params: SystemFreqParams, t):
    """``g`` such that the COI frequency is ``g(t) * sum(u)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    p = params
    if p.model == "second-order":
        return -np.expm1(-(p.D / p.M) * t) / (p.D * p.total_rating)
    wd = p.omega_d
    osc = np.exp(-p.eta * t) * (np.cos(wd * t) + p._sin_coeff * np.sin(wd * t))
    return (1.0 - osc) / (p.total_rating * p._stiffness)


def printed_third_order_g(params: SystemFreqParams, t):
    """Third-order ``g`` in the literature form with ``gamma``.

    Kept for comparison only: it disagrees with direct integration of the
    turbine-governor ODE (sign of the sine term and an extra ``D + 1/R``
    factor in the denominator). :func:`system_freq_g` is the ODE-consistent form.
    """
    p = params
    if p.model != "third-order":
        raise ModelError("printed form exists only for the third-order model")
    t = np.asarray(t, dtype=float)
    wd = p.omega_d
    osc = np.exp(-p.eta * t) * (np.cos(wd * t) - (p.gamma - p.eta) / wd * np.sin(wd * t))
    denom = (p.total_rating * p._stiffness) * p._stiffness
    return (1.0 - osc) / denom


def system_freq_gdot(params: SystemFreqParams, t):
    t = np.asarray(t, dtype=float)
    p = params
    if p.model == "second-order":
        k = p.D / p.M
        return k * np.exp(-k * t) / (p.D * p.total_rating)
    wd, eta, c = p.omega_d, p.eta, p._sin_coeff
    amp = 1.0 / (p.total_rating * p._stiffness)
    return amp * np.exp(-eta * t) * ((eta - c * wd) * np.cos(wd * t) + (eta * c + wd) * np.sin(wd * t))


def system_freq_gdot0(params: SystemFreqParams) -> float:
    """Initial (and maximal) slope ``|g'(0)|``."""
    return float(abs(system_freq_gdot(params, 0.0)))


def _gdot_zeros(params: SystemFreqParams, eps: float) -> list[float]:
    if params.model == "second-order":
        return []
    wd, eta, c = params.omega_d, params.eta, params._sin_coeff
    # g' ~ a cos(wd t) + b sin(wd t) = rho cos(wd t - phase)
    phase = math.atan2(eta * c + wd, eta - c * wd)
    zeros = []
    k = math.ceil((-phase - math.pi / 2) / math.pi)
    while True:
        t = (phase + math.pi / 2 + k * math.pi) / wd
        if t >= eps:
            break
        if t > 0:
            zeros.append(t)
        k += 1
    return zeros


def average_rocof_coefficient(params: SystemFreqParams, eps: float) -> float:
    """``integral_0^eps |g'(t)| dt``, split at the analytic turning points of ``g``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    knots = [0.0, *_gdot_zeros(params, eps), eps]
    g = system_freq_g(params, np.array(knots))
    return float(np.sum(np.abs(np.diff(g))))


def simulate_third_order_reference(net: ReducedNetwork, R: float | None, tau: float | None,
                                   u, times, rtol: float = 1e-10, atol: float = 1e-12
                                   ) -> np.ndarray:
    """COI frequency from direct integration of swing + first-order turbine dynamics.

    Per-node droop ``1/R_j = f_j / R`` with ``f_j = M_j / max M``. ``R=None``
    drops the turbine (second-order swing).
    """
    u = _check_u(net, u)
    times = np.asarray(times, dtype=float)
    n = net.n
    f = net.M / net.M.max()
    Rinv = np.zeros(n) if R is None else f / R
    tau = 1.0 if tau is None else tau
    Minv = 1.0 / net.M

    def rhs(_t, y):
        w, psi, q = y[:n], y[n:2 * n], y[2 * n:]
        dw = Minv * (u + q - net.D * w - net.L @ psi)
        dq = -(Rinv * w + q) / tau
        return np.concatenate([dw, w, dq])

    if times.size == 0:
        return np.empty(0)
    sol = solve_ivp(rhs, (0.0, float(times[-1])), np.zeros(3 * n), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise FloatingPointError(f"integration failed: {sol.message}")
    return net.M @ sol.y[:n] / net.M.sum()
