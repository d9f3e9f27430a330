"""Independent 1-D verification solvers.

* ``solve_linear_pde_fd`` - Crank-Nicolson (or explicit) finite differences for
  the decoupled linear desirability PDE, Neumann walls on a wide domain.
* ``hjb_residual`` - plugs ``J = -alpha log Z`` back into the coupled nonlinear
  HJB system, nonlinear term in its Kronecker form, and reports the residual.
* ``riccati_lq_reference`` / ``riccati_desirability_reference`` - closed-form
  quadratic value functions integrated with RK4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainTooNarrow, GridMismatch, InstabilityDetected
from .game_model import GameSpec, mixed_running_cost, mixed_terminal_cost


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    nx: int
    nt: int
    horizon: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        if self.nx < 3:
            raise ValueError("need nx >= 3")
        if self.nt < 1:
            raise ValueError("need nt >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dtau(self) -> float:
        return self.horizon / self.nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.nt + 1)

    def explicit_step_bound(self, sigma: float, safety: float = 0.9) -> float:
        """Largest stable explicit step ``safety * dx^2 / sigma^2``."""
        return safety * self.dx**2 / sigma**2

    def refined(self) -> "Grid1D":
        """Halve both spacings."""
        return Grid1D(self.x_min, self.x_max, 2 * (self.nx - 1) + 1, 2 * self.nt, self.horizon)

    def widened(self, factor: float) -> "Grid1D":
        """Same dx, domain half-width scaled by ``factor`` about the centre."""
        cells = self.nx - 1
        extra = int(math.ceil(cells * (factor - 1.0) / 2.0))
        h = self.dx
        return Grid1D(self.x_min - extra * h, self.x_max + extra * h, self.nx + 2 * extra, self.nt, self.horizon)


def default_grid(spec: GameSpec, nx: int = 801, nt: int = 800, half_width: float | None = None) -> Grid1D:
    """Domain centred on x0, half-width = (extent of the well centres) x 4 + 6 sigma sqrt(T)."""
    if spec.state_dim != 1:
        raise ValueError("finite-difference oracle is 1-D only")
    x0 = float(spec.initial_state[0])
    if half_width is None:
        extent = 0.0
        for c in spec.costs:
            for part in (c.running, c.terminal):
                if part.center is not None:
                    extent = max(extent, float(np.max(np.abs(part.center.c))))
        half_width = 4.0 * extent + 6.0 * abs(spec.dynamics.sigma) * math.sqrt(spec.horizon)
    return Grid1D(x0 - half_width, x0 + half_width, nx, nt, spec.horizon)


@dataclass(frozen=True)
class ZField:
    values: np.ndarray  # (nt + 1, nx), row n <-> t = n * dtau
    grid: Grid1D
    player: int

    def row(self, t: float) -> int:
        n = t / self.grid.dtau
        nr = int(round(n))
        if abs(n - nr) > 1e-7 or not 0 <= nr <= self.grid.nt:
            raise ValueError(f"time {t!r} is not a level of this field")
        return nr

    def value(self, t: float, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.grid.x, self.values[self.row(t)])

    def log_gradient(self, t: float, x) -> np.ndarray:
        """Central-difference ``d/dx log Z`` interpolated to ``x``."""
        logz = np.log(self.values[self.row(t)])
        grad = np.gradient(logz, self.grid.dx, edge_order=2)
        return np.interp(np.asarray(x, dtype=float), self.grid.x, grad)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "Z"])
            for n, t in enumerate(self.grid.t):
                for x, z in zip(self.grid.x, self.values[n]):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(z))])


def _operator_bands(v: np.ndarray, V: np.ndarray, half_s2: float, dx: float):
    """Tridiagonal ``L Z = v Z_x + (sigma^2/2) Z_xx - V Z`` with mirrored ghost nodes."""
    a = half_s2 / dx**2
    b = v / (2 * dx)
    lower = a - b
    diag = -2 * a - V
    upper = a + b
    # Neumann walls: ghost node equals its mirror, convection drops out
    upper = upper.copy()
    lower = lower.copy()
    upper[0] = 2 * a
    lower[-1] = 2 * a
    return lower, diag, upper


def _apply_bands(lower, diag, upper, z):
    out = diag * z
    out[:-1] += upper[:-1] * z[1:]
    out[1:] += lower[1:] * z[:-1]
    return out


def _solve_fd(spec: GameSpec, i: int, grid: Grid1D, scheme: str) -> np.ndarray:
    if spec.state_dim != 1 or spec.input_dim != 1:
        raise ValueError("finite-difference oracle is 1-D only")
    sigma = spec.dynamics.sigma
    x = grid.x
    dx, dtau = grid.dx, grid.dtau
    X = x[:, None]
    v = spec.dynamics.drift(X)[:, 0] + sigma * spec.nominal_controls[i][0]
    half_s2 = 0.5 * sigma**2
    if scheme == "explicit" and dtau > grid.explicit_step_bound(sigma):
        raise InstabilityDetected(
            f"explicit step {dtau:.3g} exceeds stability bound {grid.explicit_step_bound(sigma):.3g}")
    if scheme not in ("cn", "explicit"):
        raise ValueError(f"unknown scheme {scheme!r}; use 'cn' or 'explicit'")
    Z = np.empty((grid.nt + 1, grid.nx))
    Z[-1] = np.exp(-mixed_terminal_cost(spec, i, X))
    times = grid.t

    def bands(n):
        return _operator_bands(v, mixed_running_cost(spec, i, times[n], X), half_s2, dx)

    later = bands(grid.nt)
    for n in range(grid.nt - 1, -1, -1):
        lo1, d1, up1 = later
        rhs = Z[n + 1] + (0.5 if scheme == "cn" else 1.0) * dtau * _apply_bands(lo1, d1, up1, Z[n + 1])
        if scheme == "cn":
            lo0, d0, up0 = bands(n)
            ab = np.zeros((3, grid.nx))
            ab[0, 1:] = -0.5 * dtau * up0[:-1]
            ab[1] = 1.0 - 0.5 * dtau * d0
            ab[2, :-1] = -0.5 * dtau * lo0[1:]
            Z[n] = solve_banded((1, 1), ab, rhs)
            later = (lo0, d0, up0)
        else:
            Z[n] = rhs
            later = bands(n)
        if not np.all(np.isfinite(Z[n])) or np.any(Z[n] <= 0):
            raise InstabilityDetected(f"desirability lost positivity/finiteness at t={times[n]:.6g}")
    return Z


def solve_linear_pde_fd(spec: GameSpec, i: int, grid: Grid1D, *, scheme: str = "cn",
                        probe_points=None, probe_tol: float = 1e-4, probe_factor: float = 1.5) -> ZField:
    """Solve player ``i``'s linear desirability PDE backward from its terminal condition.

    When ``probe_points`` is given the solve is repeated on a domain
    ``probe_factor`` times wider (same spacing); a relative change above
    ``probe_tol`` at any probe point raises ``DomainTooNarrow``.
    """
    Z = _solve_fd(spec, i, grid, scheme)
    if probe_points is not None:
        wide = grid.widened(probe_factor)
        Zw = _solve_fd(spec, i, wide, scheme)
        pts = np.atleast_1d(np.asarray(probe_points, dtype=float))
        a = np.interp(pts, grid.x, Z[0])
        b = np.interp(pts, wide.x, Zw[0])
        rel = float(np.max(np.abs(a - b) / np.abs(b)))
        if rel > probe_tol:
            raise DomainTooNarrow(f"boundary sensitivity {rel:.3g} exceeds {probe_tol:.3g} at probe points")
    return ZField(Z, grid, i)


@dataclass(frozen=True)
class HJBResidual:
    player: int
    max_abs: float
    mean_abs: float
    scale: float

    @property
    def max_scaled(self) -> float:
        return self.max_abs / self.scale


def hjb_residual(spec: GameSpec, z_fields, interior: tuple[float, float] | None = None) -> list[HJBResidual]:
    """Residual of the coupled HJB system for ``J = -alpha log Z`` built from FD fields.

    Time derivatives are forward differences between consecutive levels and
    spatial terms are averaged over both levels (centred at the half step).
    ``interior`` restricts the norms to ``x`` in that closed interval; by
    default the middle half of the domain.  ``scale`` is
    ``max(1, max |C^i|)`` over the interior region, so ``max_scaled`` is in
    units of the running cost.
    """
    N = spec.players
    if len(z_fields) != N:
        raise GridMismatch(f"expected {N} fields, got {len(z_fields)}")
    grid = z_fields[0].grid
    for f in z_fields[1:]:
        if f.grid != grid:
            raise GridMismatch("all desirability fields must share one grid")
    if spec.state_dim != 1:
        raise ValueError("residual checker is 1-D only")
    alpha, beta = spec.interaction.alpha, spec.interaction.beta
    g = spec.dynamics.g  # 1 x 1
    m = g.shape[1]
    x = grid.x
    dx, dtau = grid.dx, grid.dtau
    logZ = np.stack([np.log(f.values) for f in z_fields])  # (N, nt+1, nx)
    J = -np.tensordot(alpha, logZ, axes=(1, 0))
    Jx = (J[..., 2:] - J[..., :-2]) / (2 * dx)
    Jxx = (J[..., 2:] - 2 * J[..., 1:-1] + J[..., :-2]) / dx**2
    xi = x[1:-1]
    Xi = xi[:, None]
    f_x = spec.dynamics.drift(Xi)[:, 0]
    # Kronecker-structured coupling: stacked gradient (N*n) -> (beta kron g^T) -> N*m controls
    kron_right = np.kron(beta, g.T)
    v = np.einsum("ab,btx->atx", kron_right, Jx)  # (N*m, nt+1, nx-2)
    times = grid.t
    lo, hi = interior if interior is not None else (
        x[0] + 0.25 * (x[-1] - x[0]), x[-1] - 0.25 * (x[-1] - x[0]))
    mask = (xi >= lo) & (xi <= hi)
    out = []
    for i in range(N):
        weights = np.kron(alpha[i], np.ones(m))  # diag(alpha_ij I_m)
        nonlinear = -0.5 * np.einsum("a,atx->tx", weights, v * v)
        cost = np.stack([spec.running_cost(i, t, Xi) for t in times])
        drift = (f_x + g[0, 0] * spec.nominal_controls[i][0])[None, :]
        rhs = cost + drift * Jx[i] + 0.5 * g[0, 0] ** 2 * Jxx[i] + nonlinear
        dJdt = (J[i, 1:, 1:-1] - J[i, :-1, 1:-1]) / dtau
        res = -dJdt - 0.5 * (rhs[1:] + rhs[:-1])
        r = np.abs(res[:, mask])
        scale = max(1.0, float(np.max(np.abs(cost[:, mask]))))
        out.append(HJBResidual(i, float(r.max()), float(r.mean()), scale))
    return out


# --------------------------------------------------------------------------
# Riccati


@dataclass(frozen=True)
class RiccatiSolution:
    """``J(t, x) = p x^2 / 2 + r x + c`` sampled on ``t``; feedback ``u = u_bar - sigma (p x + r)``."""

    t: np.ndarray
    p: np.ndarray
    r: np.ndarray
    c: np.ndarray
    sigma: float
    drift_A: float = 0.0
    drift_b: float = 0.0
    nominal: float = 0.0

    @property
    def gain(self) -> np.ndarray:
        return -self.sigma * self.p

    def _coef(self, t):
        return (np.interp(t, self.t, self.p), np.interp(t, self.t, self.r), np.interp(t, self.t, self.c))

    def value(self, t: float, x):
        p, r, c = self._coef(t)
        x = np.asarray(x, dtype=float)
        return 0.5 * p * x**2 + r * x + c

    def feedback(self, t: float, x):
        p, r, _ = self._coef(t)
        return self.nominal - self.sigma * (p * np.asarray(x, dtype=float) + r)

    def mean_path(self, x0: float, times) -> np.ndarray:
        """Closed-loop mean ``m' = A m + b + sigma u_bar - sigma^2 (p m + r)`` sampled at ``times``."""
        s2 = self.sigma**2
        b_eff = self.drift_b + self.sigma * self.nominal
        A = self.drift_A
        t = self.t
        m = np.empty_like(t)
        m[0] = x0
        for k in range(len(t) - 1):
            h = t[k + 1] - t[k]
            pm, rm = 0.5 * (self.p[k] + self.p[k + 1]), 0.5 * (self.r[k] + self.r[k + 1])

            def f(mv, p, r):
                return A * mv + b_eff - s2 * (p * mv + r)

            k1 = f(m[k], self.p[k], self.r[k])
            k2 = f(m[k] + 0.5 * h * k1, pm, rm)
            k3 = f(m[k] + 0.5 * h * k2, pm, rm)
            k4 = f(m[k] + h * k3, self.p[k + 1], self.r[k + 1])
            m[k + 1] = m[k] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return np.interp(np.asarray(times, dtype=float), t, m)


def _integrate_riccati(Q, L, c0, terminal, A: float, b: float, sigma: float, T: float, n_steps: int):
    """RK4 backward for ``-J_t = Q x^2/2 + L x + c0 + (A x + b) J_x + s2/2 J_xx - s2/2 J_x^2``."""
    s2 = sigma**2
    t = np.linspace(0.0, T, n_steps + 1)
    y = np.empty((n_steps + 1, 3))
    y[-1] = terminal

    def rhs(tt, yy):
        p, r, _ = yy
        return np.array([
            -Q(tt) - 2 * A * p + s2 * p * p,
            -L(tt) - A * r - b * p + s2 * p * r,
            -c0(tt) - b * r - 0.5 * s2 * p + 0.5 * s2 * r * r,
        ])

    for k in range(n_steps, 0, -1):
        h = t[k - 1] - t[k]  # negative: marching backward
        yk = y[k]
        k1 = rhs(t[k], yk)
        k2 = rhs(t[k] + 0.5 * h, yk + 0.5 * h * k1)
        k3 = rhs(t[k] + 0.5 * h, yk + 0.5 * h * k2)
        k4 = rhs(t[k] + h, yk + h * k3)
        y[k - 1] = yk + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return t, y


def riccati_lq_reference(q: float, q_T: float, a: float, T: float, sigma: float, *,
                         center: str = "linear", dt: float | None = None,
                         n_steps: int | None = None) -> RiccatiSolution:
    """Single-agent LQ value for ``dx = sigma (u dt + dw)`` tracking ``m(t)``.

    ``m(t) = a t / T`` (``center="linear"``) or ``m = a`` (``"constant"``); the
    sign of ``a`` picks the direction.  Step size is ``dt / 10`` when ``dt``
    is given, otherwise ``n_steps`` (default 2000).
    """
    if q < 0 or q_T < 0:
        raise ValueError("stiffnesses must be nonnegative")
    if center == "linear":
        def mfun(t):
            return a * t / T
    elif center == "constant":
        def mfun(t):
            return a
    else:
        raise ValueError(f"unknown center {center!r}")
    if n_steps is None:
        n_steps = int(math.ceil(10 * T / dt)) if dt is not None else 2000
    mT = mfun(T)
    t, y = _integrate_riccati(
        lambda s: q, lambda s: -q * mfun(s), lambda s: 0.5 * q * mfun(s) ** 2,
        np.array([q_T, -q_T * mT, 0.5 * q_T * mT**2]), 0.0, 0.0, sigma, T, n_steps)
    return RiccatiSolution(t, y[:, 0], y[:, 1], y[:, 2], sigma)


def riccati_desirability_reference(spec: GameSpec, i: int, n_steps: int | None = None) -> RiccatiSolution:
    """Exact ``-log Z_i`` for a 1-D built-in game with any interaction matrix.

    The beta-mixed quadratic costs are again quadratic in ``x``, so
    ``-log Z_i`` solves a single-agent HJB with those costs and is quadratic.
    """
    if spec.state_dim != 1 or spec.input_dim != 1:
        raise ValueError("Riccati oracle is 1-D only")
    beta = spec.interaction.beta
    T = spec.horizon
    dyn = spec.dynamics
    A = float(dyn.A[0, 0]) if dyn.drift_kind == "linear" else 0.0
    b = float(dyn.b[0]) if dyn.drift_kind in ("constant", "linear") else 0.0
    sigma = dyn.sigma
    ubar = float(spec.nominal_controls[i][0])
    run = [(beta[i, j], spec.costs[j].running) for j in range(spec.players)
           if beta[i, j] != 0 and spec.costs[j].running.kind != "zero"]
    term = [(beta[i, j], spec.costs[j].terminal) for j in range(spec.players)
            if beta[i, j] != 0 and spec.costs[j].terminal.kind != "zero"]

    def center(part, t):
        return float(part.center.at(t, T)[0])

    def Q(t):
        return sum(w * part.q for w, part in run)

    def L(t):
        return sum(-w * part.q * center(part, t) for w, part in run)

    def c0(t):
        return sum(0.5 * w * part.q * center(part, t) ** 2 for w, part in run)

    terminal = np.array([
        sum(w * part.q_T for w, part in term),
        sum(-w * part.q_T * center(part, T) for w, part in term),
        sum(0.5 * w * part.q_T * center(part, T) ** 2 for w, part in term),
    ], dtype=float)
    if n_steps is None:
        n_steps = int(math.ceil(10 * spec.n_steps))
    t, y = _integrate_riccati(Q, L, c0, terminal, A, b + sigma * ubar, sigma, T, n_steps)
    return RiccatiSolution(t, y[:, 0], y[:, 1], y[:, 2], sigma, A, b, ubar)
