"""Evolution problem for the modulator-dependent transform factor.

The factor phi(t, x; u) multiplying exp(<psi(t, u), y>) in the transform
solves

    d/dt phi = (generator of X) phi + phi * F(x, psi(t, u)),   phi(0, .) = 1,

which is a linear ODE system for chain modulators and a 1-D parabolic PDE
for diffusion modulators.  A Feynman-Kac Monte Carlo estimator of

    phi(t, x; u) = E_x[ exp( integral_0^t F(X_s, psi(t - s, u)) ds ) ]

is provided for both kinds and serves as the stochastic cross-check of the
deterministic solvers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .modulator import (
    Diffusion1DModulator,
    FiniteChainModulator,
    generator_matrix,
    simulate_modulator,
)
from .params import DEFAULT_CHI, TruncationFunction, XAdmissibleParams, eval_F, eval_F_many
from .riccati import RiccatiPath


@dataclass(frozen=True)
class CauchySolution:
    """The field (t, x) -> phi(t, x; u0) on a time-by-state grid."""

    u0: np.ndarray
    riccati: RiccatiPath
    times: np.ndarray            # (nt,)
    states: np.ndarray           # (nx,) chain states or mesh nodes
    values: np.ndarray           # (nt, nx) complex
    method: str                  # "ode" | "pde" | "feynman-kac"
    error_estimate: float
    stderr: Optional[np.ndarray] = None   # (nt, nx) for MC estimates
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, t: float, x: float) -> complex:
        """Bilinear interpolation on the stored grid."""
        vals_t = self._interp_time(t)
        if self.states.size == 1:
            return complex(vals_t[0])
        ix = np.clip(np.searchsorted(self.states, x) - 1, 0, self.states.size - 2)
        x0, x1 = self.states[ix], self.states[ix + 1]
        w = 0.0 if x1 == x0 else (x - x0) / (x1 - x0)
        return complex((1 - w) * vals_t[ix] + w * vals_t[ix + 1])

    def _interp_time(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        k = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def final(self) -> np.ndarray:
        return self.values[-1]


def _check_horizon(rp: RiccatiPath, T: float):
    if rp.horizon < T - 1e-12:
        raise ValueError(
            f"Riccati path covers [0, {rp.horizon}], requested horizon {T}")


# --------------------------------------------------------------------------
# chain modulators: linear ODE system
# --------------------------------------------------------------------------

def solve_cauchy_chain(p: XAdmissibleParams, mod: FiniteChainModulator,
                       rp: RiccatiPath, T: float,
                       tol=(1e-12, 1e-10),
                       init: Optional[np.ndarray] = None,
                       l_shift: float = 0.0,
                       chi: TruncationFunction = DEFAULT_CHI,
                       n_store: int = 65) -> CauchySolution:
    """Integrate d phi/dt = Q phi + diag(F(x_i, psi(t))) phi, phi(0) = init.

    ``l_shift`` adds a constant to the reaction (the constant part of an
    affine discount).  Uses the same embedded adaptive Runge-Kutta scheme as
    the Riccati solver, with F evaluated along the dense output of ``rp``.
    """
    _check_horizon(rp, T)
    q = mod.q_matrix
    d = mod.d
    phi0 = np.ones(d, dtype=complex) if init is None else np.asarray(init, dtype=complex)
    if phi0.size != d:
        raise ValueError("init must have one entry per chain state")

    def f_vec(t):
        psi = rp.psi(t)
        return np.array([eval_F(p, float(x), psi, chi) for x in mod.states]) + l_shift

    def rhs(t, phi):
        return q @ phi + f_vec(t) * phi

    atol, rtol = tol
    t_store = np.linspace(0.0, T, n_store) if T > 0 else np.array([0.0])
    if T == 0:
        values = phi0[None, :].copy()
        return CauchySolution(rp.u0, rp, t_store, mod.states.copy(), values,
                              "ode", 0.0)
    sol = solve_ivp(rhs, (0.0, T), phi0, method="RK45", rtol=rtol, atol=atol,
                    t_eval=t_store, max_step=min(0.01, T / 8.0))
    if not sol.success:
        raise RuntimeError(f"chain evolution failed: {sol.message}")
    values = sol.y.T.copy()
    values[0] = phi0
    err = float(atol + rtol * np.abs(values[-1]).max())
    return CauchySolution(rp.u0, rp, t_store, mod.states.copy(), values,
                          "ode", err)


# --------------------------------------------------------------------------
# diffusion modulators: Crank-Nicolson with Rannacher startup
# --------------------------------------------------------------------------

def _truncated_domain(mod: Diffusion1DModulator, T: float, x_center: float):
    if mod.bounded:
        return mod.x_lo, mod.x_hi, None
    probe = x_center + np.linspace(-1.0, 1.0, 9)
    d_hat = float(np.max(0.5 * np.asarray(mod.diffusion(probe)) ** 2))
    v_hat = float(np.max(np.abs(np.asarray(mod.drift(probe)))))
    L = 8.0 * np.sqrt(max(2.0 * d_hat * T, 1e-12)) + v_hat * T + 1.0
    lo = x_center - L if not np.isfinite(mod.x_lo) else mod.x_lo
    hi = x_center + L if not np.isfinite(mod.x_hi) else mod.x_hi
    return lo, hi, L


def _tridiag_banded(mat: np.ndarray) -> np.ndarray:
    """Pack a tridiagonal matrix into solve_banded's (3, N) layout."""
    N = mat.shape[0]
    ab = np.zeros((3, N), dtype=mat.dtype)
    ab[0, 1:] = np.diag(mat, 1)
    ab[1, :] = np.diag(mat)
    ab[2, :-1] = np.diag(mat, -1)
    return ab


def solve_cauchy_pde(p: XAdmissibleParams, mod: Diffusion1DModulator,
                     rp: RiccatiPath, T: float,
                     grid=(201, 256),
                     init=None,
                     l_shift: float = 0.0,
                     chi: TruncationFunction = DEFAULT_CHI,
                     x_center: float = 0.0,
                     n_store: int = 33) -> CauchySolution:
    """Crank-Nicolson on a uniform mesh, reaction at the half-step time.

    The spatial operator comes from the same discretization as
    :func:`modaffine.modulator.generator_matrix`: no artificial condition at
    degenerate endpoints (one-sided transport rows) and a reflecting closure
    at truncated far-field endpoints.  The first two steps are replaced by
    four half-steps of implicit Euler to damp the nonsmooth reaction onset.
    Linear systems are complex tridiagonal, solved by banded elimination.
    """
    _check_horizon(rp, T)
    nx, nt = grid
    if nx < 8:
        raise ValueError("mesh too coarse: need nx >= 8")
    if T > 0 and nt < 4:
        raise ValueError("need nt >= 4 (Rannacher startup covers two steps)")
    lo, hi, L = _truncated_domain(mod, T, x_center)
    xs = np.linspace(lo, hi, nx)
    A = generator_matrix(mod, xs)
    dt = T / nt if nt > 0 else 0.0

    diagnostics = []
    d_coef = 0.5 * np.asarray(mod.diffusion(xs), dtype=float) ** 2
    v_coef = np.asarray(mod.drift(xs), dtype=float)
    h = xs[1] - xs[0]
    pe = np.abs(v_coef[1:-1]) * h / (2.0 * np.maximum(d_coef[1:-1], 1e-300))
    n_upwind = int(np.sum((pe > 1.0) & (d_coef[1:-1] > 0)))
    if n_upwind > nx // 4:
        diagnostics.append(
            f"mesh too coarse for centered transport at {n_upwind}/{nx} nodes "
            f"(cell Peclet > 1); accuracy degrades to first order there")

    if init is None:
        phi = np.ones(nx, dtype=complex)
    elif callable(init):
        phi = np.asarray(init(xs), dtype=complex)
    else:
        phi = np.asarray(init, dtype=complex).copy()

    store_every = max(1, nt // max(1, n_store - 1))
    t_list = [0.0]
    v_list = [phi.copy()]

    def f_row(tau):
        return eval_F_many(p, xs, rp.psi(tau), chi) + l_shift

    f_max = 0.0
    eye_b = np.zeros((3, nx), dtype=complex)
    eye_b[1, :] = 1.0
    A_b = _tridiag_banded(A.astype(complex))

    if T > 0:
        # Rannacher startup: 4 implicit-Euler half-steps over the first 2 dt
        sub = dt / 2.0
        t = 0.0
        for _ in range(4):
            fr = f_row(t + sub)
            f_max = max(f_max, float(np.abs(fr).max()))
            lhs = eye_b - sub * A_b
            lhs[1, :] -= sub * fr
            phi = solve_banded((1, 1), lhs, phi)
            t += sub
            if np.isclose(t / dt, round(t / dt)):
                k = int(round(t / dt))
                if k % store_every == 0 or k == nt:
                    t_list.append(t)
                    v_list.append(phi.copy())
        # Crank-Nicolson for the remaining steps
        for k in range(2, nt):
            t0 = k * dt
            fr = f_row(t0 + dt / 2.0)
            f_max = max(f_max, float(np.abs(fr).max()))
            lhs = eye_b - (dt / 2.0) * A_b
            lhs[1, :] -= (dt / 2.0) * fr
            rhs_mat = eye_b + (dt / 2.0) * A_b
            rhs_mat[1, :] += (dt / 2.0) * fr
            rhs = (rhs_mat[1, :] * phi)
            rhs[:-1] += rhs_mat[0, 1:] * phi[1:]
            rhs[1:] += rhs_mat[2, :-1] * phi[:-1]
            phi = solve_banded((1, 1), lhs, rhs)
            if (k + 1) % store_every == 0 or k + 1 == nt:
                t_list.append(t0 + dt)
                v_list.append(phi.copy())

    if dt > 0 and f_max * dt > 0.8:
        diagnostics.append(
            f"time step dt={dt:.3g} is coarse for the reaction scale "
            f"max|F|={f_max:.3g}; halve nt")
    for msg in diagnostics:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    values = np.array(v_list)
    err = (T / max(nt, 1)) ** 2 + h ** 2
    meta = {"nx": nx, "nt": nt, "domain": (lo, hi), "diagnostics": diagnostics}
    if L is not None:
        meta["truncation_halfwidth"] = L
    return CauchySolution(rp.u0, rp, np.array(t_list), xs, values, "pde",
                          float(err), metadata=meta)


# --------------------------------------------------------------------------
# Feynman-Kac Monte Carlo estimator
# --------------------------------------------------------------------------

def solve_cauchy_feynman_kac(p: XAdmissibleParams, mod, rp: RiccatiPath,
                             T: float, n_paths: int, dt: float,
                             rng: np.random.Generator,
                             x0: float = 0.0,
                             l_shift: float = 0.0,
                             chi: TruncationFunction = DEFAULT_CHI,
                             chunk: int = 8192) -> CauchySolution:
    """Estimate phi(T, x0; u) by trapezoidal integration of
    F(X_s, psi(T - s)) along simulated modulator paths.

    Returns a point estimate (single-state grid) with its standard error.
    """
    _check_horizon(rp, T)
    if n_paths < 1:
        raise ValueError("need n_paths >= 1")
    K = max(1, int(np.ceil(T / dt - 1e-9)))
    times = np.linspace(0.0, T, K + 1)
    psi_rev = rp.psi(T - times)        # (K+1, n)

    is_chain = isinstance(mod, FiniteChainModulator)
    if is_chain:
        f_table = np.empty((mod.d, K + 1), dtype=complex)
        for i, x in enumerate(mod.states):
            f_table[i] = np.array([eval_F(p, float(x), psi_rev[k], chi)
                                   for k in range(K + 1)])
        f_table += l_shift
        sort_order = np.argsort(mod.states)
        sorted_states = mod.states[sort_order]

    total = 0.0 + 0.0j
    total2 = 0.0
    done = 0
    w = np.full(K + 1, times[1] - times[0] if K else 0.0)
    w[0] *= 0.5
    w[-1] *= 0.5
    while done < n_paths:
        nb = min(chunk, n_paths - done)
        _, xs = simulate_modulator(mod, x0, T, dt, rng, n_paths=nb)
        if is_chain:
            # chain path values are exact copies of the state labels
            pos = np.clip(np.searchsorted(sorted_states, xs), 0, mod.d - 1)
            idx = sort_order[pos]
            f_vals = f_table[idx, np.arange(K + 1)[None, :]]
        else:
            f_vals = np.empty((nb, K + 1), dtype=complex)
            for k in range(K + 1):
                f_vals[:, k] = eval_F_many(p, xs[:, k], psi_rev[k], chi) + l_shift
        samples = np.exp(f_vals @ w)
        total += samples.sum()
        total2 += float(np.sum(np.abs(samples) ** 2))
        done += nb
        del xs, f_vals, samples

    mean = total / n_paths
    var = max(total2 / n_paths - np.abs(mean) ** 2, 0.0)
    se = float(np.sqrt(var / n_paths))
    values = np.array([[1.0 + 0.0j], [mean]])
    stderr = np.array([[0.0], [se]])
    return CauchySolution(rp.u0, rp, np.array([0.0, T]), np.array([x0]),
                          values, "feynman-kac", se, stderr=stderr,
                          metadata={"n_paths": n_paths, "dt": dt})
