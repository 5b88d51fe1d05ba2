"""Generalized Riccati system for the state-linear part of the transform.

Solves d/dt psi(t, u) = R(psi(t, u)), psi(0, u) = u, where R is the exponent
function of the nonnegative components; the unconstrained block is linear,
psi_J(t, u) = exp(beta^* t) u^*, and is taken from that closed form while
only the nonnegative block is integrated numerically (embedded adaptive
Runge-Kutta 5(4)).  The discounted variant replaces R by R + lambda, which
adds an inhomogeneity exp-integral to the closed block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .params import (
    DEFAULT_CHI,
    TruncationFunction,
    XAdmissibleParams,
    as_domain_point,
    eval_R,
)


class RiccatiBlowUpError(RuntimeError):
    """The solution norm crossed the blow-up ceiling before the horizon."""

    def __init__(self, t_lo: float, t_hi: float, ceiling: float):
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.ceiling = ceiling
        super().__init__(
            f"Riccati solution exceeds {ceiling:.3g} inside t in "
            f"[{t_lo:.6g}, {t_hi:.6g}]; finite lifetime before the horizon")


@dataclass(frozen=True)
class DiscountSpec:
    """Affine discount rate L(y) = l + <lam, y>."""

    l: float
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1).copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        if not np.all(np.isfinite(lam)) or not np.isfinite(self.l):
            raise ValueError("discount coefficients must be finite")


def _closed_block(beta_star: np.ndarray, u_star: np.ndarray,
                  lam_j: np.ndarray, t):
    """psi_J(t) = e^{B t} u^* + (int_0^t e^{B s} ds) lam_J, vectorized in t."""
    t = np.asarray(t, dtype=float)
    nj = u_star.size
    if nj == 0:
        return np.zeros(t.shape + (0,), dtype=complex)
    if nj == 1:
        bb = complex(beta_star[0, 0])
        if bb == 0:
            out = u_star[0] + lam_j[0] * t
        else:
            ebt = np.exp(bb * t)
            out = ebt * u_star[0] + lam_j[0] * (ebt - 1.0) / bb
        return np.asarray(out, dtype=complex)[..., None]
    flat = np.atleast_1d(t).ravel()
    out = np.empty((flat.size, nj), dtype=complex)
    aug = np.zeros((nj + 1, nj + 1))
    aug[:nj, :nj] = beta_star
    aug[:nj, nj] = lam_j
    for k, tk in enumerate(flat):
        e = expm(aug * tk)
        out[k] = e[:nj, :nj] @ u_star + e[:nj, nj]
    return out.reshape(t.shape + (nj,))


@dataclass(frozen=True)
class RiccatiPath:
    """Trajectory t -> psi(t, u0) with dense output.

    Nodes are the accepted steps of the adaptive integrator; between nodes
    the nonnegative block is interpolated by cubic Hermite polynomials from
    the stored values and derivatives, while the unconstrained block is
    always evaluated from its closed form (exact).
    """

    u0: np.ndarray                # (n,) complex
    m: int
    times: np.ndarray             # (K+1,)
    values: np.ndarray            # (K+1, n) complex at the nodes
    derivs: np.ndarray            # (K+1, n) complex, R(psi) at the nodes
    beta_star: np.ndarray         # (n-m, n-m)
    lam: np.ndarray               # (n,) discount shift (zero if plain)

    @property
    def n(self) -> int:
        return self.u0.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def psi(self, t) -> np.ndarray:
        """Dense evaluation; accepts a scalar or an array of times."""
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tq = np.atleast_1d(t_arr)
        if tq.size and (tq.min() < -1e-12 or tq.max() > self.horizon + 1e-12):
            raise ValueError(
                f"time {tq.min()}..{tq.max()} outside [0, {self.horizon}]")
        tq = np.clip(tq, 0.0, self.horizon)
        out = np.empty((tq.size, self.n), dtype=complex)
        mm = self.m
        if mm > 0:
            ts = self.times
            idx = np.clip(np.searchsorted(ts, tq, side="right") - 1, 0, len(ts) - 2)
            t0 = ts[idx]
            h = ts[idx + 1] - t0
            s = np.where(h > 0, (tq - t0) / np.where(h > 0, h, 1.0), 0.0)[:, None]
            y0 = self.values[idx, :mm]
            y1 = self.values[idx + 1, :mm]
            d0 = self.derivs[idx, :mm]
            d1 = self.derivs[idx + 1, :mm]
            s2, s3 = s * s, s * s * s
            h00 = 2 * s3 - 3 * s2 + 1
            h10 = s3 - 2 * s2 + s
            h01 = -2 * s3 + 3 * s2
            h11 = s3 - s2
            hh = h[:, None]
            out[:, :mm] = h00 * y0 + h10 * hh * d0 + h01 * y1 + h11 * hh * d1
        if mm < self.n:
            out[:, mm:] = _closed_block(self.beta_star, self.u0[mm:],
                                        self.lam[mm:], tq)
        return out[0] if scalar else out

    def u_invariance_violation(self) -> float:
        """Largest positive real part on the nonnegative block plus the
        largest absolute real part of the closed block, over the stored
        nodes.  Near zero iff psi stays inside the admissible domain."""
        v_i = float(np.max(self.values[:, : self.m].real, initial=0.0))
        v_j = float(np.max(np.abs(self.values[:, self.m:].real), initial=0.0))
        return max(v_i, 0.0) + v_j


def _solve(p: XAdmissibleParams, u0, lam: np.ndarray, T: float,
           tol: Tuple[float, float], chi: TruncationFunction,
           ceiling: float, max_step: Optional[float]) -> RiccatiPath:
    pt = as_domain_point(u0, p.m)
    u = pt.u.astype(complex)
    m, n = p.m, p.n
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    beta_star = p.beta_star

    if T == 0 or m == 0:
        times = np.array([0.0]) if T == 0 else np.linspace(0.0, T, 33)
        values = np.empty((times.size, n), dtype=complex)
        values[:, :m] = u[:m]
        if m < n:
            values[:, m:] = _closed_block(beta_star, u[m:], lam[m:], times)
        values[0] = u
        derivs = np.array([eval_R(p, v, chi) + lam for v in values])
        return RiccatiPath(u, m, times, values, derivs, beta_star, lam)

    lam_i = lam[:m].astype(complex)

    def rhs(t, psi_i):
        full = np.concatenate([psi_i, _closed_block(beta_star, u[m:], lam[m:],
                                                    float(t))])
        return eval_R(p, full, chi)[:m] + lam_i

    def blow_up(t, psi_i):
        return float(np.max(np.abs(psi_i))) - ceiling

    blow_up.terminal = True
    blow_up.direction = 1

    atol, rtol = tol
    if max_step is None:
        max_step = min(0.005, T / 8.0) if T > 0 else np.inf
    sol = solve_ivp(rhs, (0.0, T), u[:m], method="RK45", rtol=rtol, atol=atol,
                    max_step=max_step, events=blow_up, dense_output=False)
    if sol.status == 1:
        t_event = float(sol.t_events[0][0])
        t_prev = float(sol.t[-2]) if sol.t.size > 1 else 0.0
        raise RiccatiBlowUpError(t_prev, t_event, ceiling)
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")

    times = sol.t
    values = np.empty((times.size, n), dtype=complex)
    values[:, :m] = sol.y.T
    if m < n:
        values[:, m:] = _closed_block(beta_star, u[m:], lam[m:], times)
    values[0] = u  # initial condition is exact by construction
    derivs = np.array([eval_R(p, v, chi) + lam for v in values])
    return RiccatiPath(u, m, times, values, derivs, beta_star, lam)


def solve_riccati(p: XAdmissibleParams, u0, T: float,
                  tol: Tuple[float, float] = (1e-12, 1e-10),
                  chi: TruncationFunction = DEFAULT_CHI,
                  ceiling: float = 1e8,
                  max_step: Optional[float] = None) -> RiccatiPath:
    """Integrate d psi/dt = R(psi), psi(0) = u0, up to the horizon T.

    ``tol`` is (absolute, relative) local error per step.  A solution whose
    nonnegative-block norm crosses ``ceiling`` raises
    :class:`RiccatiBlowUpError` with the bracketing times, distinguishing
    genuine finite-time explosion from the horizon being reached.
    """
    lam = np.zeros(p.n)
    return _solve(p, u0, lam, T, tol, chi, ceiling, max_step)


def solve_riccati_extended(p: XAdmissibleParams, u0, d: DiscountSpec, T: float,
                           tol: Tuple[float, float] = (1e-12, 1e-10),
                           chi: TruncationFunction = DEFAULT_CHI,
                           ceiling: float = 1e8,
                           max_step: Optional[float] = None) -> RiccatiPath:
    """Discounted variant: R replaced by R + lambda.

    The constant part ``d.l`` of the discount is *not* absorbed here; it
    shifts the level exponent in the Cauchy step instead.
    """
    lam = np.asarray(d.lam, dtype=float).reshape(-1)
    if lam.size != p.n:
        raise ValueError(f"lambda has size {lam.size}, expected {p.n}")
    return _solve(p, u0, lam, T, tol, chi, ceiling, max_step)
