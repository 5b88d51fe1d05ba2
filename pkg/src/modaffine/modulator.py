"""Modulating Feller processes: finite-state chains and 1-D diffusions.

Only these two families are built in; every worked application uses one of
them, and restricting the diffusion case to one dimension keeps the
evolution solver for the modulator-dependent transform factor a 1-D
parabolic problem.  Chain state labels carry numeric values so a single
coefficient definition (callable in x) serves both kinds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np


@dataclass(frozen=True)
class FiniteChainModulator:
    """Conservative continuous-time Markov chain on numeric state labels."""

    states: np.ndarray      # (d,) numeric values embedded in the labels
    q_matrix: np.ndarray    # (d, d) generator

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float).reshape(-1).copy()
        q = np.asarray(self.q_matrix, dtype=float).copy()
        d = states.size
        if q.shape != (d, d):
            raise ValueError(f"Q must be {d}x{d}, got {q.shape}")
        off = q.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0):
            raise ValueError("off-diagonal generator entries must be >= 0")
        if not np.allclose(q.sum(axis=1), 0.0, atol=1e-10 * max(1.0, np.abs(q).max())):
            raise ValueError("generator rows must sum to zero (conservative)")
        states.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "q_matrix", q)

    @property
    def d(self) -> int:
        return self.states.size

    def state_index(self, x: float) -> int:
        i = int(np.argmin(np.abs(self.states - x)))
        if abs(self.states[i] - x) > 1e-9 * max(1.0, abs(x)):
            raise ValueError(f"{x} is not a chain state of {self.states}")
        return i


@dataclass(frozen=True)
class Diffusion1DModulator:
    """dX = drift(X) dt + diffusion(X) dW on [x_lo, x_hi].

    ``boundary`` describes each endpoint: "unattainable" endpoints get the
    degenerate (transport-only) discretization, "clamp" endpoints are
    artificial truncations handled with a reflecting far-field closure and
    path clamping.
    """

    x_lo: float
    x_hi: float
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    boundary: Tuple[str, str] = ("clamp", "clamp")

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValueError("need x_lo < x_hi")
        for side in self.boundary:
            if side not in ("clamp", "unattainable"):
                raise ValueError(f"unknown boundary descriptor {side!r}")

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.x_lo) and np.isfinite(self.x_hi)


Modulator = object  # FiniteChainModulator | Diffusion1DModulator


def make_jacobi(kappa: float, theta: float, sigma: float) -> Diffusion1DModulator:
    """Mean-reverting diffusion on [0, 1]: drift -kappa (x - theta),
    diffusion sigma sqrt(x (1 - x))."""
    if kappa < 0 or sigma < 0:
        raise ValueError("kappa and sigma must be nonnegative")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")

    def drift(x):
        return -kappa * (np.asarray(x, dtype=float) - theta)

    def diffusion(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return sigma * np.sqrt(x * (1.0 - x))

    return Diffusion1DModulator(0.0, 1.0, drift, diffusion,
                                boundary=("unattainable", "unattainable"))


def make_brownian(sigma: float = np.sqrt(2.0),
                  x_lo: float = -np.inf, x_hi: float = np.inf) -> Diffusion1DModulator:
    """Driftless diffusion with constant coefficient (generator
    (sigma^2/2) d^2/dx^2; the default sigma gives the plain Laplacian)."""

    def drift(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def diffusion(x):
        return np.full_like(np.asarray(x, dtype=float), sigma)

    return Diffusion1DModulator(x_lo, x_hi, drift, diffusion)


# --------------------------------------------------------------------------
# generator action
# --------------------------------------------------------------------------

def generator_matrix(mod, grid: np.ndarray = None) -> np.ndarray:
    """Matrix representation of the generator.

    Chains return Q.  Diffusions return the finite-difference matrix on the
    supplied uniform grid: central second-order stencils in the interior
    with an upwind fallback where the cell Peclet number would break row
    positivity, one-sided first-derivative rows at endpoints where the
    diffusion coefficient vanishes, and a reflecting closure at artificial
    (clamp) endpoints.  Rows sum to zero, so the matrix doubles as the
    generator of an approximating chain on the grid.
    """
    if isinstance(mod, FiniteChainModulator):
        return mod.q_matrix
    if not isinstance(mod, Diffusion1DModulator):
        raise TypeError(f"unsupported modulator {type(mod).__name__}")
    if grid is None:
        raise ValueError("diffusion generator needs a 1-D grid with >= 3 nodes")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("diffusion generator needs a 1-D grid with >= 3 nodes")
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=1e-8):
        raise ValueError("grid must be uniform")
    N = grid.size
    v = np.asarray(mod.drift(grid), dtype=float)
    D = 0.5 * np.asarray(mod.diffusion(grid), dtype=float) ** 2
    A = np.zeros((N, N))

    d_scale = max(D.max(), 1e-300)
    for j in range(1, N - 1):
        dj, vj = D[j], v[j]
        if dj >= abs(vj) * h / 2.0:   # cell Peclet <= 1: central
            A[j, j - 1] = dj / h**2 - vj / (2 * h)
            A[j, j + 1] = dj / h**2 + vj / (2 * h)
        else:                          # upwind transport
            A[j, j - 1] = dj / h**2 + max(-vj, 0.0) / h
            A[j, j + 1] = dj / h**2 + max(vj, 0.0) / h
        A[j, j] = -(A[j, j - 1] + A[j, j + 1])

    def boundary_row(j, inward):
        if D[j] <= 1e-12 * d_scale:
            # degenerate endpoint: transport only, one-sided into the domain
            A[j, j + inward] = v[j] * inward / h
            A[j, j] = -A[j, j + inward]
        else:
            # artificial endpoint: reflected second difference + one-sided drift
            A[j, j + inward] = 2 * D[j] / h**2 + v[j] * inward / h
            A[j, j] = -A[j, j + inward]

    boundary_row(0, +1)
    boundary_row(N - 1, -1)
    return A


def apply_generator(mod, f: np.ndarray, grid: np.ndarray = None) -> np.ndarray:
    """Apply the generator to a state-indexed function.

    For chains ``f`` is indexed by the chain states; for diffusions it lives
    on ``grid``."""
    f = np.asarray(f)
    if isinstance(mod, FiniteChainModulator):
        if f.shape[0] != mod.d:
            raise ValueError(f"f has {f.shape[0]} entries, chain has {mod.d} states")
        return mod.q_matrix @ f
    A = generator_matrix(mod, grid)
    if f.shape[0] != A.shape[0]:
        raise ValueError("f does not match the grid")
    return A @ f


def chain_from_diffusion(mod: Diffusion1DModulator, n_states: int) -> FiniteChainModulator:
    """Finite-chain approximation of a bounded diffusion modulator on a
    uniform grid (states = grid nodes, generator = discretized operator)."""
    if not mod.bounded:
        raise ValueError("chain approximation needs a bounded domain")
    grid = np.linspace(mod.x_lo, mod.x_hi, n_states)
    A = generator_matrix(mod, grid)
    return FiniteChainModulator(grid, A)


# --------------------------------------------------------------------------
# path simulation
# --------------------------------------------------------------------------

def _time_grid(T: float, dt: float):
    if dt <= 0:
        raise ValueError("dt must be positive")
    K = max(1, int(np.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, K + 1)


def simulate_modulator(mod, x0: float, T: float, dt: float,
                       rng: np.random.Generator, n_paths: int = 1):
    """Simulate modulator paths, reported on the uniform grid.

    Chains use exact event-driven simulation (exponential holding times,
    jump distribution from the generator row), so the reported
    piecewise-constant path is exact at the grid nodes.  Diffusions use an
    Euler-Maruyama step with clamping to the domain.

    Returns ``(times, paths)`` with ``paths`` of shape (n_paths, K+1).
    """
    times = _time_grid(T, dt)
    if isinstance(mod, FiniteChainModulator):
        return times, _simulate_chain(mod, x0, times, rng, n_paths)
    if isinstance(mod, Diffusion1DModulator):
        return times, _simulate_diffusion(mod, x0, times, rng, n_paths)
    raise TypeError(f"unsupported modulator {type(mod).__name__}")


def _simulate_chain(mod, x0, times, rng, n_paths):
    d = mod.d
    T = times[-1]
    K = times.size - 1
    dtg = T / K if K else 1.0
    q = mod.q_matrix
    rates = -np.diag(q)
    jump_probs = np.where(rates[:, None] > 0, q / np.where(rates[:, None] > 0, rates[:, None], 1.0), 0.0)
    np.fill_diagonal(jump_probs, 0.0)

    out = np.empty((n_paths, K + 1))
    cur = np.full(n_paths, mod.state_index(x0), dtype=int)
    t_now = np.zeros(n_paths)
    filled = np.zeros(n_paths, dtype=int)  # next column to fill

    while True:
        r = rates[cur]
        holding = np.where(r > 0, rng.exponential(1.0, size=n_paths) / np.where(r > 0, r, 1.0), np.inf)
        t_next = np.minimum(t_now + holding, T + dtg)
        # fill grid columns covered by [t_now, t_next)
        end = np.minimum(np.ceil(t_next / dtg - 1e-12).astype(int), K + 1)
        end = np.maximum(end, filled)
        lens = end - filled
        if np.any(lens > 0):
            rows = np.repeat(np.arange(n_paths), lens)
            base = np.repeat(filled, lens)
            offs = np.arange(lens.sum()) - np.repeat(np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
            out[rows, base + offs] = mod.states[np.repeat(cur, lens)]
        filled = end
        if np.all(filled > K):
            break
        alive = t_next <= T
        if np.any(alive):
            u = rng.random(n_paths)
            cdf = np.cumsum(jump_probs[cur], axis=1)
            nxt = (u[:, None] > cdf).sum(axis=1)
            cur = np.where(alive, np.minimum(nxt, d - 1), cur)
        t_now = t_next
    return out


def _simulate_diffusion(mod, x0, times, rng, n_paths):
    K = times.size - 1
    x = np.full(n_paths, float(x0))
    if not (mod.x_lo <= x0 <= mod.x_hi):
        raise ValueError(f"x0={x0} outside [{mod.x_lo}, {mod.x_hi}]")
    out = np.empty((n_paths, K + 1))
    out[:, 0] = x
    for k in range(K):
        h = times[k + 1] - times[k]
        z = rng.standard_normal(n_paths)
        x = x + np.asarray(mod.drift(x)) * h + np.asarray(mod.diffusion(x)) * np.sqrt(h) * z
        # clamp corrects discretization overshoot past the boundaries
        x = np.clip(x, mod.x_lo, mod.x_hi)
        out[:, k + 1] = x
    return out
