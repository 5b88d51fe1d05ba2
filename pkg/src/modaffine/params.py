"""Admissible parameter sets of a Markov-modulated affine process.

The affine component Y lives on R_+^m x R^(n-m); its generator is built from
the tuple (a, alpha, b, beta, c, gamma, m_kernel, mu) where the level
coefficients (a, b, c, m_kernel) may depend on the state x of the modulating
process.  This module represents and validates such parameter sets and
evaluates the two exponent functions that drive every downstream solver:

    F(x, u) = <b(x), u> + <a(x) u, u> - c(x)
              + integral (e^<u,z> - 1 - <u_J, chi_J(z)>) m(x, dz)

    R_i(u)  = <alpha_i u, u> + <beta_i^+, u> - gamma_i
              + integral (e^<u,z> - 1 - <u_J(i), chi_J(i)(z)>) mu_i(dz)
    R_J(u)  = beta^* u^*

with beta_i^+ the i-th column of beta and beta^* the transposed lower-right
block.  All containers are immutable after construction; evaluation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .kernels import EmptyKernel, JumpKernel, MomentConditionError


class StructuralError(ValueError):
    """Shape/type inconsistency in a parameter set (not an admissibility
    violation)."""


# --------------------------------------------------------------------------
# state-space bookkeeping
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StateSpaceShape:
    """Index bookkeeping for R_+^m x R^(n-m)."""

    m: int
    n: int

    def __post_init__(self):
        if not (0 <= self.m <= self.n) or self.n < 1:
            raise StructuralError(f"need 0 <= m <= n, n >= 1; got m={self.m}, n={self.n}")

    @property
    def idx_nonneg(self) -> np.ndarray:
        return np.arange(self.m)

    @property
    def idx_real(self) -> np.ndarray:
        return np.arange(self.m, self.n)

    @property
    def real_mask(self) -> np.ndarray:
        """Boolean mask of the unconstrained (real-line) components."""
        mask = np.zeros(self.n, dtype=bool)
        mask[self.m:] = True
        return mask

    def real_mask_with(self, i: int) -> np.ndarray:
        """Mask of {i} union J, the compensation set of the i-th scaled
        measure."""
        mask = self.real_mask
        mask[i] = True
        return mask


# --------------------------------------------------------------------------
# truncation function
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationFunction:
    """Componentwise continuous map into [-1, 1]^n, identity near zero."""

    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(xi, dtype=float))


def _clamp(xi: np.ndarray) -> np.ndarray:
    return np.clip(xi, -1.0, 1.0)


#: Library-wide default: chi_i(xi) = clamp(xi_i, -1, 1).  Fixed once so that
#: exponent functions and semimartingale characteristics share a compensator
#: convention.
DEFAULT_CHI = TruncationFunction(_clamp)


# --------------------------------------------------------------------------
# points of the transform domain
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexDomainPoint:
    """A point u in C^n split as (u^+ in C^m, u^* in C^(n-m))."""

    u: np.ndarray
    m: int

    def __post_init__(self):
        arr = np.asarray(self.u, dtype=complex).reshape(-1).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "u", arr)
        if not (0 <= self.m <= arr.size):
            raise StructuralError("m out of range for u")

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def u_plus(self) -> np.ndarray:
        return self.u[: self.m]

    @property
    def u_star(self) -> np.ndarray:
        return self.u[self.m:]

    @property
    def in_U(self) -> bool:
        """True iff e^<u, y> is bounded on the state space: Re u_i <= 0 on the
        nonnegative components and Re u_j = 0 on the real components."""
        re = self.u.real
        return bool(np.all(re[: self.m] <= 0.0) and np.all(re[self.m:] == 0.0))

    def conj(self) -> "ComplexDomainPoint":
        return ComplexDomainPoint(np.conj(self.u), self.m)


def as_domain_point(u, m: int) -> ComplexDomainPoint:
    if isinstance(u, ComplexDomainPoint):
        if u.m != m:
            raise StructuralError(f"domain point has m={u.m}, parameters have m={m}")
        return u
    return ComplexDomainPoint(np.asarray(u, dtype=complex), m)


# --------------------------------------------------------------------------
# x-indexed coefficient fields
# --------------------------------------------------------------------------

class XField:
    """Coefficient that may depend on the modulator state x."""

    is_constant = False

    def at(self, x: float):
        raise NotImplementedError

    def at_many(self, xs: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(self.at(float(x)), dtype=float) for x in xs])


class ConstantField(XField):
    is_constant = True

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)
        self.value.setflags(write=False)

    def at(self, x):
        return self.value

    def at_many(self, xs):
        reps = (len(xs),) + (1,) * self.value.ndim
        return np.tile(self.value, reps)


class AffineField(XField):
    """value(x) = base + slope * x; vectorizes exactly."""

    def __init__(self, base, slope):
        self.base = np.asarray(base, dtype=float)
        self.slope = np.asarray(slope, dtype=float)
        if self.base.shape != self.slope.shape:
            raise StructuralError("AffineField base/slope shape mismatch")

    def at(self, x):
        return self.base + self.slope * float(x)

    def at_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        return self.base + np.multiply.outer(xs, self.slope)


class PerStateField(XField):
    """Tabulation over the finite states of a chain modulator."""

    def __init__(self, states: Sequence[float], values: Sequence):
        self.states = np.asarray(states, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[0] != self.states.size:
            raise StructuralError("PerStateField states/values length mismatch")

    def _index(self, x):
        i = int(np.argmin(np.abs(self.states - x)))
        if abs(self.states[i] - x) > 1e-9 * max(1.0, abs(x)):
            raise StructuralError(f"state {x} not in tabulation {self.states}")
        return i

    def at(self, x):
        return self.values[self._index(x)]

    def at_many(self, xs):
        idx = np.array([self._index(float(x)) for x in xs])
        return self.values[idx]


class CallableField(XField):
    def __init__(self, func: Callable):
        self.func = func

    def at(self, x):
        return self.func(float(x))


def as_xfield(value, name: str = "field") -> XField:
    if isinstance(value, XField):
        return value
    if callable(value):
        return CallableField(value)
    return ConstantField(value)


class XKernel:
    """x-indexed jump measure: resolves to a :class:`JumpKernel` at each x."""

    is_constant = False

    def at(self, x: float) -> JumpKernel:
        raise NotImplementedError


class ConstantKernel(XKernel):
    is_constant = True

    def __init__(self, kernel: JumpKernel):
        self.kernel = kernel

    def at(self, x):
        return self.kernel


class PerStateKernel(XKernel):
    def __init__(self, states: Sequence[float], kernels: Sequence[JumpKernel]):
        self.states = np.asarray(states, dtype=float)
        self.kernels = list(kernels)
        if len(self.kernels) != self.states.size:
            raise StructuralError("PerStateKernel states/kernels length mismatch")

    def at(self, x):
        i = int(np.argmin(np.abs(self.states - x)))
        if abs(self.states[i] - x) > 1e-9 * max(1.0, abs(x)):
            raise StructuralError(f"state {x} not in tabulation {self.states}")
        return self.kernels[i]


class CallableKernel(XKernel):
    def __init__(self, func: Callable[[float], JumpKernel]):
        self.func = func

    def at(self, x):
        return self.func(float(x))


def as_xkernel(value, n: int) -> XKernel:
    if value is None:
        return ConstantKernel(EmptyKernel(n))
    if isinstance(value, XKernel):
        return value
    if isinstance(value, JumpKernel):
        return ConstantKernel(value)
    if callable(value):
        return CallableKernel(value)
    raise StructuralError(f"cannot interpret {value!r} as an x-indexed kernel")


# --------------------------------------------------------------------------
# the parameter tuple
# --------------------------------------------------------------------------

def _frozen_matrix(value, shape, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise StructuralError(f"{name} must have shape {shape}, got {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class XAdmissibleParams:
    """The tuple (a, alpha, b, beta, c, gamma, m_kernel, mu).

    Level coefficients a, b, c and the level measure may depend on x (pass a
    constant, an :class:`AffineField`, a :class:`PerStateField` or any
    callable); alpha, beta, gamma and the scaled measures mu are constant.
    Dimension consistency is enforced at construction (structural errors);
    the admissibility inequalities are checked by :func:`validate_params`.
    """

    m: int
    a: Union[XField, np.ndarray, Callable, None] = None
    alpha: Optional[Sequence] = None
    b: Union[XField, np.ndarray, Callable, None] = None
    beta: Optional[np.ndarray] = None
    c: Union[XField, float, Callable] = 0.0
    gamma: Optional[np.ndarray] = None
    m_kernel: Union[XKernel, JumpKernel, Callable, None] = None
    mu: Optional[Sequence[JumpKernel]] = None
    n: int = field(default=None)

    def __post_init__(self):
        n = self.n
        if n is None:
            if self.beta is not None:
                n = np.asarray(self.beta).shape[0]
            elif self.b is not None and not callable(self.b) and not isinstance(self.b, XField):
                n = np.asarray(self.b).reshape(-1).size
            else:
                raise StructuralError("cannot infer dimension n; pass n explicitly")
        object.__setattr__(self, "n", int(n))
        m, n = self.m, self.n
        if not (0 <= m <= n) or n < 1:
            raise StructuralError(f"need 0 <= m <= n, n >= 1; got m={m}, n={n}")

        object.__setattr__(self, "a", as_xfield(self.a if self.a is not None
                                                else np.zeros((n, n)), "a"))
        object.__setattr__(self, "b", as_xfield(self.b if self.b is not None
                                                else np.zeros(n), "b"))
        object.__setattr__(self, "c", as_xfield(self.c, "c"))

        alpha = self.alpha
        if alpha is None:
            alpha = np.zeros((m, n, n))
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (m, n, n):
            raise StructuralError(f"alpha must have shape ({m},{n},{n}), got {alpha.shape}")
        alpha = alpha.copy()
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

        beta = self.beta if self.beta is not None else np.zeros((n, n))
        object.__setattr__(self, "beta", _frozen_matrix(beta, (n, n), "beta"))

        gamma = self.gamma if self.gamma is not None else np.zeros(m)
        object.__setattr__(self, "gamma", _frozen_matrix(gamma, (m,), "gamma"))

        object.__setattr__(self, "m_kernel", as_xkernel(self.m_kernel, n))

        mu = self.mu if self.mu is not None else [EmptyKernel(n)] * m
        mu = tuple(mu)
        if len(mu) != m:
            raise StructuralError(f"mu must have {m} entries, got {len(mu)}")
        for k in mu:
            if not isinstance(k, JumpKernel):
                raise StructuralError("mu entries must be JumpKernel instances")
            if k.dim() != n:
                raise StructuralError("mu kernel dimension mismatch")
        object.__setattr__(self, "mu", mu)

    @property
    def shape(self) -> StateSpaceShape:
        return StateSpaceShape(self.m, self.n)

    @property
    def beta_star(self) -> np.ndarray:
        """(beta^T)_{JJ}: the closed linear block acting on u^*."""
        return self.beta[self.m:, self.m:].T

    def has_level_jumps(self) -> bool:
        k = self.m_kernel
        return not (isinstance(k, ConstantKernel) and isinstance(k.kernel, EmptyKernel))

    def has_scaled_jumps(self) -> bool:
        return any(not isinstance(k, EmptyKernel) for k in self.mu)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    bullet: str
    x: Optional[float]
    detail: str

    def __str__(self):
        where = "" if self.x is None else f" at x={self.x:g}"
        return f"[{self.bullet}]{where}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "admissible (no violations)"
        return "\n".join(str(v) for v in self.violations)


def _psd_violation(mat: np.ndarray) -> Optional[str]:
    """None if symmetric PSD up to the floating-point floor, else a message."""
    scale = max(1.0, float(np.linalg.norm(mat)))
    if not np.allclose(mat, mat.T, atol=1e-12 * scale):
        return "matrix is not symmetric"
    w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    floor = -1e-10 * scale
    if w.min() < floor:
        return f"min eigenvalue {w.min():.3e} below PSD floor {floor:.3e}"
    return None


def validate_params(p: XAdmissibleParams, shape: StateSpaceShape,
                    probe_states: Sequence[float],
                    chi: TruncationFunction = DEFAULT_CHI) -> ValidationReport:
    """Check every admissibility requirement at the given probe states.

    Structural inconsistencies (dimension mismatch between ``p`` and
    ``shape``, empty probe list) raise :class:`StructuralError`; genuine
    admissibility violations are collected into the report, one entry per
    violated requirement and offending state.
    """
    if p.shape != shape:
        raise StructuralError(
            f"parameter set has shape (m={p.m}, n={p.n}), expected "
            f"(m={shape.m}, n={shape.n})")
    probe_states = list(probe_states)
    if not probe_states:
        raise StructuralError("probe_states must be non-empty")

    m, n = shape.m, shape.n
    out: List[Violation] = []

    # constant blocks first
    for i in range(m):
        ai = p.alpha[i]
        msg = _psd_violation(ai)
        if msg:
            out.append(Violation("alpha_i PSD", None, f"alpha_{i + 1}: {msg}"))
        ii = [k for k in range(m) if k != i]
        if ii and not np.allclose(ai[np.ix_(ii, ii)], 0.0, atol=1e-14):
            out.append(Violation("alpha_{i;I(i)I(i)} = 0", None,
                                 f"alpha_{i + 1} has nonzero I(i) x I(i) block"))

    if m < n and m > 0 and not np.allclose(p.beta[:m, m:], 0.0, atol=1e-14):
        out.append(Violation("beta_IJ = 0", None,
                             f"beta[I, J] = {p.beta[:m, m:]} nonzero"))
    for i in range(m):
        off = [k for k in range(m) if k != i]
        if off and np.any(p.beta[i, off] < 0):
            out.append(Violation("beta_{i I(i)} >= 0", None,
                                 f"row {i + 1} of beta has negative off-diagonal "
                                 f"I-entries {p.beta[i, off]}"))

    if np.any(p.gamma < 0):
        out.append(Violation("gamma >= 0", None, f"gamma = {p.gamma}"))

    lin_mask_m = ~shape.real_mask  # I components
    for i, mu_i in enumerate(p.mu):
        if not mu_i.support_ok(m):
            out.append(Violation("mu_i supported on the state space", None,
                                 f"mu_{i + 1} support leaves R_+^m x R^(n-m)"))
            continue
        lin_mask = ~shape.real_mask_with(i)  # I(i) components
        mass = mu_i.admissibility_mass(chi, lin_mask)
        if not np.isfinite(mass):
            out.append(Violation("M_i finite", None,
                                 f"mu_{i + 1} admissibility mass diverges"))

    # x-dependent blocks at every probe state
    for x in probe_states:
        ax = np.asarray(p.a.at(x), dtype=float)
        if ax.shape != (n, n):
            raise StructuralError(f"a({x}) has shape {ax.shape}, expected ({n},{n})")
        msg = _psd_violation(ax)
        if msg:
            out.append(Violation("a(x) PSD", x, msg))
        if m > 0 and not np.allclose(ax[:m, :m], 0.0, atol=1e-14):
            out.append(Violation("a(x)_II = 0", x,
                                 f"a[I, I] = {ax[:m, :m]} nonzero"))

        bx = np.asarray(p.b.at(x), dtype=float).reshape(-1)
        if bx.size != n:
            raise StructuralError(f"b({x}) has size {bx.size}, expected {n}")
        if np.any(bx[:m] < 0):
            out.append(Violation("b(x) in state space", x,
                                 f"b_I = {bx[:m]} has negative entries"))

        cx = float(np.asarray(p.c.at(x)))
        if cx < 0:
            out.append(Violation("c(x) >= 0", x, f"c = {cx}"))

        kern = p.m_kernel.at(x)
        if kern.dim() != n:
            raise StructuralError(f"m({x}) kernel dimension mismatch")
        if not kern.support_ok(m):
            out.append(Violation("m(x) supported on the state space", x,
                                 "level kernel support leaves R_+^m x R^(n-m)"))
        else:
            mass = kern.admissibility_mass(chi, lin_mask_m)
            if not np.isfinite(mass):
                out.append(Violation("M(x) finite", x,
                                     "level kernel admissibility mass diverges"))

    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------
# the exponent functions
# --------------------------------------------------------------------------

def eval_F(p: XAdmissibleParams, x: float, u,
           chi: TruncationFunction = DEFAULT_CHI) -> complex:
    """Level exponent F(x, u); carries every x-dependent parameter."""
    pt = as_domain_point(u, p.m)
    if pt.n != p.n:
        raise StructuralError(f"u has dimension {pt.n}, parameters have {p.n}")
    uv = pt.u
    a = np.asarray(p.a.at(x), dtype=float)
    b = np.asarray(p.b.at(x), dtype=float).reshape(-1)
    c = float(np.asarray(p.c.at(x)))
    val = np.dot(b, uv) + np.dot(uv, a @ uv) - c
    kern = p.m_kernel.at(x)
    if not isinstance(kern, EmptyKernel):
        val += kern.exponent_integral(uv, chi, p.shape.real_mask)
    return complex(val)


def eval_R(p: XAdmissibleParams, u,
           chi: TruncationFunction = DEFAULT_CHI) -> np.ndarray:
    """State exponent R(u) in C^n; identical to the unmodulated affine case."""
    pt = as_domain_point(u, p.m)
    if pt.n != p.n:
        raise StructuralError(f"u has dimension {pt.n}, parameters have {p.n}")
    uv = pt.u
    m, n = p.m, p.n
    out = np.zeros(n, dtype=complex)
    for i in range(m):
        val = np.dot(uv, p.alpha[i] @ uv) + np.dot(p.beta[:, i], uv) - p.gamma[i]
        mu_i = p.mu[i]
        if not isinstance(mu_i, EmptyKernel):
            val += mu_i.exponent_integral(uv, chi, p.shape.real_mask_with(i))
        out[i] = val
    if m < n:
        out[m:] = p.beta_star @ uv[m:]
    return out


def eval_F_many(p: XAdmissibleParams, xs: np.ndarray, u,
                chi: TruncationFunction = DEFAULT_CHI) -> np.ndarray:
    """F(x_j, u) over a grid of modulator states (vectorized where the
    coefficient fields allow, with a per-state fallback for callable
    kernels)."""
    pt = as_domain_point(u, p.m)
    uv = pt.u
    xs = np.asarray(xs, dtype=float)
    b = p.b.at_many(xs)          # (k, n)
    vals = (b @ uv).astype(complex)
    if isinstance(p.a, ConstantField):
        if p.a.value.any():
            vals = vals + np.dot(uv, p.a.value @ uv)
    else:
        a = p.a.at_many(xs)      # (k, n, n)
        vals = vals + np.einsum("i,kij,j->k", uv, a, uv)
    if isinstance(p.c, ConstantField):
        if p.c.value.any():
            vals = vals - float(p.c.value)
    else:
        vals = vals - np.asarray(p.c.at_many(xs), dtype=float).reshape(len(xs))
    mk = p.m_kernel
    if isinstance(mk, ConstantKernel):
        if not isinstance(mk.kernel, EmptyKernel):
            vals = vals + mk.kernel.exponent_integral(uv, chi, p.shape.real_mask)
    else:
        mask = p.shape.real_mask
        vals = vals + np.array([
            mk.at(float(x)).exponent_integral(uv, chi, mask) for x in xs
        ])
    return vals
