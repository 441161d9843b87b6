"""Pointwise closures of the Darcy-Forchheimer gas model.

The pressure-squared variable ``S = |p| p`` enters through the ideal-gas
density ``rho(S) = gamma * S / sqrt(|S|)``.  The momentum balance
``(alpha + beta |m|) m + grad S = 0`` is written ``G(m) = -grad S`` with
``G(v) = (alpha + beta |v|) v``; its inverse is ``F``.

Every closure comes in a scalar/vector form taking :class:`ClosureParams`
and a vectorized ``*_array`` form used by the assembly code.  Vectors are
arrays whose last axis holds the components.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError


@dataclass(frozen=True)
class ClosureParams:
    """Pointwise coefficients of the closures.

    ``beta = 0`` is accepted as the linear Darcy limit.
    ``smoothing_delta`` only affects derivatives, never values.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    smoothing_delta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "smoothing_delta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.alpha <= 0 or self.gamma <= 0:
            raise ContractError("alpha and gamma must be positive")
        if self.beta < 0:
            raise ContractError("beta must be nonnegative")
        if self.smoothing_delta < 0:
            raise ContractError("smoothing_delta must be nonnegative")


def _finite(x, what):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what} must be finite")
    return x


# -- vectorized kernels ------------------------------------------------------


def signed_sqrt(s):
    """``s / sqrt(|s|)`` with the limit value 0 at ``s = 0``."""
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.sqrt(np.abs(s))


def signed_sqrt_derivative(s, delta=0.0):
    """Derivative ``1 / (2 sqrt(|s|))`` with ``|s|`` smoothed to ``sqrt(s^2 + delta^2)``.

    Infinite at ``s = 0`` when ``delta = 0``.
    """
    s = np.asarray(s, dtype=float)
    smooth = np.sqrt(s * s + delta * delta)
    with np.errstate(divide="ignore"):
        return 0.5 / np.sqrt(smooth)


def rho_array(gamma, s):
    return np.asarray(gamma, dtype=float) * signed_sqrt(s)


def g_array(alpha, beta, v):
    """``(alpha + beta |v|) v`` over the last axis of ``v``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    beta = np.asarray(beta, dtype=float)[..., None]
    return (alpha + beta * norm) * v


def f_magnitude(alpha, beta, r):
    """Root ``x >= 0`` of ``beta x^2 + alpha x = r``, cancellation free."""
    r = np.asarray(r, dtype=float)
    return 2.0 * r / (alpha + np.sqrt(alpha * alpha + 4.0 * beta * r))


def f_array(alpha, beta, g):
    """Inverse of :func:`g_array`: the ``m`` with ``(alpha + beta|m|) m = g``."""
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    beta = np.asarray(beta, dtype=float)[..., None]
    # r / |g| written without the 0/0 at g = 0
    scale = 2.0 / (alpha + np.sqrt(alpha * alpha + 4.0 * beta * norm))
    return scale * g


def g_jacobian_array(alpha, beta, v, delta=0.0):
    """Jacobian of ``G`` at ``v``: ``alpha I + beta (|v| I + v v^T / |v|)``.

    ``|v|`` is replaced by ``sqrt(|v|^2 + delta^2)``; with ``delta = 0``
    the rank-one term is dropped at ``v = 0`` (its limit is bounded).
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    norm = np.sqrt(np.sum(v * v, axis=-1) + delta * delta)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), norm.shape)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), norm.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(norm > 0, 1.0 / norm, 0.0)
    eye = np.eye(n)
    outer = v[..., :, None] * v[..., None, :]
    return ((alpha + beta * norm)[..., None, None] * eye
            + (beta * inv)[..., None, None] * outer)


def forchheimer_potential(alpha, beta, r):
    """Convex potential ``Phi`` with ``Phi'(r) = |F|`` at gradient magnitude ``r``.

    The analytic form ``[(a^2 + 4 b r)^{3/2} - a^3]/(12 b^2) - a r/(2 b)`` is
    rewritten as ``(4/3) r^2 (t + a/2) / (t + a)^2`` with
    ``t = sqrt(a^2 + 4 b r)``, which is exact and stays finite as ``b -> 0``.
    """
    r = np.asarray(r, dtype=float)
    t = np.sqrt(alpha * alpha + 4.0 * beta * r)
    return (4.0 / 3.0) * r * r * (t + 0.5 * alpha) / (t + alpha) ** 2


# -- scalar / single-vector API ----------------------------------------------


def rho(params: ClosureParams, s: float) -> float:
    """Ideal-gas density ``gamma s / sqrt(|s|)``; 0 at ``s = 0``."""
    s = _finite(s, "s")
    return float(rho_array(params.gamma, s))


def g_closure(params: ClosureParams, v) -> np.ndarray:
    v = _finite(v, "v")
    return g_array(params.alpha, params.beta, v)


def f_closure(params: ClosureParams, g) -> np.ndarray:
    g = _finite(g, "g")
    return f_array(params.alpha, params.beta, g)


def _pair(x, y):
    x = _finite(x, "x")
    y = _finite(y, "y")
    if x.shape != y.shape:
        raise ContractError(f"dimension mismatch {x.shape} vs {y.shape}")
    return x, y


def check_vector_monotonicity(x, y):
    """Both sides of ``(|x|x - |y|y).(x - y) >= |x - y|^3 / 2``.

    Returns ``(lhs, rhs)``; the inequality holds when ``lhs >= rhs``.
    """
    x, y = _pair(x, y)
    lhs, rhs = vector_monotonicity_sides(x, y)
    return float(lhs), float(rhs)


def check_vector_continuity(x, y):
    """Both sides of ``||x|x - |y|y| <= (|x| + |y|) |x - y|`` as ``(lhs, rhs)``."""
    x, y = _pair(x, y)
    lhs, rhs = vector_continuity_sides(x, y)
    return float(lhs), float(rhs)


def check_sqrt_monotonicity(x: float, y: float):
    """Hölder and monotonicity sides for ``t -> t / sqrt(|t|)``.

    Returns ``(holder_lhs, holder_rhs, mono_lhs, mono_rhs)``; both
    inequalities read ``lhs <= rhs``.
    """
    x, y = _pair(x, y)
    return tuple(float(v) for v in sqrt_inequality_sides(x, y))


def _square_norm_difference(x, y):
    """``|x|x - |y|y`` as ``|x|(x - y) + (|x| - |y|) y`` without cancellation."""
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    d = x - y
    total = nx + ny
    with np.errstate(divide="ignore", invalid="ignore"):
        dn = np.where(total > 0, np.sum(d * (x + y), axis=-1, keepdims=True) / np.where(total > 0, total, 1.0), 0.0)
    return nx * d + dn * y, d, nx, ny


def vector_continuity_sides(x, y):
    diff, d, nx, ny = _square_norm_difference(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    lhs = np.linalg.norm(diff, axis=-1)
    rhs = (nx[..., 0] + ny[..., 0]) * np.linalg.norm(d, axis=-1)
    return lhs, rhs


def vector_monotonicity_sides(x, y):
    diff, d, _, _ = _square_norm_difference(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    lhs = np.sum(diff * d, axis=-1)
    rhs = 0.5 * np.linalg.norm(d, axis=-1) ** 3
    return lhs, rhs


def signed_sqrt_difference(x, y):
    """``x/sqrt|x| - y/sqrt|y|``, rationalized when the signs agree."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx, ry = np.sqrt(np.abs(x)), np.sqrt(np.abs(y))
    same = (x * y) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rational = (x - y) / np.where(same, rx + ry, 1.0)
    return np.where(same, rational, signed_sqrt(x) - signed_sqrt(y))


def sqrt_inequality_sides(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    df = signed_sqrt_difference(x, y)
    diff = np.abs(x - y)
    holder_lhs = np.abs(df)
    holder_rhs = np.sqrt(2.0) * np.sqrt(diff)
    denom = np.sqrt(np.abs(x)) + np.sqrt(np.abs(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        mono_lhs = np.where(denom > 0, diff * diff / np.where(denom > 0, denom, 1.0), 0.0)
    mono_rhs = df * (x - y)
    return holder_lhs, holder_rhs, mono_lhs, mono_rhs
