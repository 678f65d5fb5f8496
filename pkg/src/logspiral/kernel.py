"""Closed-form Green function of ``4H - 4 beta H' + (1 + beta^2) H'' = h``.

The kernel ``K^m_beta`` lives on the fundamental domain ``[0, 2 pi / m)`` of
an m-fold symmetric field.  It equals the sum of the m rotated copies of the
full-circle kernel, so that for an m-fold symmetric ``h``

    H(theta) = int_0^{2 pi / m} K^m(theta - s) h(s) ds.

Values come from the complex-exponential closed form; Fourier partial sums
are only used in the test-suite as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SpiralParams:
    """Spiral pitch ``beta`` (nonzero) and fold symmetry ``m`` (>= 1)."""

    beta: float
    m: int = 1

    def __post_init__(self):
        beta = float(self.beta)
        if not np.isfinite(beta):
            raise ValueError("beta must be finite")
        if beta == 0.0:
            raise ValueError("beta must be nonzero")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "m", int(self.m))

    @property
    def period(self) -> float:
        """Length of the fundamental domain, ``2 pi / m``."""
        return TWO_PI / self.m

    def multiplier(self, wavenumber):
        """Fourier symbol ``1 / (4 - 4 i beta n - (1 + beta^2) n^2)`` at
        physical wavenumbers ``n``."""
        n = np.asarray(wavenumber, dtype=float)
        b = self.beta
        return 1.0 / (4.0 - 4.0j * b * n - (1.0 + b * b) * n * n)


@dataclass(frozen=True)
class KernelBoundaryData:
    k0: float
    kp0: float
    jump: float


def _check_params(params: SpiralParams) -> SpiralParams:
    if not isinstance(params, SpiralParams):
        raise TypeError("expected SpiralParams")
    return params


def _sin_cot(params: SpiralParams):
    """``sin(a)`` and ``cot(a)`` for ``a = 2 pi (1 + i beta) / (m (1 + beta^2))``.

    For m = 1, 2 the real part of ``a`` approaches 2 pi resp. pi as
    beta -> 0, so the reflected argument is used to avoid cancellation.
    """
    b, m = params.beta, params.m
    q = 1.0 + b * b
    if m == 1:
        y = TWO_PI * b * (b - 1j) / q  # 2 pi - a
        s = -np.sin(y)
        cot = -np.cos(y) / np.sin(y)
    elif m == 2:
        y = np.pi * b * (b - 1j) / q  # pi - a
        s = np.sin(y)
        cot = -np.cos(y) / np.sin(y)
    else:
        a = TWO_PI * (1.0 + 1j * b) / (m * q)
        s = np.sin(a)
        cot = np.cos(a) / s
    return s, cot


def _rate(params: SpiralParams) -> complex:
    # d/dtheta of the exponent c (m theta - pi)
    b = params.beta
    return 2.0 * (b - 1j) / (1.0 + b * b)


def reduce_angle(params: SpiralParams, theta):
    """Representative of ``theta`` in ``[0, 2 pi / m)``."""
    period = params.period
    r = np.mod(np.asarray(theta, dtype=float), period)
    # np.mod can return `period` itself for tiny negative inputs
    return np.where(r >= period, 0.0, r)


def _closed_form(params: SpiralParams, theta, order: int):
    """k-th derivative of the closed form on the fundamental domain (unchecked)."""
    t = reduce_angle(params, theta)
    s, _ = _sin_cot(params)
    lam = _rate(params)
    expo = np.exp(lam * (t - np.pi / params.m))
    return 0.25 * np.real(lam ** order * expo / s)


def _reject_boundary(params: SpiralParams, theta, what: str):
    t = reduce_angle(params, theta)
    if np.any(t == 0.0):
        raise ValueError(
            f"{what} is undefined at theta = 0 mod 2pi/m; use kernel_boundary"
        )


def kernel_eval(params: SpiralParams, theta):
    """Evaluate ``K^m_beta(theta)``.

    Parameters
    ----------
    params : SpiralParams
    theta : float or array_like
        Angles; reduced periodically into ``[0, 2 pi / m)``.

    Returns
    -------
    float or ndarray

    Raises
    ------
    ValueError
        If any angle is congruent to 0 modulo ``2 pi / m``.
    """
    _check_params(params)
    _reject_boundary(params, theta, "kernel_eval")
    out = _closed_form(params, theta, 0)
    return float(out) if np.ndim(out) == 0 else out


def kernel_deriv(params: SpiralParams, theta):
    """Analytic derivative ``K'(theta)`` away from the jump at 0."""
    _check_params(params)
    _reject_boundary(params, theta, "kernel_deriv")
    out = _closed_form(params, theta, 1)
    return float(out) if np.ndim(out) == 0 else out


def kernel_second_deriv(params: SpiralParams, theta):
    _check_params(params)
    _reject_boundary(params, theta, "kernel_second_deriv")
    out = _closed_form(params, theta, 2)
    return float(out) if np.ndim(out) == 0 else out


def kernel_values(params: SpiralParams, theta):
    """``K`` at arbitrary angles, including 0 (where K is continuous)."""
    return _closed_form(params, theta, 0)


def kernel_deriv_values(params: SpiralParams, theta):
    """``K'`` at arbitrary angles; at 0 mod 2pi/m the averaged limit is used."""
    t = reduce_angle(params, theta)
    out = _closed_form(params, t, 1)
    at_zero = t == 0.0
    if np.any(at_zero):
        out = np.where(at_zero, kernel_boundary(params).kp0, out)
    return out


def kernel_deriv_limits(params: SpiralParams) -> tuple[float, float]:
    """One-sided limits ``(K'(0-), K'(0+))``.  Testing aid only."""
    s, _ = _sin_cot(params)
    lam = _rate(params)
    half = np.pi / params.m
    # theta -> 0+ sits at the left end of the domain, 0- at its right end
    right = 0.25 * np.real(lam * np.exp(-lam * half) / s)
    left = 0.25 * np.real(lam * np.exp(lam * half) / s)
    return float(left), float(right)


def kernel_boundary(params: SpiralParams) -> KernelBoundaryData:
    """``K(0)``, the averaged ``K'(0)`` and the size of the derivative jump.

    ``K'(0+) - K'(0-) = 1 / (1 + beta^2)`` for every m, because only the
    unshifted image in the m-fold sum is singular at 0.
    """
    _check_params(params)
    b = params.beta
    _, cot = _sin_cot(params)
    k0 = 0.25 * np.real(cot)
    kp0 = np.real((b - 1j) * cot) / (2.0 * (1.0 + b * b))
    return KernelBoundaryData(k0=float(k0), kp0=float(kp0), jump=1.0 / (1.0 + b * b))


def kernel_odd_even(params: SpiralParams, theta):
    """Even/odd split of K about 0 on ``(-pi/m, pi/m)``.

    Returns ``(even, odd, odd_deriv)``; the derivative of the odd part is
    continuous across 0, where it equals the averaged ``K'(0)``.
    """
    _check_params(params)
    t = np.asarray(theta, dtype=float)
    half = np.pi / params.m
    if np.any(np.abs(t) >= half):
        raise ValueError("theta must lie in (-pi/m, pi/m)")
    kp = _closed_form(params, t, 0)
    km = _closed_form(params, -t, 0)
    even = 0.5 * (kp + km)
    odd = 0.5 * (kp - km)
    odd_d = 0.5 * (_closed_form(params, t, 1) + _closed_form(params, -t, 1))
    at_zero = t == 0.0
    if np.any(at_zero):
        bd = kernel_boundary(params)
        even = np.where(at_zero, bd.k0, even)
        odd = np.where(at_zero, 0.0, odd)
        odd_d = np.where(at_zero, bd.kp0, odd_d)
    if np.ndim(t) == 0:
        return float(even), float(odd), float(odd_d)
    return even, odd, odd_d


def kernel_asymptotic(params: SpiralParams, theta, regime: str, derivative: bool = False):
    """Leading-order expansion of ``K^1_beta`` (or its derivative).

    ``small_beta``:  ``-sin(2 theta) / (8 pi beta)``
    ``large_beta``:  ``1/(8 pi) + (2 pi - theta) theta / (4 pi beta^2)``
    """
    _check_params(params)
    if params.m != 1:
        raise ValueError("asymptotic expansions are only available for m = 1")
    b = params.beta
    t = reduce_angle(params, theta)
    if regime == "small_beta":
        if derivative:
            return -np.cos(2 * t) / (4 * np.pi * b)
        return -np.sin(2 * t) / (8 * np.pi * b)
    if regime == "large_beta":
        if derivative:
            return (np.pi - t) / (2 * np.pi * b * b)
        return 1.0 / (8 * np.pi) + (TWO_PI - t) * t / (4 * np.pi * b * b)
    raise ValueError(f"unknown regime {regime!r}")


# -- quadrature over the fundamental domain -----------------------------------


def periodic_quad(
    func: Callable[[np.ndarray], np.ndarray],
    period: float,
    breakpoints: Sequence[float] = (0.0,),
    tol: float = 1e-9,
    order: int = 16,
    max_panels: int = 4096,
) -> float:
    """Composite Gauss-Legendre integral of a piecewise-analytic periodic
    function over one period.

    Panels never straddle a breakpoint; the panel count is doubled until two
    successive results agree to ``tol`` (relative to ``max(1, |I|)``).
    """
    cuts = np.unique(np.mod(np.asarray(breakpoints, dtype=float), period))
    cuts = np.concatenate([cuts, [cuts[0] + period]])
    x, w = np.polynomial.legendre.leggauss(order)

    def composite(panels: int) -> float:
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 0.0:
                continue
            edges = np.linspace(a, b, panels + 1)
            lo, hi = edges[:-1, None], edges[1:, None]
            nodes = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
            total += np.sum(0.5 * (hi - lo) * w[None, :] * func(nodes))
        return float(total)

    panels = 1
    prev = composite(panels)
    while panels < max_panels:
        panels *= 2
        cur = composite(panels)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise RuntimeError("periodic_quad did not converge")


def kernel_identities(params: SpiralParams, alphas=None, tol: float = 1e-12) -> dict:
    """Residuals of the quadratic kernel identities on the fundamental domain.

    Keys
    ----
    ``energy``          ``int K'^2 - 4/(1+b^2) int K^2 + K(0)/(1+b^2)``
    ``energy_printed``  ``int K'^2 + 4/(1+b^2) int K^2 - K(0)/(1+b^2)``
                        (the sign pattern as usually printed; it is *not*
                        an identity and is reported for reference only)
    ``kp0``             ``K'(0) + 4 b int K'^2``
    ``kpa``             max over ``alphas`` of
                        ``K'(a) + K'(-a) + 4 b int K'(s) (K'(s+a) + K'(s-a)) ds``
    """
    b = params.beta
    P = params.period
    bd = kernel_boundary(params)
    q = 1.0 + b * b

    def kp(s):
        return _closed_form(params, s, 1)

    def k(s):
        return _closed_form(params, s, 0)

    int_kp2 = periodic_quad(lambda s: kp(s) ** 2, P, (0.0,), tol=tol)
    int_k2 = periodic_quad(lambda s: k(s) ** 2, P, (0.0,), tol=tol)

    if alphas is None:
        alphas = np.linspace(0.0, P, 9)[1:-1]
    kpa = 0.0
    for a in np.atleast_1d(alphas):
        a = float(a)
        lhs = float(kernel_deriv_values(params, a) + kernel_deriv_values(params, -a))
        integral = periodic_quad(
            lambda s: kp(s) * (kp(s + a) + kp(s - a)), P, (0.0, a, -a), tol=tol
        )
        kpa = max(kpa, abs(lhs + 4.0 * b * integral))

    return {
        "energy": int_kp2 - 4.0 / q * int_k2 + bd.k0 / q,
        "energy_printed": int_kp2 + 4.0 / q * int_k2 - bd.k0 / q,
        "kp0": bd.kp0 + 4.0 * b * int_kp2,
        "kpa": kpa,
        "int_kp2": int_kp2,
        "int_k2": int_k2,
    }
