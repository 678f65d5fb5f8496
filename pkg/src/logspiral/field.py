"""Periodic grid fields on the m-fold fundamental domain and the elliptic solve.

A field stores ``n`` samples of ``h`` at ``theta_k = 2 pi k / (m n)``.  Local
Fourier index ``k`` on the reduced domain corresponds to the physical
wavenumber ``m k``.  All integrals are reported on the full circle.
"""
from __future__ import annotations

from dataclasses import dataclass, field as _dc_field
from typing import Callable

import numpy as np

from .kernel import TWO_PI, SpiralParams


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class AngularField:
    params: SpiralParams
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field values must be one-dimensional")
        n = v.size
        if n < 16 or not _is_pow2(n):
            raise ValueError(f"grid size must be a power of two >= 16, got {n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def from_function(cls, params: SpiralParams, n: int, func: Callable) -> "AngularField":
        theta = grid(params, n)
        return cls(params, np.broadcast_to(func(theta), theta.shape))

    @classmethod
    def constant(cls, params: SpiralParams, n: int, c: float) -> "AngularField":
        return cls(params, np.full(n, float(c)))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dtheta(self) -> float:
        return self.params.period / self.n

    @property
    def theta(self) -> np.ndarray:
        return grid(self.params, self.n)

    def copy(self) -> "AngularField":
        return AngularField(self.params, self.values.copy())

    def __sub__(self, other):
        if isinstance(other, AngularField):
            return AngularField(self.params, self.values - other.values)
        return AngularField(self.params, self.values - other)


@dataclass
class SpectralField:
    """Normalised one-sided coefficients: ``h = sum_k c_k exp(i m k theta)``
    with ``c_{-k} = conj(c_k)``.  The Nyquist coefficient is kept real."""

    params: SpiralParams
    n: int
    coeffs: np.ndarray

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.params.m * np.arange(self.coeffs.size, dtype=float)

    def coefficient(self, k: int) -> complex:
        c = self.coeffs[abs(k)]
        return complex(np.conj(c)) if k < 0 else complex(c)


@dataclass
class Diagnostics:
    intensity: float
    dissipation: float
    lp_norms: list = _dc_field(default_factory=list)
    l1_time_integral: float = 0.0

    def lp(self, p) -> float:
        for q, v in self.lp_norms:
            if q == p:
                return v
        raise KeyError(p)


def grid(params: SpiralParams, n: int) -> np.ndarray:
    return np.arange(n) * (params.period / n)


def transform(h: AngularField) -> SpectralField:
    c = np.fft.rfft(h.values) / h.n
    c[-1] = c[-1].real
    return SpectralField(h.params, h.n, c)


def inverse_transform(s: SpectralField) -> AngularField:
    if not np.all(np.isfinite(s.coeffs)):
        raise ValueError("non-finite spectral coefficients")
    return AngularField(s.params, np.fft.irfft(s.coeffs * s.n, n=s.n))


def _derivative_symbol(s: SpectralField, order: int) -> np.ndarray:
    sym = (1j * s.wavenumbers) ** order
    if order % 2 == 1:
        sym[-1] = 0.0  # odd derivatives of the Nyquist mode vanish on the grid
    return sym


def spectral_derivative(h: AngularField, order: int = 1) -> AngularField:
    s = transform(h)
    return inverse_transform(SpectralField(h.params, h.n, s.coeffs * _derivative_symbol(s, order)))


def elliptic_coeffs(h: AngularField) -> SpectralField:
    """Coefficients of ``H`` solving ``4H - 4 beta H' + (1+beta^2) H'' = h``."""
    s = transform(h)
    k = s.wavenumbers
    mult = h.params.multiplier(k)
    # Nyquist: no odd-derivative part on the grid
    b = h.params.beta
    mult[-1] = 1.0 / (4.0 - (1.0 + b * b) * k[-1] ** 2)
    return SpectralField(h.params, h.n, s.coeffs * mult)


def solve_elliptic(h: AngularField) -> tuple[AngularField, AngularField]:
    """Solve the elliptic problem by Fourier multipliers.

    Returns ``(H, H')``.  The symbol ``4 - 4 i beta n - (1 + beta^2) n^2``
    is bounded below by ``min(4, 4|beta|)`` for beta != 0, so every mode is
    invertible.
    """
    S = elliptic_coeffs(h)
    H = inverse_transform(S)
    Hp = inverse_transform(SpectralField(h.params, h.n, S.coeffs * _derivative_symbol(S, 1)))
    return H, Hp


def apply_elliptic_operator(H: AngularField) -> AngularField:
    """``4H - 4 beta H' + (1+beta^2) H''`` with spectral derivatives."""
    b = H.params.beta
    Hp = spectral_derivative(H, 1)
    Hpp = spectral_derivative(H, 2)
    return AngularField(H.params, 4 * H.values - 4 * b * Hp.values + (1 + b * b) * Hpp.values)


def evaluate(s: SpectralField, phi, derivative: int = 0, chunk: int = 4096) -> np.ndarray:
    """Trigonometric interpolant (or a derivative of it) at arbitrary angles."""
    phi = np.asarray(phi, dtype=float)
    flat = phi.ravel()
    k = s.wavenumbers
    c = s.coeffs * _derivative_symbol(s, derivative)
    weights = np.full(c.size, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    c = c * weights
    out = np.empty(flat.size)
    for start in range(0, flat.size, chunk):
        p = flat[start : start + chunk]
        out[start : start + chunk] = np.real(np.exp(1j * np.outer(p, k)) @ c)
    return out.reshape(phi.shape)


def _two_sided_energy(c: np.ndarray, weight=None) -> float:
    """``sum_{k in Z} w_k |c_k|^2`` from one-sided coefficients."""
    e = np.abs(c) ** 2
    if weight is not None:
        e = e * weight
    return float(e[0] + 2.0 * np.sum(e[1:-1]) + e[-1])


def intensity(h: AngularField) -> float:
    """Full-circle integral of ``h``."""
    return TWO_PI * float(np.mean(h.values))


def dissipation(h: AngularField) -> float:
    """``8 beta int_0^{2 pi} (H')^2``."""
    S = elliptic_coeffs(h)
    k = S.wavenumbers
    w = k**2
    w[-1] = 0.0
    return 8.0 * h.params.beta * TWO_PI * _two_sided_energy(S.coeffs, w)


def lp_norm(h: AngularField, p) -> float:
    a = np.abs(h.values)
    if p == np.inf:
        return float(a.max())
    return float((TWO_PI * np.mean(a**p)) ** (1.0 / p))


def diagnostics(h: AngularField, ps=(1, 2, np.inf), l1_time_integral: float = 0.0) -> Diagnostics:
    return Diagnostics(
        intensity=intensity(h),
        dissipation=dissipation(h),
        lp_norms=[(p, lp_norm(h, p)) for p in ps],
        l1_time_integral=l1_time_integral,
    )


def hminus_norm(h: AngularField, a: float) -> float:
    """``( 2 pi sum_n (1 + n^2)^(-a) |h_n|^2 )^(1/2)`` over physical wavenumbers.

    As ``a -> 0`` it tends to the full-circle L2 norm; ``a`` must be positive.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    s = transform(h)
    w = (1.0 + s.wavenumbers**2) ** (-a)
    return float(np.sqrt(TWO_PI * _two_sided_energy(s.coeffs, w)))


def field_table(h: AngularField) -> np.ndarray:
    """Columns ``theta, h, H, Hprime`` for CSV dumps."""
    H, Hp = solve_elliptic(h)
    return np.column_stack([h.theta, h.values, H.values, Hp.values])
