"""Planar fields generated by an angular profile.

With ``phi = theta - beta ln r`` the vorticity is ``h(phi)``, the stream
function ``r^2 H(phi)``, the velocity ``u^r = -r H'(phi)``,
``u^theta = r (2H - beta H')(phi)`` and the pressure ``r^2 P(phi)``.  The
origin is excluded everywhere (the fields are only Lipschitz there).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as _dc_field
from typing import Sequence

import numpy as np

from .dirac import DiracConfig
from .field import (
    AngularField,
    elliptic_coeffs,
    evaluate,
    intensity,
    solve_elliptic,
    spectral_derivative,
    transform,
)
from .kernel import TWO_PI

FIELDS = ("omega", "u_r", "u_theta", "psi")


def _check_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("radii must be positive (the origin is excluded)")
    return r


class SpiralFlow:
    """Point evaluation of the planar fields generated by ``h``."""

    def __init__(self, h: AngularField):
        self.h = h
        self.beta = h.params.beta
        self._hs = transform(h)
        self._Hs = elliptic_coeffs(h)

    def phase(self, r, theta):
        return np.asarray(theta, dtype=float) - self.beta * np.log(_check_radius(r))

    def omega(self, r, theta):
        return evaluate(self._hs, self.phase(r, theta))

    def psi(self, r, theta):
        r = _check_radius(r)
        return r**2 * evaluate(self._Hs, self.phase(r, theta))

    def velocity(self, r, theta):
        r = _check_radius(r)
        phi = self.phase(r, theta)
        H = evaluate(self._Hs, phi)
        Hp = evaluate(self._Hs, phi, derivative=1)
        return -r * Hp, r * (2.0 * H - self.beta * Hp)

    def fields(self, r, theta, names=FIELDS) -> dict:
        out = {}
        if "omega" in names:
            out["omega"] = self.omega(r, theta)
        if "psi" in names:
            out["psi"] = self.psi(r, theta)
        if "u_r" in names or "u_theta" in names:
            ur, ut = self.velocity(r, theta)
            if "u_r" in names:
                out["u_r"] = ur
            if "u_theta" in names:
                out["u_theta"] = ut
        return out


@dataclass
class PlaneGrid:
    r: np.ndarray  # (n_r,) log-uniform
    theta: np.ndarray  # (n_theta,) uniform on [0, 2 pi)
    values: dict = _dc_field(default_factory=dict)  # name -> (n_r, n_theta)

    @property
    def r_min(self) -> float:
        return float(self.r[0])

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def n_r(self) -> int:
        return self.r.size

    @property
    def n_theta(self) -> int:
        return self.theta.size

    def cartesian(self):
        R, T = np.meshgrid(self.r, self.theta, indexing="ij")
        return R * np.cos(T), R * np.sin(T)

    def table(self, names=None) -> tuple[list, np.ndarray]:
        """Long-format rows ``r, theta, <fields...>``."""
        names = [n for n in FIELDS if n in self.values] if names is None else list(names)
        R, T = np.meshgrid(self.r, self.theta, indexing="ij")
        cols = [R.ravel(), T.ravel()] + [self.values[n].ravel() for n in names]
        return ["r", "theta"] + names, np.column_stack(cols)


def sample_plane(
    h: AngularField,
    r_min: float,
    r_max: float,
    n_r: int,
    n_theta: int,
    fields: Sequence[str] = FIELDS,
    workers: int = 1,
) -> PlaneGrid:
    """Sample the planar fields on a log-uniform polar grid.

    Rows (fixed r) are independent and are split across ``workers`` threads.
    """
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    if n_r < 2 or n_theta < 1:
        raise ValueError("need n_r >= 2 and n_theta >= 1")
    unknown = set(fields) - set(FIELDS)
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}; choose from {FIELDS}")
    flow = SpiralFlow(h)
    r = np.geomspace(r_min, r_max, n_r)
    theta = np.arange(n_theta) * (TWO_PI / n_theta)

    def row(i):
        return flow.fields(np.full(n_theta, r[i]), theta, fields)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, range(n_r)))
    else:
        rows = [row(i) for i in range(n_r)]
    values = {name: np.vstack([rw[name] for rw in rows]) for name in fields}
    return PlaneGrid(r, theta, values)


def circulation(h: AngularField, R: float) -> float:
    """``Gamma(R) = (R^2 / 2) int_0^{2 pi} h``."""
    if not R > 0:
        raise ValueError("R must be positive")
    return 0.5 * R * R * intensity(h)


# -- pressure ---------------------------------------------------------------


def _K(h: AngularField, f: np.ndarray) -> np.ndarray:
    return solve_elliptic(AngularField(h.params, f))[0].values


def _D(h: AngularField, f: np.ndarray, order: int = 1) -> np.ndarray:
    return spectral_derivative(AngularField(h.params, f), order).values


def pressure_profile(h: AngularField, formula: str = "euler") -> AngularField:
    """Angular pressure profile ``P`` with ``p = r^2 P(theta - beta ln r)``.

    ``formula='euler'`` (default) inverts the pressure Poisson equation.
    Under the ansatz, ``Laplacian(r^2 P) = r^2 (4P - 4 beta P' + (1+beta^2) P'')``,
    so ``P = K[-tr((grad u)^2)]`` with
    ``-tr((grad u)^2) = h^2/2 - 2 (beta H'' - H')^2 - (2 beta H' + (1-beta^2) H'')^2 / 2``.
    The elliptic operator is invertible for beta != 0, so ``P`` is unique: a
    constant added to ``P`` would add ``c r^2`` to ``p``, which is not a gauge.

    ``formula='displayed'`` evaluates the reduced closed form in which the
    ``beta (1+beta^2) H' H''`` product has been cancelled,
    ``2P = -2 beta K(8 beta - 3(1+beta^2) d)[H'^2] + 4 (1+beta^2) K(3 - beta d)[H'^2]
    - H' (2 beta H - beta^2 H')``.  It omits the polar curvature terms of
    the momentum equation and does not reproduce the Euler pressure (for
    ``h = c`` it returns 0, whereas the rigid rotation has ``P = c^2/8``); it
    is kept for reference only.
    """
    b = h.params.beta
    H, Hp = solve_elliptic(h)
    Hp_v = Hp.values
    if formula == "euler":
        Hpp = _D(h, Hp_v)
        q = 0.5 * h.values**2 - 2.0 * (b * Hpp - Hp_v) ** 2 - 0.5 * (2 * b * Hp_v + (1 - b * b) * Hpp) ** 2
        return AngularField(h.params, _K(h, q))
    if formula == "displayed":
        q = Hp_v**2
        dq = _D(h, q)
        two_p = (
            -2.0 * b * _K(h, 8 * b * q - 3 * (1 + b * b) * dq)
            + (1 + b * b) * 4.0 * _K(h, 3 * q - b * dq)
            - Hp_v * (2 * b * H.values - b * b * Hp_v)
        )
        return AngularField(h.params, 0.5 * two_p)
    raise ValueError("formula must be 'euler' or 'displayed'")


def pressure_momentum(h: AngularField) -> AngularField:
    """``P`` from the radial-plus-beta-angular momentum balance.

    ``2 r P = -D/Dt (u^r + beta u^theta) + (u^theta / r)(u^theta - beta u^r)``
    with ``d_t H = K[-2 H h']``.  Independent of :func:`pressure_profile`
    (uses the time derivative instead of the Poisson equation); the two must
    agree for smooth h.
    """
    b = h.params.beta
    H, Hp = solve_elliptic(h)
    Hv, Hpv = H.values, Hp.values
    Ht = _K(h, -2.0 * Hv * _D(h, h.values))
    Hpt = _D(h, Ht)
    a = 2 * b * Hv - (1 + b * b) * Hpv
    ap = _D(h, a)
    material = (2 * b * Ht - (1 + b * b) * Hpt) - Hpv * (a - b * ap) + (2 * Hv - b * Hpv) * ap
    return AngularField(h.params, 0.5 * (-material + 2.0 * Hv * (2.0 * Hv - b * Hpv)))


# -- spiral curves ----------------------------------------------------------


@dataclass
class SpiralCurve:
    atom: int
    copy: int  # rotation index k of the m-fold orbit
    r: np.ndarray
    theta: np.ndarray

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.r * np.cos(self.theta), self.r * np.sin(self.theta)])


def spiral_support_curves(cfg: DiracConfig, r_range: tuple, n: int = 200) -> list:
    """Polylines ``theta = theta_j + 2 pi k / m + beta ln r`` over ``r_range``.

    The returned angles are not reduced mod 2 pi, so each curve is a
    continuous polyline.
    """
    r0, r1 = r_range
    if not (0 < r0 < r1):
        raise ValueError("need 0 < r_min < r_max")
    r = np.geomspace(r0, r1, n)
    b, m = cfg.params.beta, cfg.params.m
    curves = []
    for j, th in enumerate(cfg.angles):
        for k in range(m):
            curves.append(SpiralCurve(j, k, r, th + TWO_PI * k / m + b * np.log(r)))
    return curves


def prandtl_curve(g: float, mu: float, beta: float, theta0: float, t: float, theta) -> np.ndarray:
    """``Z(t, theta) = t^mu exp(i theta + (theta - theta0)/beta)`` as complex points."""
    theta = np.asarray(theta, dtype=float)
    return t**mu * np.exp(1j * theta + (theta - theta0) / beta)


# -- consistency checks ------------------------------------------------------


def _fd4(f, x, dx):
    return (-f(x + 2 * dx) + 8 * f(x + dx) - 8 * f(x - dx) + f(x - 2 * dx)) / (12 * dx)


@dataclass
class PlaneCheck:
    divergence: float  # max |d_r(r u^r) + d_theta u^theta| / scale
    vorticity: float  # max |curl u - omega| / max |omega|
    scale: float


def plane_checks(h: AngularField, r, theta, step: float = 1e-3) -> PlaneCheck:
    """Fourth-order finite-difference divergence and curl at sample points.

    ``step`` is relative in r and absolute in theta.
    """
    flow = SpiralFlow(h)
    r = _check_radius(r)
    theta = np.asarray(theta, dtype=float)

    def ur_r(rr):
        return rr * flow.velocity(rr, theta)[0]

    def ut_r(rr):
        return rr * flow.velocity(rr, theta)[1]

    def ut_t(tt):
        return flow.velocity(r, tt)[1]

    def ur_t(tt):
        return flow.velocity(r, tt)[0]

    dr = step * r
    div = _fd4(ur_r, r, dr) + _fd4(ut_t, theta, step)
    curl = (_fd4(ut_r, r, dr) - _fd4(ur_t, theta, step)) / r
    om = flow.omega(r, theta)
    ur, ut = flow.velocity(r, theta)
    scale = max(float(np.max(np.abs(ur) + np.abs(ut))), np.finfo(float).tiny)
    om_scale = max(float(np.max(np.abs(om))), np.finfo(float).tiny)
    return PlaneCheck(
        float(np.max(np.abs(div)) / scale),
        float(np.max(np.abs(curl - om)) / om_scale),
        scale,
    )
