"""Logarithmic vortex sheets: finitely many atoms ``I_j delta(theta - theta_j)``.

For an m-fold symmetric sheet only the atoms in the fundamental domain are
listed; each stands for its orbit of m rotated copies and interacts through
``K^m``.  Totals over the full circle therefore carry a factor m.
"""
from __future__ import annotations

from dataclasses import dataclass, field as _dc_field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .kernel import (
    SpiralParams,
    kernel_boundary,
    periodic_quad,
    reduce_angle,
    _closed_form,
)


@dataclass
class DiracConfig:
    params: SpiralParams
    intensities: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        self.intensities = np.atleast_1d(np.asarray(self.intensities, dtype=float)).copy()
        self.angles = np.atleast_1d(np.asarray(self.angles, dtype=float)).copy()
        if self.intensities.shape != self.angles.shape or self.intensities.ndim != 1:
            raise ValueError("intensities and angles must be 1-D arrays of equal length")
        if self.intensities.size == 0:
            raise ValueError("a Dirac configuration needs at least one atom")
        if not (np.all(np.isfinite(self.intensities)) and np.all(np.isfinite(self.angles))):
            raise ValueError("atoms must be finite")
        if self.size > 1 and min_gap(self.params, self.angles) <= 0.0:
            raise ValueError("atoms must sit at distinct angles (mod 2pi/m)")

    @classmethod
    def from_pairs(cls, params: SpiralParams, pairs) -> "DiracConfig":
        pairs = list(pairs)
        return cls(params, [p[0] for p in pairs], [p[1] for p in pairs])

    @property
    def size(self) -> int:
        return self.intensities.size

    @property
    def total_intensity(self) -> float:
        """Full-circle intensity ``m * sum_j I_j``."""
        return self.params.m * float(np.sum(self.intensities))

    @property
    def mass(self) -> float:
        return float(np.sum(np.abs(self.intensities)))


def min_gap(params: SpiralParams, angles) -> float:
    """Smallest circular distance between atoms on the fundamental domain."""
    a = np.sort(reduce_angle(params, angles))
    if a.size < 2:
        return params.period
    gaps = np.diff(np.concatenate([a, [a[0] + params.period]]))
    return float(gaps.min())


def _interaction(params: SpiralParams, angles):
    d = angles[:, None] - angles[None, :]
    K = _closed_form(params, d, 0)
    Kp = _closed_form(params, d, 1)
    bd = kernel_boundary(params)
    np.fill_diagonal(K, bd.k0)
    np.fill_diagonal(Kp, bd.kp0)
    return K, Kp


def velocities(cfg: DiracConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(H, H')`` at every atom; self-interaction uses the averaged ``K'(0)``."""
    if cfg.size > 1 and min_gap(cfg.params, cfg.angles) <= 0.0:
        raise ValueError("coincident atoms")
    K, Kp = _interaction(cfg.params, cfg.angles)
    return K @ cfg.intensities, Kp @ cfg.intensities


def sheet_velocity(cfg: DiracConfig, j: int) -> tuple[float, float]:
    H, Hp = velocities(cfg)
    return float(H[j]), float(Hp[j])


def rhs(cfg: DiracConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(dI/dt, dtheta/dt) = (2 H'(theta_j) I_j, 2 H(theta_j))``."""
    H, Hp = velocities(cfg)
    return 2.0 * Hp * cfg.intensities, 2.0 * H


class IntensityRate(NamedTuple):
    ode: float  # m * sum_j dI_j/dt
    identity: float  # m * sum_{j,l} I_j I_l [K'(theta_j - theta_l) + K'(theta_l - theta_j)]
    dissipation: Optional[float] = None  # -8 beta int_0^{2 pi} (H')^2 by piecewise quadrature


def total_intensity_rate(cfg: DiracConfig, tol: float = 1e-12, quadrature: bool = True) -> IntensityRate:
    """Full-circle intensity rate computed by independent routes.

    ``ode`` sums the atom equations, ``identity`` is the symmetrised double
    sum over pairs, and ``dissipation`` (when ``quadrature``) integrates
    ``-8 beta (H')^2`` with ``H' = sum_l I_l K'(theta - theta_l)``, splitting
    panels at the atoms where ``H'`` jumps.
    """
    p = cfg.params
    dI, _ = rhs(cfg)
    ode_rate = p.m * float(np.sum(dI))
    I, th = cfg.intensities, cfg.angles
    _, Kp = _interaction(p, th)
    ident = p.m * float(I @ (Kp + Kp.T) @ I)
    if not quadrature:
        return IntensityRate(ode_rate, ident)

    def hp_sq(s):
        acc = np.zeros_like(s)
        for Il, tl in zip(I, th):
            acc = acc + Il * _closed_form(p, s - tl, 1)
        return acc**2

    integral = periodic_quad(hp_sq, p.period, reduce_angle(p, th), tol=tol)
    return IntensityRate(ode_rate, ident, -8.0 * p.beta * p.m * integral)


# -- integration ------------------------------------------------------------


@dataclass
class DiracEvent:
    kind: str  # collision | blowup | overflow | stiff
    time: float
    blowup_time: Optional[float] = None
    detail: str = ""


@dataclass
class DiracTrajectory:
    params: SpiralParams
    t: np.ndarray
    intensities: np.ndarray  # (T, N)
    angles: np.ndarray  # (T, N), unwrapped
    event: Optional[DiracEvent] = None
    sol: object = _dc_field(default=None, repr=False)

    @property
    def total_intensity(self) -> np.ndarray:
        return self.params.m * self.intensities.sum(axis=1)

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Dense-output state ``(I, theta)`` at time(s) ``t``."""
        y = self.sol(t)
        n = self.intensities.shape[1]
        return y[:n], y[n:]

    def config_at(self, t: float) -> DiracConfig:
        I, th = self.at(t)
        return DiracConfig(self.params, I, th)

    @property
    def blew_up(self) -> bool:
        return self.event is not None and self.event.kind in ("blowup", "overflow")


def _fit_blowup_time(t, total):
    """Zero of the affine fit of ``1/|sum I|`` against t."""
    inv = 1.0 / np.abs(total)
    slope, intercept = np.polyfit(t, inv, 1)
    if slope >= 0:
        return None
    return float(-intercept / slope)


def integrate(
    cfg0: DiracConfig,
    t_end: float,
    rtol: float = 1e-10,
    atol: Optional[float] = None,
    t0: float = 0.0,
    gap_tol: float = 1e-6,
    escape_factor: float = 1e4,
    overflow: float = 1e12,
    method: str = "RK45",
) -> DiracTrajectory:
    """Integrate the atom ODEs with an embedded Runge-Kutta pair.

    Terminal events
    ---------------
    collision  minimum gap below ``gap_tol``
    blowup     ``beta * sum I < 0`` with ``|sum I| > escape_factor * sum |I_0|``;
               the negative sign certifies escape through the Riccati bound
               ``d/dt sum I <= -c (sum I)^2``
    overflow   ``max |I_j| > overflow * sum |I_0|``
    stiff      the step size underflowed

    For blow-up events ``blowup_time`` comes from an affine fit of
    ``1/|sum I|`` over the final stretch of the run.
    """
    p = cfg0.params
    n = cfg0.size
    scale = max(cfg0.mass, np.finfo(float).tiny)
    sgn = np.sign(p.beta)
    if atol is None:
        atol = rtol * scale * 1e-3

    def f(t, y):
        I, th = y[:n], y[n:]
        K, Kp = _interaction(p, th)
        return np.concatenate([2.0 * (Kp @ I) * I, 2.0 * (K @ I)])

    def ev_collision(t, y):
        return min_gap(p, y[n:]) - gap_tol

    def ev_blowup(t, y):
        return sgn * np.sum(y[:n]) + escape_factor * scale

    def ev_overflow(t, y):
        return overflow * scale - np.max(np.abs(y[:n]))

    events = [ev_blowup, ev_overflow]
    if n > 1:
        events.append(ev_collision)
    for e in events:
        e.terminal = True
    ev_collision.direction = -1
    ev_blowup.direction = -1
    ev_overflow.direction = -1

    y0 = np.concatenate([cfg0.intensities, cfg0.angles])
    sol = solve_ivp(
        f, (t0, t_end), y0, method=method,
        rtol=rtol, atol=atol, dense_output=True, events=events,
    )
    traj = DiracTrajectory(p, sol.t, sol.y[:n].T.copy(), sol.y[n:].T.copy(), sol=sol.sol)

    if sol.status == -1:
        traj.event = DiracEvent("stiff", float(sol.t[-1]), detail=sol.message)
    elif sol.status == 1:
        names = ["blowup", "overflow", "collision"][: len(events)]
        hits = [(te[0], name) for te, name in zip(sol.t_events, names) if len(te)]
        te, kind = min(hits)
        traj.event = DiracEvent(kind, float(te))
        if kind in ("blowup", "overflow"):
            traj.event.blowup_time = _estimate_blowup(traj, sgn)
    return traj


def _estimate_blowup(traj: DiracTrajectory, sgn: float) -> Optional[float]:
    t_e = traj.t[-1]
    total = traj.intensities.sum(axis=1)
    s_e = abs(total[-1])
    ok = (sgn * total < 0) & (np.abs(total) >= s_e / 100.0)
    if not np.any(ok):
        return None
    t_a = traj.t[np.argmax(ok)]
    ts = np.linspace(t_a, t_e, 64)
    I, _ = traj.at(ts)
    return _fit_blowup_time(ts, I.sum(axis=0))


def decay_exponent(traj: DiracTrajectory, t_from: float, t_to: Optional[float] = None) -> float:
    """Least-squares slope of ``log(sum I)`` against ``log t``."""
    t_to = traj.t[-1] if t_to is None else t_to
    if not (traj.t[0] < t_from < t_to <= traj.t[-1]):
        raise ValueError("fit window must lie inside the integrated interval")
    ts = np.geomspace(t_from, t_to, 50)
    I, _ = traj.at(ts)
    total = I.sum(axis=0)
    if np.any(total <= 0):
        raise ValueError("total intensity must stay positive for a power-law fit")
    return float(np.polyfit(np.log(ts), np.log(total), 1)[0])


def random_config(
    rng: np.random.Generator,
    params: SpiralParams,
    n_atoms: int,
    sign: str = "any",
    min_gap_frac: float = 0.05,
) -> DiracConfig:
    """Random atoms with intensities in [-1, 1] and well-separated angles.

    ``sign='positive'`` draws |I|; ``sign='nonpositive'`` flips the draw so
    that ``beta * sum I <= 0``.
    """
    P = params.period
    while True:
        th = np.sort(rng.uniform(0.0, P, n_atoms))
        if n_atoms == 1 or min_gap(params, th) >= min_gap_frac * P:
            break
    I = rng.uniform(-1.0, 1.0, n_atoms)
    if sign == "positive":
        I = np.abs(I) * np.sign(params.beta)
    elif sign == "nonpositive":
        if params.beta * I.sum() > 0:
            I = -I
    elif sign != "any":
        raise ValueError(f"unknown sign option {sign!r}")
    return DiracConfig(params, I, th)
