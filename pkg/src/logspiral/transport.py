"""Time integration of ``h_t + 2 H h_theta = 0`` coupled to the elliptic solve."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as _dc_field
from typing import Optional

import numpy as np

from .field import (
    AngularField,
    SpectralField,
    _derivative_symbol,
    diagnostics,
    elliptic_coeffs,
    hminus_norm,
    inverse_transform,
    lp_norm,
    transform,
)

logger = logging.getLogger(__name__)

METHODS = ("semi_lagrangian", "spectral_rk4")
LIMITERS = ("local", "global", "none")


class CFLError(ValueError):
    def __init__(self, dt, admissible):
        super().__init__(f"dt={dt:.6g} violates the CFL bound; admissible dt <= {admissible:.6g}")
        self.admissible = admissible


class NonFiniteStateError(FloatingPointError):
    """Raised when the state stops being finite; ``trajectory`` holds the
    diagnostics recorded up to that point."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass
class EvolutionConfig:
    t_end: float
    dt: Optional[float] = None  # cap on the adaptive step
    cfl: float = 0.5
    record_every: float = 0.0  # 0 records every step
    method: str = "semi_lagrangian"
    limiter: str = "global"
    guard_factor: float = 50.0
    amplitude_guard: float = 1e6
    hp_guard: float = 1e6
    keep_states: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.record_every < 0:
            raise ValueError("record_every must be non-negative")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.limiter not in LIMITERS:
            raise ValueError(f"limiter must be one of {LIMITERS}")


@dataclass
class Trajectory:
    times: list = _dc_field(default_factory=list)
    states: list = _dc_field(default_factory=list)
    diag: list = _dc_field(default_factory=list)
    hp_sup: list = _dc_field(default_factory=list)
    outcome: str = "completed"
    reason: str = ""
    steps: int = 0

    @property
    def intensity(self) -> np.ndarray:
        return np.array([d.intensity for d in self.diag])

    @property
    def dissipation(self) -> np.ndarray:
        return np.array([d.dissipation for d in self.diag])

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def lp(self, p) -> np.ndarray:
        return np.array([d.lp(p) for d in self.diag])

    @property
    def final(self) -> AngularField:
        return self.states[-1]


# -- interpolation ----------------------------------------------------------


def _cubic_weights(f):
    return (
        -f * (f - 1) * (f - 2) / 6.0,
        (f + 1) * (f - 1) * (f - 2) / 2.0,
        -(f + 1) * f * (f - 2) / 2.0,
        (f + 1) * f * (f - 1) / 6.0,
    )


def periodic_cubic(values: np.ndarray, x: np.ndarray, limiter: str = "none", bounds=None):
    """Four-point Lagrange interpolation of periodic samples at fractional
    grid positions ``x``.

    ``limiter='local'`` clips to the two bracketing samples,
    ``limiter='global'`` clips to ``bounds`` (default: sample min/max) and
    then restores the sum of the unclipped interpolant (see
    :func:`_restore_sum`), so the limiter enforces the bounds without
    changing the discrete integral.
    """
    n = values.size
    i = np.floor(x).astype(np.int64)
    f = x - i
    i = np.mod(i, n)
    im, ip, ipp = np.mod(i - 1, n), np.mod(i + 1, n), np.mod(i + 2, n)
    w = _cubic_weights(f)
    out = w[0] * values[im] + w[1] * values[i] + w[2] * values[ip] + w[3] * values[ipp]
    if limiter == "local":
        lo = np.minimum(values[i], values[ip])
        hi = np.maximum(values[i], values[ip])
        out = np.clip(out, lo, hi)
    elif limiter == "global":
        lo, hi = bounds if bounds is not None else (values.min(), values.max())
        out = _restore_sum(np.clip(out, lo, hi), float(np.sum(out)), lo, hi)
    return out


def _restore_sum(clipped: np.ndarray, target: float, lo: float, hi: float) -> np.ndarray:
    """Add ``target - sum(clipped)`` back, weighted by the room to the bound.

    Clipping an overshoot at a sharpening extremum removes mass that the
    interpolant carried legitimately; spreading it over the samples with
    slack (in proportion to ``hi - v`` or ``v - lo``) keeps every value in
    ``[lo, hi]``.  If the slack cannot absorb the defect the clipped values
    are returned unchanged.
    """
    defect = target - float(np.sum(clipped))
    if defect == 0.0:
        return clipped
    slack = (hi - clipped) if defect > 0 else (clipped - lo)
    room = float(np.sum(slack))
    if room <= abs(defect):
        return clipped
    return clipped + defect * slack / room


# -- single steps -----------------------------------------------------------


def _velocity(h: AngularField) -> tuple[np.ndarray, np.ndarray]:
    """Grid values of ``2H`` and ``H'``."""
    S = elliptic_coeffs(h)
    H = inverse_transform(S).values
    Hp = inverse_transform(SpectralField(h.params, h.n, S.coeffs * _derivative_symbol(S, 1))).values
    return 2.0 * H, Hp


def admissible_dt(h: AngularField, cfl: float) -> float:
    v, _ = _velocity(h)
    vmax = float(np.max(np.abs(v)))
    return np.inf if vmax == 0.0 else cfl * h.dtheta / vmax


def _departure(v: np.ndarray, dt: float, dtheta: float) -> np.ndarray:
    """Midpoint backward characteristic foot, in grid units."""
    n = v.size
    x = np.arange(n, dtype=float)
    c = dt / dtheta
    mid = x - 0.5 * c * v
    return x - c * periodic_cubic(v, mid)


def _sl_step(h: AngularField, dt: float, v0: np.ndarray, limiter: str, bounds) -> AngularField:
    d = h.dtheta
    pred = periodic_cubic(h.values, _departure(v0, dt, d), limiter, bounds)
    v1, _ = _velocity(AngularField(h.params, pred))
    foot = _departure(0.5 * (v0 + v1), dt, d)
    return AngularField(h.params, periodic_cubic(h.values, foot, limiter, bounds))


def _dealias_mask(s: SpectralField) -> np.ndarray:
    k = np.arange(s.coeffs.size)
    return k <= s.n // 3


def _spectral_rhs(h: AngularField) -> np.ndarray:
    v, _ = _velocity(h)
    s = transform(h)
    hx = inverse_transform(SpectralField(h.params, h.n, s.coeffs * _derivative_symbol(s, 1))).values
    r = transform(AngularField(h.params, -v * hx))
    r.coeffs = r.coeffs * _dealias_mask(r)
    return inverse_transform(r).values


def _rk4_step(h: AngularField, dt: float) -> AngularField:
    p = h.params

    def f(u):
        return _spectral_rhs(AngularField(p, u))

    u = h.values
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return AngularField(p, u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def step(
    h: AngularField,
    dt: float,
    method: str = "semi_lagrangian",
    cfl: float = 1.0,
    limiter: str = "global",
    bounds=None,
) -> AngularField:
    """Advance ``h`` by one step of length ``dt``.

    Raises
    ------
    CFLError
        If ``dt > cfl * dtheta / max|2H|``; the admissible step is attached.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    v0, _ = _velocity(h)
    vmax = float(np.max(np.abs(v0)))
    if vmax > 0 and dt > cfl * h.dtheta / vmax * (1 + 1e-12):
        raise CFLError(dt, cfl * h.dtheta / vmax)
    if method == "spectral_rk4":
        return _rk4_step(h, dt)
    return _sl_step(h, dt, v0, limiter, bounds)


# -- runs -------------------------------------------------------------------


def run(h0: AngularField, cfg: EvolutionConfig) -> Trajectory:
    """Integrate from ``h0`` to ``cfg.t_end`` (or until a blow-up guard trips).

    The step is ``cfl * dtheta / max|2H|``, capped by ``cfg.dt`` and shortened
    to land exactly on recording times.  The blow-up guard compares the
    running integral of ``||h||_{L^1}`` with ``guard_factor * ||h0||_{L^1} *
    max(t, 1)``; the amplitude guards compare ``max|h|`` and ``max|H'|`` with
    their initial sizes.
    """
    traj = Trajectory()
    h = h0.copy()
    bounds = (float(h.values.min()), float(h.values.max()))
    l1_0 = lp_norm(h, 1)
    amp0 = max(float(np.max(np.abs(h.values))), np.finfo(float).tiny)
    t = 0.0
    l1_int = 0.0
    l1_prev = l1_0

    v, hp = _velocity(h)
    hp_ref = max(float(np.max(np.abs(hp))), l1_0 / (2 * np.pi), np.finfo(float).tiny)

    def record(time, state, hp_vals):
        traj.times.append(time)
        traj.diag.append(diagnostics(state, l1_time_integral=l1_int))
        traj.hp_sup.append(float(np.max(np.abs(hp_vals))))
        if cfg.keep_states or not traj.states:
            traj.states.append(state.copy())
        else:
            traj.states[-1] = state.copy()

    record(t, h, hp)
    next_rec = cfg.record_every if cfg.record_every > 0 else None
    eps_t = 1e-12 * cfg.t_end

    while t < cfg.t_end - eps_t:
        if traj.steps >= cfg.max_steps:
            traj.outcome, traj.reason = "completed", "max_steps reached"
            break
        vmax = float(np.max(np.abs(v)))
        dt = cfg.cfl * h.dtheta / vmax if vmax > 0 else cfg.t_end
        if cfg.dt is not None:
            dt = min(dt, cfg.dt)
        dt = min(dt, cfg.t_end - t)
        if next_rec is not None:
            dt = min(dt, next_rec - t)

        if cfg.method == "spectral_rk4":
            h = _rk4_step(h, dt)
        else:
            h = _sl_step(h, dt, v, cfg.limiter, bounds)
        t += dt
        traj.steps += 1
        if abs(t - cfg.t_end) <= eps_t:
            t = cfg.t_end

        if not np.all(np.isfinite(h.values)):
            traj.outcome, traj.reason = "blowup_suspected", "non-finite state"
            raise NonFiniteStateError(f"non-finite state at t={t:.6g}", traj)

        v, hp = _velocity(h)
        l1 = lp_norm(h, 1)
        l1_int += 0.5 * dt * (l1 + l1_prev)
        l1_prev = l1

        on_record = next_rec is None or t >= next_rec - eps_t or t >= cfg.t_end
        reason = ""
        if l1_int > cfg.guard_factor * l1_0 * max(t, 1.0):
            reason = "L1 time-integral guard"
        elif np.max(np.abs(h.values)) > cfg.amplitude_guard * amp0:
            reason = "amplitude guard"
        elif np.max(np.abs(hp)) > cfg.hp_guard * hp_ref:
            reason = "H' guard"
        if on_record or reason:
            record(t, h, hp)
            if next_rec is not None and on_record:
                next_rec += cfg.record_every
        if reason:
            traj.outcome, traj.reason = "blowup_suspected", reason
            logger.info("blow-up guard tripped at t=%.6g (%s)", t, reason)
            return traj

    vals = h.values
    spread = float(vals.max() - vals.min())
    if spread <= 1e-10 * max(1.0, float(np.max(np.abs(vals)))):
        traj.outcome = "homogenized"
    return traj


@dataclass
class LongTimeClass:
    kind: str  # converged | finite_blowup | infinite_blowup | undecided
    I_plus: Optional[float] = None
    residual: Optional[float] = None


def classify_longtime(
    traj: Trajectory,
    a: float = 1.0,
    tol: float = 1e-2,
    growth_factor: float = 1e3,
    p: float = 2,
) -> LongTimeClass:
    """Sort a trajectory into one of the long-time scenarios.

    ``converged`` when ``||h - I/(2 pi)||_{H^-a} < tol`` at the final time
    (``I`` the final intensity); ``finite_blowup`` when the run stopped on a
    guard; ``infinite_blowup`` when ``||h||_{L^p}`` grew by more than
    ``growth_factor`` without tripping a guard; ``undecided`` otherwise.
    """
    if traj.outcome == "blowup_suspected":
        return LongTimeClass("finite_blowup")
    final = traj.states[-1]
    I_plus = traj.diag[-1].intensity
    res = hminus_norm(final - I_plus / (2 * np.pi), a)
    if res < tol:
        return LongTimeClass("converged", I_plus, res)
    lp = traj.lp(p) if any(q == p for q, _ in traj.diag[0].lp_norms) else None
    if lp is not None and lp[0] > 0 and lp[-1] > growth_factor * lp[0]:
        return LongTimeClass("infinite_blowup", None, res)
    return LongTimeClass("undecided", I_plus, res)
