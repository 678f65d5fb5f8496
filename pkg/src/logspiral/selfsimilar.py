"""Self-similar logarithmic vortex sheets.

A self-similar sheet has ``I_j(t) = A_j / t`` and fixed angle gaps.  Plugging
this ansatz into the atom ODEs gives an algebraic system: M amplitude
equations ``-1 = 2 sum_l A_l K'(theta_j - theta_l)`` and M-1 equal-drift
equations.  For two atoms the system collapses to the scalar residual
``F(beta, d)``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from .kernel import TWO_PI, SpiralParams, _closed_form, kernel_boundary, reduce_angle

PI_EXCLUSION = 1e-6


@dataclass
class SelfSimilarSolution:
    params: SpiralParams
    amplitudes: np.ndarray
    positions: np.ndarray  # gauge: positions[0] == 0
    residual_norm: float
    mu: float  # common log-rotation rate: theta_j(t) = theta_j(1) + mu ln t
    converged: bool = True
    singular: bool = False
    iterations: int = 0

    @property
    def gaps(self) -> np.ndarray:
        """Cumulative offsets ``theta_j - theta_1`` for j >= 2."""
        return self.positions[1:] - self.positions[0]

    def dirac_config(self, t: float = 1.0):
        from .dirac import DiracConfig

        return DiracConfig(self.params, self.amplitudes / t, self.positions + self.mu * np.log(t))


def _require_m1(params: SpiralParams):
    if params.m != 1:
        raise ValueError("non-symmetric self-similar branches are defined for m = 1")


# -- m-fold closed form -----------------------------------------------------


def mfold_pole(I0: float, params: SpiralParams) -> Optional[float]:
    """Blow-up time ``1/(2 (K^m)'(0) I0)`` when it is positive, else None."""
    c = 2.0 * kernel_boundary(params).kp0 * I0
    return 1.0 / c if c > 0 else None


def mfold_closed_form(I0: float, t, params: SpiralParams):
    """Amplitude and angular shift of a single m-fold orbit.

    ``I(t) = I0 / (1 - 2 K'(0) I0 t)`` and
    ``theta(t) - theta(0) = -(K(0)/K'(0)) ln(1 - 2 K'(0) I0 t)``.
    """
    bd = kernel_boundary(params)
    t = np.asarray(t, dtype=float)
    den = 1.0 - 2.0 * bd.kp0 * I0 * t
    if np.any(den <= 0):
        raise ValueError(f"t reaches the pole at T* = {mfold_pole(I0, params)!r}")
    I = I0 / den
    shift = -(bd.k0 / bd.kp0) * np.log(den)
    if I.ndim == 0:
        return float(I), float(shift)
    return I, shift


# -- two atoms --------------------------------------------------------------


@dataclass
class TwoDiracResidual:
    F: float
    A1: float
    A2: float
    solvable: bool


def _kvals(params, d):
    k0 = kernel_boundary(params)
    K = lambda x: _closed_form(params, x, 0)  # noqa: E731
    Kp = lambda x: _closed_form(params, x, 1)  # noqa: E731
    return k0.k0, k0.kp0, K(d), K(-d), Kp(d), Kp(-d)


def two_dirac_F(params: SpiralParams, d):
    """Vectorised ``F(beta, d)``; ``K(-d)`` means ``K(2 pi - d)``."""
    _require_m1(params)
    d = np.asarray(d, dtype=float)
    k0, kp0, Kd, Kmd, Kpd, Kpmd = _kvals(params, d)
    return k0 * (Kpmd - Kpd) + Kd * (kp0 - Kpmd) + Kmd * (Kpd - kp0)


def two_dirac_residual(params: SpiralParams, d: float) -> TwoDiracResidual:
    """``F(beta, d)`` and the amplitudes from the 2x2 amplitude system.

    The gap is ``d = theta_1 - theta_2``: in the gauge ``theta_1 = 0`` used by
    :func:`general_m_residual` the second atom sits at ``-d``.
    """
    _require_m1(params)
    if not (0.0 < d <= np.pi):
        raise ValueError("d must lie in (0, pi]")
    k0, kp0, Kd, Kmd, Kpd, Kpmd = _kvals(params, d)
    F = float(k0 * (Kpmd - Kpd) + Kd * (kp0 - Kpmd) + Kmd * (Kpd - kp0))
    M = 2.0 * np.array([[kp0, Kpd], [Kpmd, kp0]])
    det = np.linalg.det(M)
    if abs(det) <= 1e-14 * np.abs(M).max() ** 2:
        return TwoDiracResidual(F, np.nan, np.nan, False)
    A1, A2 = np.linalg.solve(M, [-1.0, -1.0])
    return TwoDiracResidual(F, float(A1), float(A2), True)


@dataclass
class Root:
    d: float
    A1: float
    A2: float
    F: float


def find_roots(
    params: SpiralParams,
    d_range: tuple = (1e-3, np.pi),
    n_seeds: int = 2000,
    include_pi: bool = False,
    xtol: float = 1e-12,
) -> list[Root]:
    """Sign-change bracketing of ``F(beta, .)`` followed by bisection.

    A window of width ``PI_EXCLUSION`` below ``d = pi`` is removed, since
    ``d = pi`` is always a root; pass ``include_pi=True`` to append it.
    """
    _require_m1(params)
    lo, hi = d_range
    hi_search = min(hi, np.pi - PI_EXCLUSION)
    ds = np.linspace(lo, hi_search, n_seeds)
    F = two_dirac_F(params, ds)
    f = lambda x: float(two_dirac_F(params, x))  # noqa: E731
    roots = []
    for i in range(ds.size - 1):
        if F[i] == 0.0:
            roots.append(ds[i])
        elif F[i] * F[i + 1] < 0:
            roots.append(bisect(f, ds[i], ds[i + 1], xtol=xtol, maxiter=200))
    if include_pi and hi >= np.pi:
        roots.append(np.pi)
    out = []
    for d in roots:
        r = two_dirac_residual(params, d)
        out.append(Root(float(d), r.A1, r.A2, r.F))
    return out


@dataclass
class BranchRow:
    beta: float
    n_roots: int
    d_root: float  # continued branch, nan when the branch has ended
    A1: float
    A2: float
    residual: float


@dataclass
class BifurcationReport:
    rows: list
    beta0_est: Optional[float]  # largest grid beta with an interior root
    beta1_est: Optional[float]  # smallest grid beta without one


def _continue_root(beta_from, d_from, beta_to, window=0.05, factor=1.1, min_ratio=1e-6):
    """Follow a root of F from ``beta_from`` to ``beta_to`` by multiplicative
    steps (at most ``factor``), halving the log-step when local bracketing fails."""
    sgn = np.sign(beta_to)
    b, d = abs(beta_from), d_from
    target = abs(beta_to)
    direction = 1.0 if target >= b else -1.0
    log_step = np.log(factor)
    while (target - b) * direction > 0:
        step = min(log_step, abs(np.log(target / b)))
        while True:
            bn = b * np.exp(direction * step)
            p = SpiralParams(sgn * bn, 1)
            a, c = max(d - window, 1e-9), min(d + window, np.pi - PI_EXCLUSION)
            fa, fc = float(two_dirac_F(p, a)), float(two_dirac_F(p, c))
            if fa * fc < 0:
                d = bisect(lambda x: float(two_dirac_F(p, x)), a, c, xtol=1e-12)
                b = bn
                break
            step *= 0.5
            if step < min_ratio:
                return None
    return d


def bifurcation_scan(
    beta_grid: Sequence[float],
    n_seeds: int = 2000,
    workers: int = 1,
) -> BifurcationReport:
    """Interior-root count of ``F`` per beta plus the continued branch ``d(beta)``.

    The branch starts at the first grid point with an interior root (the one
    closest to ``pi/2``) and is followed across the grid by continuation.
    """
    betas = [float(b) for b in beta_grid]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            found = list(ex.map(lambda b: find_roots(SpiralParams(b, 1), n_seeds=n_seeds), betas))
    else:
        found = [find_roots(SpiralParams(b, 1), n_seeds=n_seeds) for b in betas]

    rows = []
    d_prev, b_prev = None, None
    for b, roots in zip(betas, found):
        d = np.nan
        if d_prev is None:
            if roots:
                d = min(roots, key=lambda r: abs(r.d - np.pi / 2)).d
        else:
            cont = _continue_root(b_prev, d_prev, b)
            d = np.nan if cont is None else cont
        if np.isfinite(d):
            r = two_dirac_residual(SpiralParams(b, 1), d)
            rows.append(BranchRow(b, len(roots), d, r.A1, r.A2, abs(r.F)))
            d_prev, b_prev = d, b
        else:
            rows.append(BranchRow(b, len(roots), np.nan, np.nan, np.nan, np.nan))
            if d_prev is not None:
                d_prev = None  # branch ended; restart only from a fresh root
    with_root = [r.beta for r in rows if r.n_roots > 0]
    without = [r.beta for r in rows if r.n_roots == 0]
    return BifurcationReport(
        rows,
        max(with_root) if with_root else None,
        min(without) if without else None,
    )


# -- general M --------------------------------------------------------------


def _matrices(params, theta):
    d = theta[:, None] - theta[None, :]
    bd = kernel_boundary(params)
    K = _closed_form(params, d, 0)
    Kp = _closed_form(params, d, 1)
    Kpp = _closed_form(params, d, 2)
    np.fill_diagonal(K, bd.k0)
    np.fill_diagonal(Kp, bd.kp0)
    np.fill_diagonal(Kpp, 0.0)  # never used: diagonal terms do not depend on positions
    return K, Kp, Kpp


def general_m_residual(params: SpiralParams, amplitudes, positions) -> np.ndarray:
    """Residual of the M-atom self-similar system (length ``2M - 1``).

    Entries ``0..M-1``: ``1 + 2 sum_l A_l K'(theta_j - theta_l)``.
    Entries ``M..2M-2``: ``sum_l A_l K(theta_j - theta_l) - sum_l A_l K(theta_1 - theta_l)``.
    """
    _require_m1(params)
    A = np.asarray(amplitudes, dtype=float)
    th = np.asarray(positions, dtype=float)
    if A.size < 2 or A.shape != th.shape:
        raise ValueError("need M >= 2 amplitudes and positions of equal length")
    if np.unique(np.round(reduce_angle(params, th), 14)).size != th.size:
        raise ValueError("positions must be distinct")
    K, Kp, _ = _matrices(params, th)
    amp = 1.0 + 2.0 * Kp @ A
    drift = K @ A
    return np.concatenate([amp, drift[1:] - drift[0]])


def _jacobian(params, A, th):
    """Jacobian of the residual in ``(A_1..A_M, theta_2..theta_M)``."""
    M = A.size
    K, Kp, Kpp = _matrices(params, th)
    J = np.zeros((2 * M - 1, 2 * M - 1))
    # d/dA
    J[:M, :M] = 2.0 * Kp
    J[M:, :M] = K[1:] - K[0]
    # d/dtheta_k, k >= 1 (theta_1 fixed by the gauge)
    # amplitude rows: d/dtheta_k [2 sum_l A_l K'(theta_j - theta_l)]
    dA = 2.0 * (np.diag(Kpp @ A) - Kpp * A[None, :])
    dK = np.diag(Kp @ A) - Kp * A[None, :]
    J[:M, M:] = dA[:, 1:]
    J[M:, M:] = (dK[1:] - dK[0])[:, 1:]
    return J


def _drift(params, A, th) -> float:
    K, _, _ = _matrices(params, th)
    return float(2.0 * (K @ A)[0])


def amplitudes_for(params: SpiralParams, positions) -> np.ndarray:
    """Least-squares amplitudes of the linear amplitude equations at fixed positions."""
    th = np.asarray(positions, dtype=float)
    _, Kp, _ = _matrices(params, th)
    return np.linalg.lstsq(2.0 * Kp, -np.ones(th.size), rcond=None)[0]


def _min_separation(theta) -> float:
    t = np.sort(np.mod(theta, TWO_PI))
    gaps = np.diff(np.concatenate([t, [t[0] + TWO_PI]]))
    return float(gaps.min())


def solve_general_m(
    params: SpiralParams,
    positions0,
    amplitudes0=None,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> SelfSimilarSolution:
    """Damped Newton solve of the M-atom system with the gauge ``theta_1 = 0``.

    A limit in which two positions coincide (mod ``2 pi``) is a merged
    configuration with fewer atoms, not an M-atom solution; it is reported
    with ``converged=False`` and ``singular=True``.
    """
    _require_m1(params)
    th = np.asarray(positions0, dtype=float) - float(positions0[0])
    A = amplitudes_for(params, th) if amplitudes0 is None else np.asarray(amplitudes0, dtype=float).copy()
    M = th.size
    r = general_m_residual(params, A, th)
    norm = float(np.linalg.norm(r, np.inf))
    it = 0
    singular = False
    while norm > tol and it < max_iter:
        it += 1
        J = _jacobian(params, A, th)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            singular = True
            break
        delta = np.linalg.solve(J, -r)
        lam = 1.0
        while lam > 1e-8:
            A_new = A + lam * delta[:M]
            th_new = th.copy()
            th_new[1:] += lam * delta[M:]
            try:
                r_new = general_m_residual(params, A_new, th_new)
            except ValueError:
                r_new = None
            if r_new is not None and np.linalg.norm(r_new, np.inf) < (1 - 1e-4 * lam) * norm:
                break
            lam *= 0.5
        else:
            break
        A, th, r = A_new, th_new, r_new
        norm = float(np.linalg.norm(r, np.inf))
    merged = M > 1 and _min_separation(th) < 1e-6
    return SelfSimilarSolution(
        params,
        A,
        th,
        norm,
        _drift(params, A, th),
        converged=norm <= tol and not merged,
        singular=singular or merged,
        iterations=it,
    )


# -- Prandtl / Alexander -----------------------------------------------------


def prandtl_parameters(params: SpiralParams) -> tuple[float, float]:
    """``(g, mu)`` with ``g = -1/(4 K'(0))`` and ``mu = -g K(0)/beta``.

    The self-similar single orbit of the atom ODE is ``I(t) = 2 g / t`` with
    angular drift ``4 g K(0) ln t``.  The drift rate therefore equals
    ``-4 beta mu``, not ``-beta mu``; ``mu`` keeps the normalisation
    ``g K(0) = -beta mu`` of the consistency relations.
    """
    bd = kernel_boundary(params)
    if bd.kp0 == 0.0:
        raise ValueError("K'(0) vanishes; Prandtl parameters undefined")
    g = -1.0 / (4.0 * bd.kp0)
    mu = -g * bd.k0 / params.beta
    return g, mu


# -- stability in similarity variables ---------------------------------------


def similarity_exponents(sol: SelfSimilarSolution) -> np.ndarray:
    """Eigenvalues of the linearised flow in similarity variables.

    With ``J_j = t I_j`` and ``tau = ln t`` the atom ODEs become autonomous,
    ``dJ/dtau = J + 2 (K' J) J`` and ``dtheta/dtau = 2 K J``, and every
    self-similar solution is a fixed point modulo rotation.  A perturbation
    grows like ``t^Re(lambda)``; the zero eigenvalue from rotation
    invariance is included.
    """
    p = sol.params
    A, th = sol.amplitudes, sol.positions
    M = A.size
    K, Kp, Kpp = _matrices(p, th)
    J = np.zeros((2 * M, 2 * M))
    J[:M, :M] = np.eye(M) + 2.0 * np.diag(Kp @ A) + 2.0 * Kp * A[:, None]
    dKp = np.diag(Kpp @ A) - Kpp * A[None, :]
    dK = np.diag(Kp @ A - np.diag(Kp) * A) - Kp * A[None, :] + np.diag(np.diag(Kp) * A)
    J[:M, M:] = 2.0 * A[:, None] * dKp
    J[M:, :M] = 2.0 * K
    J[M:, M:] = 2.0 * dK
    return np.linalg.eigvals(J)
