"""
Energy bound Delta on the filtered disturbance d = d_w + d_v.

d_w is the output of (LambdaTilde, E, C) driven by w, so its L2[0, T] gain
is certified by solvability of the backward Riccati differential equation

    W' = -LambdaTilde^T W - W LambdaTilde - gamma^-2 W E E^T W - C^T C,  W(T) = 0.

d_v is the output of G_v(s) = D(s) / D_lambda(s) driven by v.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg, optimize

from .data_moments import trapezoid_weights
from .exceptions import NoiseBoundError, PoleError
from .plant_model import PlantCoefficients, RationalTransfer, StateSpaceTransfer
from .signals_sim import DisturbanceTrajectory

logger = logging.getLogger(__name__)

DRE_BLOWUP = 1e8
DRE_RTOL = 1e-10
DRE_ATOL = 1e-12
HINF_RTOL = 1e-4
HINF_GRID = (1e-4, 1e6, 2000)
GAMMA_RTOL = 1e-7
GV_LOWER_TOL = 1e-6
GV_UPPER_TOL = 1e-4
MAX_BISECTIONS = 200

Transfer = Union[RationalTransfer, StateSpaceTransfer]


@dataclass(frozen=True)
class NoisePrior:
    delta_w: float
    delta_v: float = 0.0

    def __post_init__(self):
        if self.delta_w < 0 or self.delta_v < 0:
            raise NoiseBoundError(
                f"noise energy bounds must be non-negative, got "
                f"delta_w={self.delta_w}, delta_v={self.delta_v}"
            )


@dataclass(frozen=True, eq=False)
class GainCertificate:
    """
    gamma certifies ||d_w|| <= gamma ||w|| on [0, T]; gamma_inf is the
    infinite-horizon bound. trace holds the (gamma, solvable) pairs tried.

    Without a process-noise channel (E = 0) d_w vanishes and there is no
    positive gain to certify: process_noise is False and gamma is the value
    the caller supplied, or 0.0 from gamma_search.
    """

    gamma: float
    gamma_inf: float
    dre_solved: bool
    T: float
    trace: Tuple[Tuple[float, bool], ...] = field(default=())
    process_noise: bool = True


def _largest_singular_value(value: np.ndarray) -> float:
    if value.size == 0:
        return 0.0
    return float(linalg.svdvals(value)[0])


def _riccati_rhs(LambdaTilde, EEt, CtC, weight):
    def rhs(W):
        return LambdaTilde.T @ W + W @ LambdaTilde + weight * (W @ EEt @ W) + CtC
    return rhs


def _adaptive_escapes(rhs, k: int, T: float, threshold: float) -> bool:
    def flat(_, w):
        return rhs(w.reshape(k, k)).ravel()

    def escape(_, w):
        return threshold - np.abs(w).max()

    escape.terminal = True
    escape.direction = -1

    with np.errstate(over="ignore", invalid="ignore"):
        solution = integrate.solve_ivp(
            flat, (0.0, T), np.zeros(k * k),
            method="RK45", rtol=DRE_RTOL, atol=DRE_ATOL, events=escape,
        )
    if solution.status == -1:
        logger.debug("Riccati integration stopped: %s", solution.message)
        return True
    return solution.status == 1 or not np.all(np.isfinite(solution.y[:, -1]))


def _fixed_step_escapes(rhs, k: int, T: float, threshold: float, h: float) -> bool:
    steps = max(int(np.ceil(T / h)), 1)
    h = T / steps
    W = np.zeros((k, k))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            k1 = rhs(W)
            k2 = rhs(W + 0.5 * h * k1)
            k3 = rhs(W + 0.5 * h * k2)
            k4 = rhs(W + h * k3)
            W = W + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            W = 0.5 * (W + W.T)
            if not np.all(np.isfinite(W)):
                return True
            eigs, vecs = linalg.eigh(W)
            if eigs[-1] > threshold:
                return True
            if eigs[0] < 0.0:
                W = (vecs * np.clip(eigs, 0.0, None)) @ vecs.T
    return False


def dre_solvable(
    LambdaTilde: np.ndarray,
    E: np.ndarray,
    C: np.ndarray,
    gamma: float,
    T: float,
    h_dre: Optional[float] = None,
    blowup: float = DRE_BLOWUP,
) -> bool:
    """
    Integrate the Riccati equation in reversed time tau = T - t. Finite
    escape before tau = T, i.e. W crossing blowup * (1 + ||C^T C||), means
    no solution on [0, T].

    Without h_dre an adaptive Runge-Kutta scheme stops on the escape event;
    with h_dre a fixed-step RK4 with symmetrization and PSD clipping is used.
    """
    if gamma <= 0:
        raise NoiseBoundError(f"gamma must be positive, got {gamma}")
    E = np.atleast_2d(E)
    if E.size == 0 or not np.any(E):
        return True

    k = LambdaTilde.shape[0]
    CtC = C.T @ C
    rhs = _riccati_rhs(LambdaTilde, E @ E.T, CtC, 1.0 / gamma ** 2)
    threshold = blowup * (1.0 + np.linalg.norm(CtC, 2))
    if h_dre is None:
        return not _adaptive_escapes(rhs, k, T, threshold)
    if h_dre <= 0:
        raise NoiseBoundError(f"h_dre must be positive, got {h_dre}")
    return not _fixed_step_escapes(rhs, k, T, threshold, h_dre)


def hinf_norm(
    transfer: Transfer,
    rtol: float = HINF_RTOL,
    grid: Tuple[float, float, int] = HINF_GRID,
) -> float:
    """
    sup over omega of sigma_max(G(i omega)): log-spaced sweep plus bounded
    scalar refinement around the peak, compared with the DC and
    high-frequency limits.

    Raises:
        NoiseBoundError: a pole in the closed right half plane
    """
    poles = transfer.poles()
    if poles.size and np.any(poles.real >= 0.0):
        raise NoiseBoundError(f"transfer function is not stable, poles {poles}")

    def gain(omega: float) -> float:
        try:
            return _largest_singular_value(transfer.at(1j * omega))
        except PoleError as e:
            raise NoiseBoundError(str(e)) from e

    low, high, count = grid
    omegas = np.concatenate([[0.0], np.logspace(np.log10(low), np.log10(high), count)])
    gains = np.array([gain(w) for w in omegas])
    peak = int(np.argmax(gains))
    best = float(gains[peak])

    if 0 < peak < omegas.size - 1:
        left = np.log10(max(omegas[peak - 1], low))
        right = np.log10(omegas[peak + 1])
        refined = optimize.minimize_scalar(
            lambda exponent: -gain(10.0 ** exponent),
            bounds=(left, right),
            method="bounded",
            options={"xatol": rtol * 1e-2},
        )
        best = max(best, float(-refined.fun))

    best = max(best, _largest_singular_value(transfer.at_infinity()))
    logger.debug("H-infinity norm %.6g (peak near omega=%.3g)", best, omegas[peak])
    return best


def gamma_search(
    LambdaTilde: np.ndarray,
    E: np.ndarray,
    C: np.ndarray,
    T: float,
    tol: float = GAMMA_RTOL,
    gamma_inf: Optional[float] = None,
    h_dre: Optional[float] = None,
) -> GainCertificate:
    """
    Smallest gamma in (0, gamma_inf] for which the Riccati equation has a
    solution on [0, T], by bisection to relative tolerance tol.

    Raises:
        NoiseBoundError: gamma_inf could not be computed or is not certified
    """
    E = np.atleast_2d(E).reshape(LambdaTilde.shape[0], -1)
    if E.size == 0 or not np.any(E):
        return GainCertificate(gamma=0.0, gamma_inf=0.0, dre_solved=True, T=T, process_noise=False)

    if gamma_inf is None:
        gamma_inf = hinf_norm(StateSpaceTransfer(A=LambdaTilde, B=E, C=C))
    if not np.isfinite(gamma_inf) or gamma_inf <= 0:
        raise NoiseBoundError(f"invalid H-infinity bound {gamma_inf}")

    trace = []
    hi = gamma_inf * (1.0 + HINF_RTOL)
    solvable = dre_solvable(LambdaTilde, E, C, hi, T, h_dre)
    trace.append((hi, solvable))
    if not solvable:
        raise NoiseBoundError(
            f"Riccati equation has no solution at gamma_inf={gamma_inf:.6g} over T={T}"
        )

    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        solvable = dre_solvable(LambdaTilde, E, C, mid, T, h_dre)
        trace.append((mid, solvable))
        if solvable:
            hi = mid
        else:
            lo = mid

    logger.info("gamma search on T=%g: gamma=%.6g, gamma_inf=%.6g", T, hi, gamma_inf)
    return GainCertificate(
        gamma=hi, gamma_inf=float(gamma_inf), dre_solved=True, T=T, trace=tuple(trace)
    )


def certify_gamma(
    LambdaTilde: np.ndarray,
    E: np.ndarray,
    C: np.ndarray,
    gamma: float,
    T: float,
    h_dre: Optional[float] = None,
) -> GainCertificate:
    """Certificate for a user-supplied gamma; dre_solved reports the check."""
    E = np.atleast_2d(E).reshape(LambdaTilde.shape[0], -1)
    if E.size == 0 or not np.any(E):
        return GainCertificate(
            gamma=float(gamma), gamma_inf=0.0, dre_solved=True, T=T, process_noise=False
        )
    gamma_inf = hinf_norm(StateSpaceTransfer(A=LambdaTilde, B=E, C=C))
    solved = dre_solvable(LambdaTilde, E, C, gamma, T, h_dre)
    if not solved:
        logger.warning("gamma=%.6g does not solve the Riccati equation over T=%g", gamma, T)
    return GainCertificate(
        gamma=float(gamma), gamma_inf=gamma_inf, dre_solved=solved, T=T,
        trace=((float(gamma), solved),),
    )


def _plant_poles(coeffs: PlantCoefficients) -> np.ndarray:
    n, p = coeffs.n, coeffs.p
    companion = np.zeros((n * p, n * p))
    if n > 1:
        companion[p:, :-p] = np.eye((n - 1) * p)
    companion[:, -p:] = -np.vstack(coeffs.A_coeffs)
    return linalg.eigvals(companion)


def check_gv_norm_one(
    coeffs: PlantCoefficients,
    Lambda,
    grid: Tuple[float, float, int] = HINF_GRID,
) -> Tuple[bool, float]:
    """
    For single-output plants with real filter poles no slower than the
    fastest plant pole, ||G_v||_inf = 1.

    Returns (applies, sup |G_v(i omega)|). When the hypothesis applies the
    swept supremum must lie in [1 - 1e-6, 1 + 1e-4].
    """
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    filter_poles = linalg.eigvals(Lambda)
    denominator = np.append(np.real(np.poly(Lambda))[::-1][:Lambda.shape[0]], 1.0)
    transfer = RationalTransfer(numerator=coeffs.denominator_coeffs(), denominator=denominator)
    sup_val = hinf_norm(transfer, grid=grid)

    scale = 1.0 + np.abs(filter_poles).max()
    real_spectrum = bool(np.all(np.abs(filter_poles.imag) <= 1e-12 * scale))
    applies = (
        coeffs.p == 1
        and real_spectrum
        and np.abs(filter_poles).min() >= np.abs(_plant_poles(coeffs)).max()
    )
    if applies and not (1.0 - GV_LOWER_TOL <= sup_val <= 1.0 + GV_UPPER_TOL):
        raise NoiseBoundError(f"||G_v||_inf = {sup_val:.8g} although the unit-norm hypothesis holds")
    return bool(applies), sup_val


def compute_delta(
    prior: NoisePrior,
    cert: GainCertificate,
    p: int,
    gv_gain: Optional[float] = None,
    proposition_holds: Optional[bool] = None,
) -> np.ndarray:
    """
    Delta = (gamma sqrt(delta_w) + g_v sqrt(delta_v))^2 I_p, with g_v = 1
    for single-output plants.

    Raises:
        NoiseBoundError: p > 1 with measurement noise and no gv_gain override
    """
    if prior.delta_v > 0 and gv_gain is None:
        if p > 1:
            raise NoiseBoundError(
                "no certified bound on ||G_v|| for p > 1; supply gv_gain to override"
            )
        if proposition_holds is not True:
            logger.warning("unit bound on ||G_v|| is not certified for this plant and filter")
        gv_gain = 1.0
    gv_gain = 0.0 if gv_gain is None else float(gv_gain)
    if not cert.dre_solved:
        logger.warning("Delta is computed from an uncertified gamma=%.6g", cert.gamma)

    level = (cert.gamma * np.sqrt(prior.delta_w) + gv_gain * np.sqrt(prior.delta_v)) ** 2
    return level * np.eye(p)


def disturbance_gram(dist: DisturbanceTrajectory) -> np.ndarray:
    """Trapezoid integral of d d^T over the grid."""
    weights = trapezoid_weights(dist.t)
    return (dist.d * weights[:, None]).T @ dist.d


def delta_margin(dist: DisturbanceTrajectory, Delta: np.ndarray) -> float:
    """lambda_min(Delta - int d d^T); non-negative when Delta covers d."""
    gap = Delta - disturbance_gram(dist)
    return float(linalg.eigvalsh(0.5 * (gap + gap.T))[0])


def gamma_ladder(
    LambdaTilde: np.ndarray,
    E: np.ndarray,
    C: np.ndarray,
    T: float,
    gammas: Sequence[float],
    h_dre: Optional[float] = None,
) -> Tuple[Tuple[float, bool], ...]:
    return tuple((float(g), dre_solvable(LambdaTilde, E, C, g, T, h_dre)) for g in gammas)
