"""
Data-based stabilizing gain synthesis.

The LMI in (P, Q), with K = Q P^-1, is

    [[L Y L^T - L Delta L^T - (F P + P F^T + G Q + Q^T G^T),  L X^T - [0, P]],
     [X L^T - [0; P],                                         Z           ]]  > 0,
    P > 0.

Its feasibility is equivalent to every Theta in the consistency set being
stabilized by K with the common Lyapunov matrix P.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import cvxpy as cp
import numpy as np
from scipy import linalg, optimize

from .data_moments import DataMoments
from .exceptions import DimensionError, SynthesisError
from .plant_model import FilterDesign, GroundTruth, StateSpacePlant, closed_loop_matrix, lambda_tilde

logger = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"
STATUSES = (FEASIBLE, INFEASIBLE, NUMERICAL_FAILURE)

OBJECTIVES = ("feasibility", "min_trace", "max_decay")
DEFAULT_SOLVER = "CLARABEL"
EPS_RTOL = 1e-8
EPS_MARGIN_FACTOR = 10.0
ROUND_TRIP_RTOL = 1e-6
CONDITION_WARNING = 1e10
SPECTRUM_RTOL = 1e-6
DECAY_UPPER = 5.0
DECAY_ATOL = 1e-2


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """
    constant holds the data part [[L (Y - Delta) L^T, L X^T], [X L^T, Z]];
    P and Q enter through F, G and the [0, P] coupling.

    decay_rate shifts F to F + decay_rate * I, so a feasible K places every
    consistent closed loop left of -decay_rate.
    """

    mu: int
    n: int
    p: int
    m: int
    constant: np.ndarray
    F: np.ndarray
    G: np.ndarray
    eps: float
    scale: float
    decay_rate: float = 0.0

    @property
    def shifted_F(self) -> np.ndarray:
        return self.F + self.decay_rate * np.eye(self.mu)

    @property
    def size(self) -> int:
        return 2 * self.mu + self.n

    def lhs(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        mu, n = self.mu, self.n
        coupling = np.hstack([np.zeros((mu, n)), P])
        linear = np.zeros_like(self.constant)
        F = self.shifted_F
        linear[:mu, :mu] = F @ P + P @ F.T + self.G @ Q + Q.T @ self.G.T
        linear[:mu, mu:] = coupling
        linear[mu:, :mu] = coupling.T
        value = self.constant - linear
        return 0.5 * (value + value.T)


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    status: str
    P: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    lmi_margin: float = float("nan")
    p_margin: float = float("nan")
    eps: float = 0.0
    condition_number: float = float("nan")
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def assemble_lmi(
    moments: DataMoments,
    filt: FilterDesign,
    eps: Optional[float] = None,
    decay_rate: float = 0.0,
) -> LmiProblem:
    """
    Raises:
        DimensionError: the moments do not match the filter dimensions
        SynthesisError: eps is not positive or decay_rate is negative
    """
    mu, n, p = filt.mu, filt.n, filt.p
    if moments.p != p or moments.dim != n + mu:
        raise DimensionError(
            f"moments of size (p={moments.p}, n+mu={moments.dim}) do not match the "
            f"filter (p={p}, n+mu={n + mu})"
        )
    L = filt.L
    constant = np.block([
        [L @ (moments.Y - moments.Delta) @ L.T, L @ moments.X.T],
        [moments.X @ L.T, moments.Z],
    ])
    constant = 0.5 * (constant + constant.T)

    scale = float(np.linalg.norm(constant, 2))
    if scale == 0.0:
        scale = 1.0
    if eps is None:
        eps = EPS_RTOL * scale
    if eps <= 0:
        raise SynthesisError(f"strictness margin must be positive, got {eps}")
    if decay_rate < 0:
        raise SynthesisError(f"decay rate must be non-negative, got {decay_rate}")

    return LmiProblem(
        mu=mu, n=n, p=p, m=filt.m,
        constant=constant, F=filt.F, G=filt.G,
        eps=float(eps), scale=scale, decay_rate=float(decay_rate),
    )


def evaluate_lmi(prob: LmiProblem, P: np.ndarray, Q: np.ndarray) -> Tuple[float, float]:
    """lambda_min of the LMI left-hand side and of P."""
    lmi_margin = float(linalg.eigvalsh(prob.lhs(P, Q))[0])
    p_margin = float(linalg.eigvalsh(0.5 * (P + P.T))[0])
    return lmi_margin, p_margin


def recover_gain(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """K = Q P^-1 through the Cholesky factor of P."""
    factor = linalg.cho_factor(P)
    return linalg.cho_solve(factor, Q.T).T


def solve_lmi(
    prob: LmiProblem,
    objective: str = "feasibility",
    solver: str = DEFAULT_SOLVER,
) -> SynthesisResult:
    """
    Solve the LMI on the constant term normalized by prob.scale; K is
    unchanged by the scaling and P, Q are mapped back.

    Only a solver infeasibility certificate, possibly inaccurate, yields
    status 'infeasible'. The max_decay objective bisects on decay_rate.
    """
    if objective not in OBJECTIVES:
        raise SynthesisError(f"unknown objective '{objective}'")
    if objective == "max_decay":
        return maximize_decay(prob, solver)
    mu, n, m = prob.mu, prob.n, prob.m
    margin = EPS_MARGIN_FACTOR * prob.eps / prob.scale
    constant = prob.constant / prob.scale
    F = prob.shifted_F

    P = cp.Variable((mu, mu), symmetric=True)
    Q = cp.Variable((m, mu))
    coupling = cp.hstack([np.zeros((mu, n)), P])
    lhs = cp.bmat([
        [constant[:mu, :mu] - (F @ P + P @ F.T + prob.G @ Q + Q.T @ prob.G.T),
         constant[:mu, mu:] - coupling],
        [constant[mu:, :mu] - coupling.T, constant[mu:, mu:]],
    ])
    constraints = [
        0.5 * (lhs + lhs.T) >> margin * np.eye(prob.size),
        P >> margin * np.eye(mu),
    ]
    goal = cp.Minimize(cp.trace(P)) if objective == "min_trace" else cp.Minimize(0)
    problem = cp.Problem(goal, constraints)

    diagnostics = {
        "solver": solver, "objective": objective, "size": prob.size, "decay_rate": prob.decay_rate,
    }
    try:
        problem.solve(solver=solver)
    except cp.error.SolverError as e:
        logger.warning("solver %s failed: %s", solver, e)
        diagnostics["error"] = str(e)
        return SynthesisResult(status=NUMERICAL_FAILURE, eps=prob.eps, diagnostics=diagnostics)

    diagnostics["solver_status"] = problem.status
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SynthesisResult(status=INFEASIBLE, eps=prob.eps, diagnostics=diagnostics)
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or P.value is None:
        logger.warning("solver %s returned status '%s'", solver, problem.status)
        return SynthesisResult(status=NUMERICAL_FAILURE, eps=prob.eps, diagnostics=diagnostics)

    P_value = prob.scale * 0.5 * (P.value + P.value.T)
    Q_value = prob.scale * Q.value
    lmi_margin, p_margin = evaluate_lmi(prob, P_value, Q_value)
    threshold = prob.eps * (1.0 - ROUND_TRIP_RTOL)
    if lmi_margin < threshold or p_margin < threshold:
        logger.warning(
            "round-trip check failed: lmi margin %.3e, P margin %.3e, eps %.3e",
            lmi_margin, p_margin, prob.eps,
        )
        return SynthesisResult(
            status=NUMERICAL_FAILURE, P=P_value, Q=Q_value,
            lmi_margin=lmi_margin, p_margin=p_margin, eps=prob.eps, diagnostics=diagnostics,
        )

    try:
        K = recover_gain(P_value, Q_value)
    except linalg.LinAlgError as e:
        diagnostics["error"] = str(e)
        return SynthesisResult(status=NUMERICAL_FAILURE, eps=prob.eps, diagnostics=diagnostics)

    condition = float(np.linalg.cond(P_value))
    if condition > CONDITION_WARNING:
        logger.warning("P is ill-conditioned (cond = %.3e)", condition)

    return SynthesisResult(
        status=FEASIBLE,
        P=P_value,
        Q=Q_value,
        K=K,
        lmi_margin=lmi_margin,
        p_margin=p_margin,
        eps=prob.eps,
        condition_number=condition,
        diagnostics=diagnostics,
    )


def maximize_decay(
    prob: LmiProblem,
    solver: str = DEFAULT_SOLVER,
    upper: float = DECAY_UPPER,
    atol: float = DECAY_ATOL,
) -> SynthesisResult:
    """
    Largest decay_rate in [prob.decay_rate, upper] with a feasible LMI, by
    bisection to absolute tolerance atol. Returns the feasibility result at
    the largest certified rate, or the failed result at prob.decay_rate.
    """
    best = solve_lmi(prob, "feasibility", solver)
    if best.feasible:
        lo, hi = prob.decay_rate, max(upper, prob.decay_rate)
        top = solve_lmi(replace(prob, decay_rate=hi), "feasibility", solver)
        if top.feasible:
            lo, best = hi, top
        while hi - lo > atol:
            mid = 0.5 * (lo + hi)
            result = solve_lmi(replace(prob, decay_rate=mid), "feasibility", solver)
            if result.feasible:
                lo, best = mid, result
            else:
                hi = mid
        logger.info("largest certified decay rate %.4g", lo)
    best.diagnostics["objective"] = "max_decay"
    return best


def theta_closed_loop(Theta: np.ndarray, K: np.ndarray, filt: FilterDesign) -> np.ndarray:
    """F + L Theta [0; I_mu] + G K"""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    if Theta.shape != (filt.p, filt.n + filt.mu):
        raise DimensionError(f"Theta must be {filt.p}x{filt.n + filt.mu}, got {Theta.shape}")
    return filt.F + filt.L @ Theta[:, filt.n:] + filt.G @ K


def spectral_abscissa(matrix: np.ndarray) -> float:
    return float(np.max(linalg.eigvals(matrix).real))


def stability_set_membership(P: np.ndarray, K: np.ndarray, Theta, filt: FilterDesign) -> Tuple[bool, float]:
    """Theta lies in C(P, K) iff A_cl P + P A_cl^T < 0; returns the largest eigenvalue too."""
    A_cl = theta_closed_loop(Theta, K, filt)
    lyapunov = A_cl @ P + P @ A_cl.T
    worst = float(linalg.eigvalsh(0.5 * (lyapunov + lyapunov.T))[-1])
    return worst < 0.0, worst


def verify_stabilization(result: SynthesisResult, Theta, filt: FilterDesign) -> Tuple[bool, float]:
    """(Lyapunov inequality holds with the synthesized P, spectral abscissa)"""
    if not result.feasible:
        raise SynthesisError(f"cannot verify a synthesis with status '{result.status}'")
    member, _ = stability_set_membership(result.P, result.K, Theta, filt)
    return member, spectral_abscissa(theta_closed_loop(Theta, result.K, filt))


def _multiset_distance(a: np.ndarray, b: np.ndarray) -> float:
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = optimize.linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) if rows.size else 0.0


def _sorted_spectrum(values: np.ndarray) -> np.ndarray:
    return values[np.lexsort((values.imag, values.real))]


def closed_loop_spectrum(
    plant: StateSpacePlant,
    filt: FilterDesign,
    K: np.ndarray,
    truth: Optional[GroundTruth] = None,
) -> np.ndarray:
    """
    Eigenvalues of [[A, BK], [LC, F + GK]]. With ground truth available the
    spectrum is compared against sigma(LambdaTilde) and sigma(F + LH + GK).
    """
    eigs = _sorted_spectrum(linalg.eigvals(closed_loop_matrix(plant, filt, K)))
    if truth is not None:
        expected = np.concatenate([
            linalg.eigvals(lambda_tilde(filt)),
            linalg.eigvals(filt.F + filt.L @ truth.H + filt.G @ K),
        ])
        gap = _multiset_distance(eigs, expected)
        tolerance = SPECTRUM_RTOL * (1.0 + np.abs(eigs).max())
        if gap > tolerance:
            logger.warning("closed-loop spectrum deviates from its decomposition by %.3e", gap)
    return eigs


def model_based_gain(
    A_model: np.ndarray,
    G: np.ndarray,
    solver: str = DEFAULT_SOLVER,
) -> np.ndarray:
    """K with A_model + G K Hurwitz from P >= I, (A + GK) P + P (A + GK)^T <= -I."""
    mu, m = A_model.shape[0], G.shape[1]
    P = cp.Variable((mu, mu), symmetric=True)
    Q = cp.Variable((m, mu))
    lyapunov = A_model @ P + P @ A_model.T + G @ Q + Q.T @ G.T
    problem = cp.Problem(
        cp.Minimize(cp.trace(P)),
        [P >> np.eye(mu), 0.5 * (lyapunov + lyapunov.T) << -np.eye(mu)],
    )
    try:
        problem.solve(solver=solver)
    except cp.error.SolverError as e:
        raise SynthesisError(f"model-based synthesis failed: {e}") from e
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or P.value is None:
        raise SynthesisError(f"model-based synthesis returned '{problem.status}'")
    return recover_gain(0.5 * (P.value + P.value.T), Q.value)


def corollary_rho_bound(
    truth: GroundTruth,
    filt: FilterDesign,
    ell: float = 0.5,
    solver: str = DEFAULT_SOLVER,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Feasibility radius rho* = ell^2 / (16 ||Omega L||^2), where Omega
    solves Omega A_cl + A_cl^T Omega = -I for a model-based K on
    (F + LH, G). Data with rho <= rho* make the LMI feasible.

    Returns (rho*, Omega, K).
    """
    if not 0.0 < ell < 1.0:
        raise SynthesisError(f"ell must lie in (0, 1), got {ell}")
    A_model = filt.F + filt.L @ truth.H
    K = model_based_gain(A_model, filt.G, solver)
    A_cl = A_model + filt.G @ K
    Omega = linalg.solve_continuous_lyapunov(A_cl.T, -np.eye(filt.mu))
    Omega = 0.5 * (Omega + Omega.T)
    rho_star = ell ** 2 / (16.0 * np.linalg.norm(Omega @ filt.L, 2) ** 2)
    return float(rho_star), Omega, K
