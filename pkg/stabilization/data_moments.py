"""
Moment matrices of the filtered data and the consistency ellipsoid.

The data matrix is the trapezoid integral of [y; -zeta][y; -zeta]^T over the
simulation grid, partitioned as [[Y, X^T], [X, Z]].
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from .exceptions import DimensionError, ExcitationError, NoiseBoundError
from .signals_sim import FilteredData, SeedLike, Trajectory

logger = logging.getLogger(__name__)

EXCITATION_RTOL = 1e-10
MEMBERSHIP_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class DataMoments:
    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    T: float
    Delta: np.ndarray

    @property
    def p(self) -> int:
        return self.Y.shape[0]

    @property
    def dim(self) -> int:
        """n + mu"""
        return self.Z.shape[0]

    def block(self) -> np.ndarray:
        return np.block([[self.Y, self.X.T], [self.X, self.Z]])

    def with_delta(self, Delta) -> "DataMoments":
        Delta = np.atleast_2d(np.asarray(Delta, dtype=float))
        if Delta.shape != self.Y.shape:
            raise DimensionError(f"Delta must be {self.Y.shape}, got {Delta.shape}")
        return replace(self, Delta=Delta)


@dataclass(frozen=True, eq=False)
class ConsistencySet:
    """
    E = {Theta : [I Theta] N [I Theta]^T >= 0}
      = {Theta : (Theta - Theta_hat) Z (Theta - Theta_hat)^T <= S_N}
    """

    N: np.ndarray
    Theta_hat: np.ndarray
    S_N: np.ndarray
    rho: float
    Z: np.ndarray
    Delta: np.ndarray

    @property
    def p(self) -> int:
        return self.S_N.shape[0]


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    weights = np.empty_like(t)
    steps = np.diff(t)
    weights[0] = 0.5 * steps[0]
    weights[-1] = 0.5 * steps[-1]
    weights[1:-1] = 0.5 * (steps[:-1] + steps[1:])
    return weights


def accumulate_moments(traj: Trajectory, fdata: FilteredData, Delta) -> DataMoments:
    """
    Integrate the outer product of [y; -zeta] with the composite trapezoid
    rule. Non-negative weights keep the result PSD.
    """
    if traj.t.shape != fdata.t.shape or not np.allclose(traj.t, fdata.t, rtol=0.0, atol=1e-12):
        raise DimensionError("trajectory and filtered data are not on the same grid")
    if traj.t.size < 2:
        raise DimensionError("at least two grid points are needed")

    p = traj.y.shape[1]
    stacked = np.hstack([traj.y, -fdata.zeta])
    weights = trapezoid_weights(traj.t)
    moments = (stacked * weights[:, None]).T @ stacked
    moments = 0.5 * (moments + moments.T)

    Delta = np.atleast_2d(np.asarray(Delta, dtype=float))
    if Delta.shape != (p, p):
        raise DimensionError(f"Delta must be {p}x{p}, got {Delta.shape}")

    return DataMoments(
        Y=moments[:p, :p],
        X=moments[p:, :p],
        Z=moments[p:, p:],
        T=float(traj.t[-1] - traj.t[0]),
        Delta=Delta,
    )


def excitation_check(moments: DataMoments, rtol: float = EXCITATION_RTOL) -> Tuple[bool, float]:
    """Interval excitation: lambda_min(Z) > rtol * lambda_max(Z)."""
    eigs = linalg.eigvalsh(moments.Z)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    return bool(lam_max > 0.0 and lam_min > rtol * lam_max), lam_min


def build_consistency_set(moments: DataMoments, rtol: float = EXCITATION_RTOL) -> ConsistencySet:
    """
    N, the least-squares estimate Theta_hat = -X^T Z^-1, the Schur
    complement S_N and rho = lambda_max(Delta) / lambda_min(Z).

    Raises:
        ExcitationError: Z is numerically singular
    """
    excited, lam_min = excitation_check(moments, rtol)
    if not excited:
        raise ExcitationError(f"Z is numerically singular (lambda_min = {lam_min:.3e})")

    Y, X, Z, Delta = moments.Y, moments.X, moments.Z, moments.Delta
    try:
        factor = linalg.cho_factor(Z)
    except linalg.LinAlgError as e:
        raise ExcitationError("Z is not positive definite") from e
    Zinv_X = linalg.cho_solve(factor, X)

    S_N = Delta - Y + X.T @ Zinv_X
    S_N = 0.5 * (S_N + S_N.T)
    N = np.block([[Delta - Y, -X.T], [-X, -Z]])
    rho = float(linalg.eigvalsh(Delta)[-1] / lam_min)

    return ConsistencySet(
        N=N,
        Theta_hat=-Zinv_X.T,
        S_N=S_N,
        rho=max(rho, 0.0),
        Z=Z,
        Delta=Delta,
    )


def membership_tolerance(cs: ConsistencySet) -> float:
    return MEMBERSHIP_RTOL * (1.0 + np.linalg.norm(cs.N, 2))


def ellipsoid_membership(cs: ConsistencySet, Theta, tol: Optional[float] = None) -> Tuple[bool, float]:
    """Theta is a member iff lambda_min([I Theta] N [I Theta]^T) >= -tol."""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    if Theta.shape != cs.Theta_hat.shape:
        raise DimensionError(f"Theta must be {cs.Theta_hat.shape}, got {Theta.shape}")
    tol = membership_tolerance(cs) if tol is None else tol
    selector = np.hstack([np.eye(cs.p), Theta])
    quadratic = selector @ cs.N @ selector.T
    margin = float(linalg.eigvalsh(0.5 * (quadratic + quadratic.T))[0])
    return margin >= -tol, margin


def outer_ellipsoid_membership(cs: ConsistencySet, Theta, tol: Optional[float] = None) -> Tuple[bool, float]:
    """Membership in the relaxed set (Theta - Theta_hat) Z (...)^T <= Delta."""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    tol = membership_tolerance(cs) if tol is None else tol
    offset = Theta - cs.Theta_hat
    gap = cs.Delta - offset @ cs.Z @ offset.T
    margin = float(linalg.eigvalsh(0.5 * (gap + gap.T))[0])
    return margin >= -tol, margin


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalues clamped at zero."""
    eigs, vecs = linalg.eigh(0.5 * (matrix + matrix.T))
    return (vecs * np.sqrt(np.clip(eigs, 0.0, None))) @ vecs.T


def sample_ellipsoid_boundary(
    cs: ConsistencySet,
    seed: SeedLike = None,
    count: int = 1,
    boundary: bool = True,
) -> List[np.ndarray]:
    """
    Theta = Theta_hat + S_N^(1/2) U Z^(-1/2) with ||U||_2 = 1 on the
    boundary, or ||U||_2 <= 1 for interior samples.

    Raises:
        NoiseBoundError: S_N is indefinite, i.e. Delta does not cover the data
    """
    tol = membership_tolerance(cs)
    if linalg.eigvalsh(cs.S_N)[0] < -tol:
        raise NoiseBoundError("S_N is indefinite: the consistency set is empty")

    rng = np.random.default_rng(seed)
    S_half = psd_sqrt(cs.S_N)
    eigs, vecs = linalg.eigh(cs.Z)
    Z_inv_half = (vecs / np.sqrt(eigs)) @ vecs.T

    samples = []
    for _ in range(count):
        U = rng.standard_normal(cs.Theta_hat.shape)
        U /= np.linalg.norm(U, 2)
        if not boundary:
            U *= rng.uniform()
        samples.append(cs.Theta_hat + S_half @ U @ Z_inv_half)
    return samples


def quadrature_psd_margin(moments: DataMoments) -> float:
    """lambda_min / lambda_max of the assembled data matrix."""
    eigs = linalg.eigvalsh(moments.block())
    if eigs[-1] <= 0.0:
        return 0.0
    return float(eigs[0] / eigs[-1])
