"""
State-space realizations, filter design and ground-truth oracles.

The plant is the block-companion realization of

    D(d/dt)(y - v) = N(d/dt) u + N_w(d/dt) w

and the filter is the non-minimal-realization observer
z_hat' = F z_hat + G u + L y. Everything here is a pure function on frozen
dataclasses; nothing touches Django.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .exceptions import DimensionError, FilterDesignError, PoleError, RealizationError

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-9
EIG_GAP_RTOL = 1e-8
RESIDUAL_TOL = 1e-8


def numerical_rank(matrix: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank from singular values above rtol * sigma_max."""
    matrix = np.atleast_2d(matrix)
    if matrix.size == 0:
        return 0
    sv = linalg.svdvals(matrix)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """[B, AB, ..., A^(k-1) B] with k = dim(A)"""
    B = B.reshape(A.shape[0], -1)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _as_matrix(value, rows: int, cols: int, label: str) -> np.ndarray:
    matrix = np.asarray(value, dtype=float)
    if matrix.ndim < 2 and matrix.size == rows * cols:
        matrix = matrix.reshape(rows, cols)
    if matrix.shape != (rows, cols):
        raise DimensionError(f"{label} must be {rows}x{cols}, got {matrix.shape}")
    return matrix


@dataclass(frozen=True, eq=False)
class PlantCoefficients:
    """
    Coefficients of D(s) = I s^n + A_{n-1} s^{n-1} + ... + A_0,
    N(s) = sum B_i s^i and N_w(s) = sum E_i s^i.

    q = 0 means there is no process-noise channel.
    """

    n: int
    m: int
    p: int
    q: int
    A_coeffs: Tuple[np.ndarray, ...]
    B_coeffs: Tuple[np.ndarray, ...]
    E_coeffs: Tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.p < 1 or self.q < 0:
            raise DimensionError(
                f"need n, m, p >= 1 and q >= 0, got n={self.n} m={self.m} "
                f"p={self.p} q={self.q}"
            )
        E_coeffs = self.E_coeffs
        if self.q == 0 and not E_coeffs:
            E_coeffs = [np.zeros((self.p, 0))] * self.n
        for label, coeffs, cols in (
            ("A", self.A_coeffs, self.p),
            ("B", self.B_coeffs, self.m),
            ("E", E_coeffs, self.q),
        ):
            if len(coeffs) != self.n:
                raise DimensionError(
                    f"{label} needs exactly n={self.n} coefficients, got {len(coeffs)}"
                )
            checked = tuple(
                _as_matrix(c, self.p, cols, f"{label}_{i}") for i, c in enumerate(coeffs)
            )
            object.__setattr__(self, f"{label}_coeffs", checked)

    def denominator_coeffs(self) -> Tuple[np.ndarray, ...]:
        """Ascending coefficients of D(s), the last one being I_p."""
        return self.A_coeffs + (np.eye(self.p),)


@dataclass(frozen=True, eq=False)
class StateSpacePlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray
    n: int
    m: int
    p: int
    q: int
    controllable: bool
    coefficients: PlantCoefficients

    @property
    def order(self) -> int:
        return self.n * self.p


@dataclass(frozen=True, eq=False)
class ObserverForm:
    A_o: np.ndarray
    C_o: np.ndarray
    Phi: np.ndarray
    A_bar: np.ndarray
    A_m_tilde: np.ndarray


@dataclass(frozen=True, eq=False)
class FilterDesign:
    """
    User tuning (Lambda, Gamma, Delta) and the derived filter matrices

        F = I_{p+m} kron Lambda,  G = [0; I_m kron Gamma],  L = [I_p kron Gamma; 0].
    """

    Lambda: np.ndarray
    Gamma: np.ndarray
    Delta: np.ndarray
    m: int
    p: int
    F: np.ndarray
    G: np.ndarray
    L: np.ndarray
    lambda_coeffs: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.Lambda.shape[0]

    @property
    def mu(self) -> int:
        return self.n * (self.p + self.m)

    def with_delta(self, Delta) -> "FilterDesign":
        return replace(self, Delta=_check_delta(Delta, self.p))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    Pi: np.ndarray
    H: np.ndarray
    H0: np.ndarray
    Theta_star: np.ndarray
    LambdaTilde: np.ndarray
    PiL: np.ndarray
    residuals: Dict[str, float] = field(default_factory=dict)


def build_state_space(coeffs: PlantCoefficients, rtol: float = RANK_RTOL) -> StateSpacePlant:
    """
    Block companion realization with subdiagonal identities, last block
    column -A_0 ... -A_{n-1} and C = [0 ... 0 I_p].

    Observability holds by construction; controllability is checked and
    only reported.
    """
    n, p = coeffs.n, coeffs.p
    order = n * p

    A = np.zeros((order, order))
    if n > 1:
        A[p:, :-p] = np.eye(order - p)
    A[:, -p:] = -np.vstack(coeffs.A_coeffs)
    B = np.vstack(coeffs.B_coeffs)
    E = np.vstack(coeffs.E_coeffs) if coeffs.q else np.zeros((order, 0))
    C = np.hstack([np.zeros((p, order - p)), np.eye(p)])

    controllable = numerical_rank(controllability_matrix(A, B), rtol) == order
    if not controllable:
        logger.warning("(A, B) is not controllable, synthesis may fail")

    return StateSpacePlant(
        A=A, B=B, C=C, E=E,
        n=n, m=coeffs.m, p=p, q=coeffs.q,
        controllable=controllable,
        coefficients=coeffs,
    )


def observer_canonical_form(plant: StateSpacePlant) -> ObserverForm:
    """Perfect-shuffle permutation Phi and A_o = Phi A Phi^T, C_o = C Phi^T."""
    n, p = plant.n, plant.p
    basis = np.eye(n)
    Phi = np.hstack([np.kron(np.eye(p), basis[:, [i]]) for i in range(n)])

    A_o = Phi @ plant.A @ Phi.T
    C_o = plant.C @ Phi.T
    A_bar = np.eye(n, k=-1)
    A_m_tilde = Phi @ plant.A[:, -p:]

    expected = np.kron(np.eye(p), A_bar) + A_m_tilde @ np.kron(np.eye(p), basis[[n - 1], :])
    if not np.allclose(A_o, expected, rtol=0.0, atol=1e-12 * (1.0 + np.abs(plant.A).max())):
        raise RealizationError("observer canonical form does not match its block structure")

    return ObserverForm(A_o=A_o, C_o=C_o, Phi=Phi, A_bar=A_bar, A_m_tilde=A_m_tilde)


def _check_delta(Delta, p: int) -> np.ndarray:
    Delta = _as_matrix(Delta, p, p, "Delta")
    scale = 1.0 + np.abs(Delta).max()
    if not np.allclose(Delta, Delta.T, rtol=0.0, atol=1e-12 * scale):
        raise FilterDesignError("Delta must be symmetric")
    Delta = 0.5 * (Delta + Delta.T)
    if linalg.eigvalsh(Delta).min() < -1e-12 * scale:
        raise FilterDesignError("Delta must be positive semidefinite")
    return Delta


def design_filter(
    Lambda,
    Gamma,
    m: int,
    p: int,
    Delta=None,
    rtol: float = RANK_RTOL,
) -> FilterDesign:
    """
    Validate the tuning of the filter and build F, G, L.

    Raises:
        FilterDesignError: Lambda not Hurwitz, repeated eigenvalues,
            (Lambda, Gamma) not controllable, or Delta not symmetric PSD
    """
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    n = Lambda.shape[0]
    if Lambda.shape != (n, n):
        raise DimensionError(f"Lambda must be square, got {Lambda.shape}")
    Gamma = np.asarray(Gamma, dtype=float).reshape(-1)
    if Gamma.shape != (n,):
        raise DimensionError(f"Gamma must have {n} entries, got {Gamma.shape[0]}")

    eigs = linalg.eigvals(Lambda)
    if np.any(eigs.real >= 0.0):
        raise FilterDesignError(f"Lambda must be Hurwitz, eigenvalues {eigs}")
    if n > 1:
        gaps = np.abs(eigs[:, None] - eigs[None, :]) + np.diag(np.full(n, np.inf))
        if gaps.min() <= EIG_GAP_RTOL * np.abs(eigs).max():
            raise FilterDesignError("Lambda must have pairwise distinct eigenvalues")

    R = controllability_matrix(Lambda, Gamma[:, None])
    if numerical_rank(R, rtol) < n:
        raise FilterDesignError("(Lambda, Gamma) is not controllable")

    Delta = _check_delta(np.zeros((p, p)) if Delta is None else Delta, p)

    column = Gamma[:, None]
    F = np.kron(np.eye(p + m), Lambda)
    G = np.vstack([np.zeros((n * p, m)), np.kron(np.eye(m), column)])
    L = np.vstack([np.kron(np.eye(p), column), np.zeros((n * m, p))])
    # characteristic polynomial, ascending and without the leading 1
    lambda_coeffs = np.real(np.poly(Lambda))[::-1][:n].copy()

    return FilterDesign(
        Lambda=Lambda, Gamma=Gamma, Delta=Delta, m=m, p=p,
        F=F, G=G, L=L, lambda_coeffs=lambda_coeffs, R=R,
    )


def lambda_tilde(filt: FilterDesign) -> np.ndarray:
    """Block companion matrix with last block column -lambda_i I_p."""
    n, p = filt.n, filt.p
    LT = np.zeros((n * p, n * p))
    if n > 1:
        LT[p:, :-p] = np.eye((n - 1) * p)
    LT[:, -p:] = -np.kron(filt.lambda_coeffs[:, None], np.eye(p))
    return LT


def _krylov_block(LT: np.ndarray, seed: np.ndarray, R_inv: np.ndarray) -> np.ndarray:
    """W = [b, LT b, ..., LT^(n-1) b] R^-1, the solution of W Lambda = LT W, W Gamma = b."""
    columns = [seed]
    for _ in range(R_inv.shape[0] - 1):
        columns.append(LT @ columns[-1])
    return np.column_stack(columns) @ R_inv


def compute_ground_truth(
    plant: StateSpacePlant,
    filt: FilterDesign,
    x0: Optional[Sequence[float]] = None,
    tol: float = RESIDUAL_TOL,
) -> GroundTruth:
    """
    Pi, H, H0 and Theta* = [H0 H] by the Krylov construction.

    Raises:
        RealizationError: R singular or a realization residual above tolerance
    """
    if (filt.n, filt.m, filt.p) != (plant.n, plant.m, plant.p):
        raise DimensionError(
            f"filter (n={filt.n}, m={filt.m}, p={filt.p}) does not match plant "
            f"(n={plant.n}, m={plant.m}, p={plant.p})"
        )
    if not plant.controllable:
        logger.warning("ground truth requested for an uncontrollable plant")

    if numerical_rank(filt.R) < filt.n:
        raise RealizationError("controllability matrix of (Lambda, Gamma) is singular")
    R_inv = linalg.inv(filt.R)

    x0 = np.zeros(plant.order) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (plant.order,):
        raise DimensionError(f"x0 must have {plant.order} entries")

    p = plant.p
    LT = lambda_tilde(filt)
    PiL = np.kron(filt.lambda_coeffs[:, None], np.eye(p)) - np.vstack(plant.coefficients.A_coeffs)

    seeds = [PiL[:, j] for j in range(p)] + [plant.B[:, k] for k in range(plant.m)]
    Pi = np.hstack([_krylov_block(LT, seed, R_inv) for seed in seeds])
    H = plant.C @ Pi
    H0 = plant.C @ _krylov_block(LT, x0, R_inv)

    residuals = {
        "Pi(F+LH)-A Pi": float(np.linalg.norm(Pi @ (filt.F + filt.L @ H) - plant.A @ Pi)),
        "Pi G-B": float(np.linalg.norm(Pi @ filt.G - plant.B)),
        "H-C Pi": float(np.linalg.norm(H - plant.C @ Pi)),
        "A-Pi L C-LambdaTilde": float(np.linalg.norm(plant.A - Pi @ filt.L @ plant.C - LT)),
    }
    bound = tol * (1.0 + np.linalg.norm(plant.A))
    failed = {name: value for name, value in residuals.items() if value > bound}
    if failed:
        raise RealizationError(f"realization residuals above {bound:.3e}: {failed}")

    return GroundTruth(
        Pi=Pi,
        H=H,
        H0=H0,
        Theta_star=np.hstack([H0, H]),
        LambdaTilde=LT,
        PiL=PiL,
        residuals=residuals,
    )


def closed_loop_matrix(plant: StateSpacePlant, filt: FilterDesign, K: np.ndarray) -> np.ndarray:
    """[[A, BK], [LC, F+GK]] for the plant in feedback with the filter-based controller."""
    K = _as_matrix(K, plant.m, filt.mu, "K")
    return np.block([
        [plant.A, plant.B @ K],
        [filt.L @ plant.C, filt.F + filt.G @ K],
    ])


def controller_realization(filt: FilterDesign, K: np.ndarray) -> Dict[str, np.ndarray]:
    """Generic controller matrices: x_c' = A_c x_c + B_c y, u = C_c x_c + D_c y."""
    K = _as_matrix(K, filt.m, filt.mu, "K")
    return {
        "A_c": filt.F + filt.G @ K,
        "B_c": filt.L,
        "C_c": K,
        "D_c": np.zeros((filt.m, filt.p)),
    }


def _polyval_matrix(coeffs: Sequence[np.ndarray], s: complex) -> np.ndarray:
    value = np.zeros(coeffs[0].shape, dtype=complex)
    for coeff in reversed(coeffs):
        value = value * s + coeff
    return value


@dataclass(frozen=True, eq=False)
class RationalTransfer:
    """
    Matrix numerator over a monic scalar denominator, both stored with
    ascending coefficients.
    """

    numerator: Tuple[np.ndarray, ...]
    denominator: np.ndarray

    @classmethod
    def static(cls, gain) -> "RationalTransfer":
        return cls(numerator=(np.atleast_2d(np.asarray(gain, dtype=float)),), denominator=np.ones(1))

    def poles(self) -> np.ndarray:
        if self.denominator.size <= 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.denominator[::-1])

    def at(self, s: complex) -> np.ndarray:
        den = np.polyval(self.denominator[::-1], s)
        if abs(den) <= 1e-14 * np.abs(self.denominator).sum():
            raise PoleError(f"denominator vanishes at s={s}")
        return _polyval_matrix(self.numerator, s) / den

    def at_infinity(self) -> np.ndarray:
        """Limit for |s| -> infinity (the denominator is monic)."""
        degree = self.denominator.size - 1
        if len(self.numerator) - 1 > degree:
            raise PoleError("improper transfer function")
        if len(self.numerator) - 1 == degree:
            return self.numerator[-1].astype(complex)
        return np.zeros(self.numerator[0].shape, dtype=complex)


@dataclass(frozen=True, eq=False)
class StateSpaceTransfer:
    """C (sI - A)^-1 B + D"""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray] = None

    def poles(self) -> np.ndarray:
        return linalg.eigvals(self.A)

    def at(self, s: complex) -> np.ndarray:
        resolvent = s * np.eye(self.A.shape[0]) - self.A
        try:
            value = self.C @ linalg.solve(resolvent, self.B.astype(complex))
        except linalg.LinAlgError as e:
            raise PoleError(f"sI - A is singular at s={s}") from e
        return value + self.at_infinity()

    def at_infinity(self) -> np.ndarray:
        if self.D is None:
            return np.zeros((self.C.shape[0], self.B.shape[1]), dtype=complex)
        return self.D.astype(complex)


def _filter_denominator(filt: FilterDesign) -> np.ndarray:
    return np.append(filt.lambda_coeffs, 1.0)


def process_noise_transfer(coeffs: PlantCoefficients, filt: FilterDesign) -> RationalTransfer:
    """G_w(s) = N_w(s) / D_lambda(s)"""
    return RationalTransfer(numerator=coeffs.E_coeffs, denominator=_filter_denominator(filt))


def measurement_noise_transfer(coeffs: PlantCoefficients, filt: FilterDesign) -> RationalTransfer:
    """G_v(s) = D(s) / D_lambda(s)"""
    return RationalTransfer(
        numerator=coeffs.denominator_coeffs(), denominator=_filter_denominator(filt)
    )


def transfer_gain_at(transfer, s: complex) -> np.ndarray:
    """Evaluate a RationalTransfer or StateSpaceTransfer at s."""
    return transfer.at(s)
