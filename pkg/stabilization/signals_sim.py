"""
Excitation and noise signals, and fixed-step RK4 co-simulation of the
plant, the filter and the closed loop on a uniform grid.

Signals are analytic: integrator stages evaluate them at t, t + h/2 and
t + h directly, so no interpolation error enters the O(h^4) budget.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy import integrate

from .exceptions import DimensionError, SimulationError
from .plant_model import FilterDesign, GroundTruth, StateSpacePlant, closed_loop_matrix

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
SIGNAL_KINDS = ("sum_of_sinusoids", "fourier_series", "zero")
_EVAL_CHUNK = 4096

SeedLike = Union[None, int, np.random.Generator]


@dataclass(frozen=True, eq=False)
class SignalSpec:
    """
    A signal with `channels` components, one of

    - sum_of_sinusoids: sum_k a_ck sin(w_ck t + phi_ck), arrays (channels, k);
    - fourier_series: coefficients (channels, 2J+1) over the basis
      1/sqrt(T), sqrt(2/T) sin(2 pi j t/T'), sqrt(2/T) cos(2 pi j t/T'),
      ordered [const, sin_1, cos_1, ..., sin_J, cos_J];
    - zero.
    """

    kind: str
    channels: int
    amplitudes: Optional[np.ndarray] = None
    frequencies: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None
    coefficients: Optional[np.ndarray] = None
    horizon: Optional[float] = None
    period: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise DimensionError(f"unknown signal kind '{self.kind}'")
        if self.channels < 0:
            raise DimensionError("channel count must be non-negative")
        if self.kind == "sum_of_sinusoids":
            amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
            frequencies = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
            phases = (
                np.zeros_like(frequencies)
                if self.phases is None
                else np.atleast_2d(np.asarray(self.phases, dtype=float))
            )
            if not (amplitudes.shape == frequencies.shape == phases.shape):
                raise DimensionError("amplitudes, frequencies and phases must share a shape")
            if amplitudes.shape[0] != self.channels:
                raise DimensionError(
                    f"sinusoid arrays have {amplitudes.shape[0]} rows for {self.channels} channels"
                )
            if not np.all(np.isfinite(frequencies)):
                raise DimensionError("frequencies must be finite")
            object.__setattr__(self, "amplitudes", amplitudes)
            object.__setattr__(self, "frequencies", frequencies)
            object.__setattr__(self, "phases", phases)
        elif self.kind == "fourier_series":
            coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
            if coefficients.shape[0] != self.channels:
                raise DimensionError(
                    f"Fourier coefficients have {coefficients.shape[0]} rows for {self.channels} channels"
                )
            if coefficients.shape[1] % 2 != 1:
                raise DimensionError("Fourier coefficients need 2J+1 columns")
            if not self.horizon or self.horizon <= 0:
                raise DimensionError("Fourier signals need a positive horizon")
            object.__setattr__(self, "coefficients", coefficients)
            if self.period is None:
                object.__setattr__(self, "period", float(self.horizon))

    @classmethod
    def zero(cls, channels: int) -> "SignalSpec":
        return cls(kind="zero", channels=channels)

    @classmethod
    def sinusoids(cls, amplitudes, frequencies, phases=None) -> "SignalSpec":
        amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=float))
        return cls(
            kind="sum_of_sinusoids",
            channels=amplitudes.shape[0],
            amplitudes=amplitudes,
            frequencies=frequencies,
            phases=phases,
        )

    @classmethod
    def fourier(cls, coefficients, horizon: float, period: Optional[float] = None) -> "SignalSpec":
        coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
        return cls(
            kind="fourier_series",
            channels=coefficients.shape[0],
            coefficients=coefficients,
            horizon=float(horizon),
            period=None if period is None else float(period),
        )

    @property
    def order(self) -> int:
        if self.kind != "fourier_series":
            return 0
        return (self.coefficients.shape[1] - 1) // 2

    def _fourier_basis(self, times: np.ndarray) -> np.ndarray:
        J = self.order
        T = self.horizon
        angles = 2.0 * np.pi * np.outer(times, np.arange(1, J + 1)) / self.period
        basis = np.empty((times.size, 2 * J + 1))
        basis[:, 0] = 1.0 / np.sqrt(T)
        basis[:, 1::2] = np.sqrt(2.0 / T) * np.sin(angles)
        basis[:, 2::2] = np.sqrt(2.0 / T) * np.cos(angles)
        return basis

    def sample(self, times) -> np.ndarray:
        """Values at `times`, shape (len(times), channels)."""
        times = np.asarray(times, dtype=float).reshape(-1)
        if self.kind == "zero" or self.channels == 0:
            return np.zeros((times.size, self.channels))
        if self.kind == "sum_of_sinusoids":
            out = np.empty((times.size, self.channels))
            for start in range(0, times.size, _EVAL_CHUNK):
                chunk = times[start:start + _EVAL_CHUNK, None, None]
                waves = self.amplitudes * np.sin(chunk * self.frequencies + self.phases)
                out[start:start + _EVAL_CHUNK] = waves.sum(axis=2)
            return out
        out = np.empty((times.size, self.channels))
        for start in range(0, times.size, _EVAL_CHUNK):
            basis = self._fourier_basis(times[start:start + _EVAL_CHUNK])
            out[start:start + _EVAL_CHUNK] = basis @ self.coefficients.T
        return out

    def energy(self) -> float:
        """||c||^2, which equals the L2[0, T] energy when the period is T."""
        if self.kind == "zero":
            return 0.0
        if self.kind != "fourier_series":
            raise DimensionError("coefficient energy is only defined for Fourier signals")
        return float(np.sum(self.coefficients ** 2))

    def scaled(self, factor: float) -> "SignalSpec":
        if self.kind == "zero":
            return self
        if self.kind == "fourier_series":
            return SignalSpec.fourier(self.coefficients * factor, self.horizon, self.period)
        return SignalSpec.sinusoids(self.amplitudes * factor, self.frequencies, self.phases)

    def to_dict(self) -> Dict:
        data = {"kind": self.kind, "channels": self.channels}
        if self.kind == "sum_of_sinusoids":
            data.update(
                amplitudes=self.amplitudes.tolist(),
                frequencies=self.frequencies.tolist(),
                phases=self.phases.tolist(),
            )
        elif self.kind == "fourier_series":
            data.update(
                coefficients=self.coefficients.tolist(),
                horizon=self.horizon,
                period=self.period,
            )
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "SignalSpec":
        return cls(
            kind=data["kind"],
            channels=int(data["channels"]),
            amplitudes=data.get("amplitudes"),
            frequencies=data.get("frequencies"),
            phases=data.get("phases"),
            coefficients=data.get("coefficients"),
            horizon=data.get("horizon"),
            period=data.get("period"),
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Uniformly sampled experiment. Only t, u and y are measured; w, v, x
    (and x_c for closed-loop runs) are kept for verification.
    """

    h: float
    T: float
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    w: np.ndarray
    v: np.ndarray
    x: np.ndarray
    xc: Optional[np.ndarray] = None

    measured = ("t", "u", "y")
    hidden = ("w", "v", "x", "xc")


@dataclass(frozen=True, eq=False)
class FilteredData:
    t: np.ndarray
    chi: np.ndarray
    z_hat: np.ndarray

    @property
    def zeta(self) -> np.ndarray:
        return np.hstack([self.chi, self.z_hat])


@dataclass(frozen=True, eq=False)
class DisturbanceTrajectory:
    t: np.ndarray
    d: np.ndarray
    d_w: np.ndarray
    d_v: np.ndarray


def time_grid(h: float, T: float) -> Tuple[int, float, np.ndarray]:
    """Number of steps K, the exact step T/K and the K+1 grid points."""
    if h <= 0 or T <= 0:
        raise SimulationError(f"step and horizon must be positive, got h={h}, T={T}")
    K = int(round(T / h))
    if K < 1 or abs(K * h - T) > 1e-9 * max(T, 1.0):
        raise SimulationError(f"step h={h} does not divide the horizon T={T}")
    return K, T / K, np.linspace(0.0, T, K + 1)


def sample_l2_ball(
    channels: int,
    order: int,
    horizon: float,
    radius_sq: float,
    seed: SeedLike = None,
    period: Optional[float] = None,
    on_sphere: bool = False,
) -> SignalSpec:
    """
    Fourier signal drawn uniformly from the ball ||c||^2 <= radius_sq
    (or from its boundary sphere when on_sphere is set).

    With period == horizon the basis is orthonormal on [0, T], so the
    signal energy equals ||c||^2.
    """
    if radius_sq < 0:
        raise DimensionError("radius_sq must be non-negative")
    rng = np.random.default_rng(seed)
    dim = channels * (2 * order + 1)
    if channels == 0:
        return SignalSpec.zero(0)
    if radius_sq == 0:
        return SignalSpec.fourier(np.zeros((channels, 2 * order + 1)), horizon, period)

    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    radius = np.sqrt(radius_sq)
    if not on_sphere:
        radius *= rng.uniform() ** (1.0 / dim)
    coefficients = (radius * direction).reshape(channels, 2 * order + 1)
    return SignalSpec.fourier(coefficients, horizon, period)


def signal_energy(t: np.ndarray, samples: np.ndarray) -> float:
    """Trapezoid estimate of the squared L2[0, T] norm."""
    samples = np.asarray(samples).reshape(t.size, -1)
    return float(integrate.trapezoid(np.sum(samples ** 2, axis=1), t))


def _stage_inputs(specs, K: int, T: float) -> np.ndarray:
    """Stack the exogenous signals on the half-step grid (2K+1 rows)."""
    half_grid = np.linspace(0.0, T, 2 * K + 1)
    return np.hstack([spec.sample(half_grid) for spec in specs])


def _integrate_linear(M: np.ndarray, N: np.ndarray, inputs: np.ndarray, state0: np.ndarray, h: float) -> np.ndarray:
    """Classical RK4 for x' = M x + N s(t) with s given on the half-step grid."""
    K = (inputs.shape[0] - 1) // 2
    forcing = inputs @ N.T if N.size else np.zeros((inputs.shape[0], M.shape[0]))
    states = np.empty((K + 1, M.shape[0]))
    states[0] = state0
    x = np.array(state0, dtype=float)
    half = 0.5 * h
    sixth = h / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            f_mid = forcing[2 * k + 1]
            k1 = M @ x + forcing[2 * k]
            k2 = M @ (x + half * k1) + f_mid
            k3 = M @ (x + half * k2) + f_mid
            k4 = M @ (x + h * k3) + forcing[2 * k + 2]
            x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            states[k + 1] = x
    if not np.all(np.isfinite(states)):
        raise SimulationError("non-finite values encountered during integration")
    return states


def _check_channels(spec: Optional[SignalSpec], channels: int, label: str) -> SignalSpec:
    if spec is None:
        return SignalSpec.zero(channels)
    if spec.channels != channels:
        raise DimensionError(f"{label} has {spec.channels} channels, expected {channels}")
    return spec


def _initial_state(value, size: int, label: str) -> np.ndarray:
    if value is None:
        return np.zeros(size)
    value = np.asarray(value, dtype=float).reshape(-1)
    if value.shape != (size,):
        raise DimensionError(f"{label} must have {size} entries")
    return value


def simulate_open_loop(
    plant: StateSpacePlant,
    filt: FilterDesign,
    u_spec: SignalSpec,
    w_spec: Optional[SignalSpec],
    v_spec: Optional[SignalSpec],
    x0=None,
    h: float = DEFAULT_STEP,
    T: float = 1.0,
) -> Tuple[Trajectory, FilteredData]:
    """
    Integrate the plant together with the filter

        x' = A x + B u + E w,  chi' = Lambda chi (chi(0) = Gamma),
        z_hat' = F z_hat + G u + L y (z_hat(0) = 0),  y = C x + v.
    """
    u_spec = _check_channels(u_spec, plant.m, "input")
    w_spec = _check_channels(w_spec, plant.q, "process noise")
    v_spec = _check_channels(v_spec, plant.p, "measurement noise")
    x0 = _initial_state(x0, plant.order, "x0")
    K, h, t = time_grid(h, T)

    nx, n, mu = plant.order, filt.n, filt.mu
    m, q, p = plant.m, plant.q, plant.p
    size = nx + n + mu
    M = np.zeros((size, size))
    M[:nx, :nx] = plant.A
    M[nx:nx + n, nx:nx + n] = filt.Lambda
    M[nx + n:, :nx] = filt.L @ plant.C
    M[nx + n:, nx + n:] = filt.F
    N = np.zeros((size, m + q + p))
    N[:nx, :m] = plant.B
    N[:nx, m:m + q] = plant.E
    N[nx + n:, :m] = filt.G
    N[nx + n:, m + q:] = filt.L

    inputs = _stage_inputs((u_spec, w_spec, v_spec), K, T)
    state0 = np.concatenate([x0, filt.Gamma, np.zeros(mu)])
    states = _integrate_linear(M, N, inputs, state0, h)
    logger.debug("open-loop simulation finished: K=%d, h=%.3e", K, h)

    on_grid = inputs[::2]
    u, w, v = on_grid[:, :m], on_grid[:, m:m + q], on_grid[:, m + q:]
    x = states[:, :nx]
    trajectory = Trajectory(h=h, T=T, t=t, u=u, y=x @ plant.C.T + v, w=w, v=v, x=x)
    filtered = FilteredData(t=t, chi=states[:, nx:nx + n], z_hat=states[:, nx + n:])
    return trajectory, filtered


def simulate_closed_loop(
    plant: StateSpacePlant,
    filt: FilterDesign,
    K: np.ndarray,
    x0=None,
    xc0=None,
    w_spec: Optional[SignalSpec] = None,
    v_spec: Optional[SignalSpec] = None,
    h: float = DEFAULT_STEP,
    T: float = 1.0,
) -> Trajectory:
    """Plant in feedback with x_c' = (F + GK) x_c + L y, u = K x_c."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (plant.m, filt.mu):
        raise DimensionError(f"K must be {plant.m}x{filt.mu}, got {K.shape}")
    w_spec = _check_channels(w_spec, plant.q, "process noise")
    v_spec = _check_channels(v_spec, plant.p, "measurement noise")
    x0 = _initial_state(x0, plant.order, "x0")
    xc0 = _initial_state(xc0, filt.mu, "xc0")
    steps, h, t = time_grid(h, T)

    nx, q, p = plant.order, plant.q, plant.p
    M = closed_loop_matrix(plant, filt, K)
    N = np.zeros((nx + filt.mu, q + p))
    N[:nx, :q] = plant.E
    N[nx:, q:] = filt.L

    inputs = _stage_inputs((w_spec, v_spec), steps, T)
    states = _integrate_linear(M, N, inputs, np.concatenate([x0, xc0]), h)

    on_grid = inputs[::2]
    w, v = on_grid[:, :q], on_grid[:, q:]
    x, xc = states[:, :nx], states[:, nx:]
    return Trajectory(
        h=h, T=T, t=t, u=xc @ K.T, y=x @ plant.C.T + v, w=w, v=v, x=x, xc=xc
    )


def simulate_disturbance(
    plant: StateSpacePlant,
    truth: GroundTruth,
    w_spec: Optional[SignalSpec],
    v_spec: Optional[SignalSpec],
    h: float = DEFAULT_STEP,
    T: float = 1.0,
) -> DisturbanceTrajectory:
    """
    d = d_w + d_v with eta_w' = LambdaTilde eta_w + E w, d_w = C eta_w and
    eta_v' = LambdaTilde eta_v - Pi L v, d_v = C eta_v + v, zero initial state.
    """
    w_spec = _check_channels(w_spec, plant.q, "process noise")
    v_spec = _check_channels(v_spec, plant.p, "measurement noise")
    K, h, t = time_grid(h, T)

    nx, q, p = plant.order, plant.q, plant.p
    LT = truth.LambdaTilde
    M = np.block([[LT, np.zeros_like(LT)], [np.zeros_like(LT), LT]])
    N = np.zeros((2 * nx, q + p))
    N[:nx, :q] = plant.E
    N[nx:, q:] = -truth.PiL

    inputs = _stage_inputs((w_spec, v_spec), K, T)
    states = _integrate_linear(M, N, inputs, np.zeros(2 * nx), h)

    v = inputs[::2, q:]
    d_w = states[:, :nx] @ plant.C.T
    d_v = states[:, nx:] @ plant.C.T + v
    return DisturbanceTrajectory(t=t, d=d_w + d_v, d_w=d_w, d_v=d_v)
