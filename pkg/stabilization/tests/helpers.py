import numpy as np

from ..plant_model import PlantCoefficients, build_state_space, compute_ground_truth, design_filter
from ..presets import get_preset
from ..signals_sim import SignalSpec


def plant_from_preset(name: str):
    """(coefficients, plant, filter, truth) of a built-in config."""
    cfg = get_preset(name)
    plant_cfg = cfg["plant"]
    coeffs = PlantCoefficients(
        n=plant_cfg["n"], m=plant_cfg["m"], p=plant_cfg["p"], q=plant_cfg["q"],
        A_coeffs=tuple(plant_cfg["A"]),
        B_coeffs=tuple(plant_cfg["B"]),
        E_coeffs=tuple(plant_cfg["E"]),
    )
    plant = build_state_space(coeffs)
    filt = design_filter(cfg["filter"]["Lambda"], cfg["filter"]["Gamma"], m=coeffs.m, p=coeffs.p)
    truth = compute_ground_truth(plant, filt, cfg["x0"])
    return coeffs, plant, filt, truth


def preset_input(name: str) -> SignalSpec:
    return SignalSpec.from_dict(get_preset(name)["input"])


def scalar_closed_form(t: np.ndarray, omega: float = 5.0 * np.pi) -> np.ndarray:
    """Response of x' = x + sin(omega t), x(0) = 0."""
    return (omega * np.exp(t) - omega * np.cos(omega * t) - np.sin(omega * t)) / (1.0 + omega ** 2)
