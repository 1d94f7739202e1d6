"""
Built-in experiment configurations: the unstable scalar plant and the
linearized batch reactor.
"""

import copy
import math

REACTOR_HORIZON = 3.0


def _reactor_input(horizon: float = REACTOR_HORIZON, terms: int = 6) -> dict:
    # channel c uses the odd (c=0) or even (c=1) multiples of pi/T
    frequencies = [
        [(2 * k + 1 + channel) * math.pi / horizon for k in range(terms)]
        for channel in range(2)
    ]
    return {
        "kind": "sum_of_sinusoids",
        "channels": 2,
        "amplitudes": [[1.0] * terms for _ in range(2)],
        "frequencies": frequencies,
        "phases": [[0.0] * terms for _ in range(2)],
    }


SCALAR_EXAMPLE = {
    "name": "scalar_example",
    "plant": {
        "n": 1,
        "m": 1,
        "p": 1,
        "q": 1,
        "A": [[[-1.0]]],
        "B": [[[1.0]]],
        "E": [[[1.0]]],
    },
    "x0": [0.0],
    "filter": {"Lambda": [[-2.0]], "Gamma": [2.0]},
    "horizon": 1.0,
    "step": 1e-4,
    "input": {
        "kind": "sum_of_sinusoids",
        "channels": 1,
        "amplitudes": [[1.0]],
        "frequencies": [[5.0 * math.pi]],
        "phases": [[0.0]],
    },
    "noise": {
        "delta_w": 0.8e-3,
        "delta_v": 0.3e-3,
        "mode": "sampled",
        "seed": 0,
        "fourier_order": 50,
        "period": 1.0,
        "on_sphere": True,
        "gamma": 0.33,
    },
    "synthesis": {"objective": "max_decay", "solver": "CLARABEL"},
}

BATCH_REACTOR = {
    "name": "batch_reactor",
    "plant": {
        "n": 2,
        "m": 2,
        "p": 2,
        "q": 2,
        "A": [
            [[-20.97, -48.63], [2.643, 5.867]],
            [[5.297, -10.47], [-0.2764, 6.371]],
        ],
        "B": [
            [[-59.44, -12.63], [12.59, 0.8696]],
            [[0.0, -3.146], [5.679, 0.0]],
        ],
        "E": [
            [[1.0, 0.0], [0.0, 1.0]],
            [[0.0, 0.0], [0.0, 0.0]],
        ],
    },
    "x0": [0.0, 0.0, 0.0, 0.0],
    "filter": {"Lambda": [[0.0, -12.0], [1.0, -7.0]], "Gamma": [0.0, 1.0]},
    "horizon": REACTOR_HORIZON,
    "step": 1e-4,
    "input": _reactor_input(),
    "noise": {
        "delta_w": 0.0,
        "delta_v": 0.0,
        "mode": "sampled",
        "seed": 0,
        "fourier_order": 100,
        "period": REACTOR_HORIZON,
        "on_sphere": False,
        "gamma": 0.07685,
    },
    "synthesis": {"objective": "feasibility", "solver": "CLARABEL"},
    "monte_carlo": {
        "delta_w_levels": None,
        "runs_per_level": 50,
        "base_seed": 0,
        "workers": 1,
    },
}

PRESETS = {
    "scalar_example": SCALAR_EXAMPLE,
    "batch_reactor": BATCH_REACTOR,
}


def get_preset(name: str) -> dict:
    """Deep copy of a built-in configuration"""
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset '{name}', choose from {sorted(PRESETS)}")
