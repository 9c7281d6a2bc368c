"""Desk-scale multi-round preference-guided diffusion training loop (VCA).

The compiled extension carries the implementation; this package re-exports
its public surface.
"""

from ._vca import (
    ArgumentError,
    DatasetError,
    Denoiser,
    NumericError,
    RewardSchedule,
    Scorer,
    consistency_reward,
    cosine_similarity,
    diversity_reward,
    equal_weight_probe,
    gaussian_tv_1d,
    pareto_front,
    run_convergence,
    scalarization_argmax,
)

__all__ = [
    "ArgumentError",
    "DatasetError",
    "Denoiser",
    "NumericError",
    "RewardSchedule",
    "Scorer",
    "consistency_reward",
    "cosine_similarity",
    "diversity_reward",
    "equal_weight_probe",
    "gaussian_tv_1d",
    "pareto_front",
    "run_convergence",
    "scalarization_argmax",
]
