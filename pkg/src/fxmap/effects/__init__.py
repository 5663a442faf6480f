"""Differentiable vocal effects chain and preset fitting."""

from .chain import EffectsChain, PhysicalParams, default_chain, map_params, render
from .fit import FitResult, fit_preset
from .layout import LAYOUT_VERSION, NUM_PARAMS, THETA_NEUTRAL, neutral

__all__ = [
    "EffectsChain",
    "FitResult",
    "LAYOUT_VERSION",
    "NUM_PARAMS",
    "PhysicalParams",
    "THETA_NEUTRAL",
    "default_chain",
    "fit_preset",
    "map_params",
    "neutral",
    "render",
]
