"""Spectral-Galerkin laboratory for the strongly damped wave equation

    w_tt - Lap w_t + sigma(w) w_t - Lap w + f(w) = g

on the box (0, pi)^d with Dirichlet conditions.
"""
__version__ = "0.1.0"

from .spectral import BasisSpec, GridField, SpectralField, sobolev_norm, to_coeffs, to_grid
from .model import ModelSpec, default_model, make_damping, make_forcing, make_source, pitchfork_model
from .dynamics import SolverConfig, State, apply_U, random_state, simulate, step

__all__ = [
    "BasisSpec", "GridField", "SpectralField", "sobolev_norm", "to_coeffs", "to_grid",
    "ModelSpec", "default_model", "make_damping", "make_forcing", "make_source", "pitchfork_model",
    "SolverConfig", "State", "apply_U", "random_state", "simulate", "step",
]
