"""Singular fractional p-Laplace problems on bounded domains of the Heisenberg group."""
from .hgroup import GroupPoint, ModelParams, compose, dilate, distance, inverse, koranyi_norm
from .mesh import DomainSpec, Mesh, build_mesh
from .operator import KernelGraph, assemble, energy_seminorm_p, residual
from .solver import (SingularExponentField, SolveConfig, SolveReport, SourceField,
                     monotone_solve, solve_level)
from .extremal import ExtremalResult, compute_extremal

__all__ = [
    "GroupPoint", "ModelParams", "compose", "dilate", "distance", "inverse", "koranyi_norm",
    "DomainSpec", "Mesh", "build_mesh",
    "KernelGraph", "assemble", "energy_seminorm_p", "residual",
    "SingularExponentField", "SolveConfig", "SolveReport", "SourceField",
    "monotone_solve", "solve_level",
    "ExtremalResult", "compute_extremal",
]
