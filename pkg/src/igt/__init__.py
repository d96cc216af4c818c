"""Intermolecular Graph Transformer: a three-tower graph transformer for
protein-ligand activity and pose classification, built on numpy with a
small compiled kernel core."""

from __future__ import annotations

from .errors import IGTError
from .featurize import FeatureConfig, featurize_complex
from .kernels import BACKEND
from .model import ModelConfig, forward, init_params, load_model, predict, save_model
from .structio import parse_pdb, parse_sdf, read_manifest

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FeatureConfig", "IGTError", "ModelConfig", "featurize_complex", "forward",
    "init_params", "load_model", "parse_pdb", "parse_sdf", "predict", "read_manifest", "save_model",
]
