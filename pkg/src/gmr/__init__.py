"""Global motion regression from local body poses.

Subpackages by concern: ``rot3`` (SO(3) representations), ``rigid`` (SE(3)
poses and motions), ``body`` (toy skeleton and mesh), ``tape`` (reverse-mode
autodiff), ``net`` (bidirectional GRU regressor and checkpoints),
``objective`` (losses and metrics), ``datagen`` (synthetic motion),
``trainer`` (training and evaluation), ``pipeline`` (inference and camera
simulation), ``config`` and ``cli``.
"""
from .config import TOOLKIT_VERSION as __version__

__all__ = ["__version__"]
