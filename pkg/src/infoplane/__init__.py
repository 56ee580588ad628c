"""Matrix-based Renyi mutual information and Information Plane analysis of autoencoders."""

__version__ = "0.1.0"

from .mi import (DimensionScaler, MatrixRenyiMI, MIEstimate, WidthRule, gaussian_gram,
                 joint_entropy, kernel_width_new, kernel_width_old, kernel_width_silverman,
                 mutual_information, normalize_dims, renyi_entropy)
from .nets import Architecture, Autoencoder, MirroredAutoencoder, init_autoencoder

__all__ = [
    "Architecture",
    "Autoencoder",
    "DimensionScaler",
    "MIEstimate",
    "MatrixRenyiMI",
    "MirroredAutoencoder",
    "WidthRule",
    "gaussian_gram",
    "init_autoencoder",
    "joint_entropy",
    "kernel_width_new",
    "kernel_width_old",
    "kernel_width_silverman",
    "mutual_information",
    "normalize_dims",
    "renyi_entropy",
]
