import numpy as np

from blesskit.kernels import Dataset


def identity_dataset(n):
    """Linear kernel on orthonormal rows: the Gram matrix is exactly I."""
    return Dataset(np.eye(n))


def repeated_point_dataset(n, d=2):
    """n copies of the same point: the Gaussian Gram matrix is all ones."""
    return Dataset(np.tile(np.linspace(0.1, 0.7, d), (n, 1)))
