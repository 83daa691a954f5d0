import numpy as np
import pytest

from anatvox.grid import Spacing, VoxelGrid

ISO = Spacing(1.0, 1.0, 1.0)
ANISO = Spacing(5.0, 0.78, 0.78)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def bool_grid(mask: np.ndarray, spacing: Spacing = ISO) -> VoxelGrid:
    return VoxelGrid(np.asarray(mask, dtype=np.bool_), spacing)


def random_mask(rng, shape, density=0.3) -> np.ndarray:
    return rng.random(shape) < density


def brute_edt(mask: np.ndarray, spacing: Spacing) -> np.ndarray:
    """All-pairs nearest-true-voxel distance in mm; inf for an empty mask."""
    shape = mask.shape
    weights = np.array(spacing.zyx)
    pts = np.argwhere(mask).astype(np.float64) * weights
    if pts.shape[0] == 0:
        return np.full(shape, np.inf)
    grids = np.meshgrid(
        np.arange(shape[0]) * weights[0],
        np.arange(shape[1]) * weights[1],
        np.arange(shape[2]) * weights[2],
        indexing="ij",
    )
    vox = np.stack(grids, axis=-1).reshape(-1, 3)
    d2 = ((vox[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    return np.sqrt(d2.min(axis=1)).reshape(shape)


def directed_surface_distances(src: np.ndarray, dst: np.ndarray, spacing: Spacing) -> np.ndarray:
    """Brute-force distances from each src voxel to the nearest dst voxel."""
    weights = np.array(spacing.zyx)
    a = np.argwhere(src).astype(np.float64) * weights
    b = np.argwhere(dst).astype(np.float64) * weights
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return np.sqrt(d2.min(axis=1))
