"""Feature-space diagnostics: redundancy counts, 2D KDE grids, PCA.

The KDE uses a Gaussian product kernel with Scott's rule per dimension
(h_i = std_i * n^(-1/6)) on a grid padded 3 bandwidths beyond the data.
Degenerate inputs (a zero-variance axis or perfectly correlated axes)
cannot be density-estimated, so they fall back to scatter mode, mirroring
how such classes have to be drawn as raw points.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .dataset import DatasetTable
from .errors import SchemaMismatch


def unique_value_counts(table: DatasetTable, features: Sequence[str]) -> Dict[str, Dict[str, int]]:
    """Distinct-value counts per (label, feature)."""
    out: Dict[str, Dict[str, int]] = {}
    labels = table.labels.astype(str)
    for lab in sorted(set(labels.tolist())):
        mask = labels == lab
        out[lab] = {f: int(np.unique(table.column(f)[mask]).size) for f in features}
    return out


def unique_row_counts(table: DatasetTable) -> Dict[str, int]:
    """Distinct full-feature rows per label."""
    labels = table.labels.astype(str)
    out = {}
    for lab in sorted(set(labels.tolist())):
        rows = table.rows[labels == lab]
        out[lab] = int(np.unique(rows, axis=0).shape[0])
    return out


@dataclass
class DensityGrid:
    x_range: tuple
    y_range: tuple
    resolution: int
    values: np.ndarray  # (r, r), zeros in scatter mode
    bandwidth: Optional[np.ndarray]  # 2x2 diag(h_x^2, h_y^2), None in scatter mode
    mode: str  # "kde" | "scatter"
    points: np.ndarray  # the input sample, kept for scatter rendering

    def integral(self) -> float:
        dx = (self.x_range[1] - self.x_range[0]) / (self.resolution - 1)
        dy = (self.y_range[1] - self.y_range[0]) / (self.resolution - 1)
        return float(self.values.sum() * dx * dy)


def kde_density(points: np.ndarray, resolution: int = 200) -> DensityGrid:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError("kde_density needs an n x 2 point array with n >= 1")
    n = pts.shape[0]
    sx = float(pts[:, 0].std())
    sy = float(pts[:, 1].std())
    degenerate = n < 2 or sx == 0.0 or sy == 0.0
    if not degenerate:
        corr = float(np.corrcoef(pts[:, 0], pts[:, 1])[0, 1])
        degenerate = abs(corr) >= 1.0 - 1e-12
    if degenerate:
        x0, x1 = float(pts[:, 0].min()), float(pts[:, 0].max())
        y0, y1 = float(pts[:, 1].min()), float(pts[:, 1].max())
        return DensityGrid((x0, x1), (y0, y1), resolution,
                           np.zeros((resolution, resolution)), None, "scatter", pts)

    factor = n ** (-1.0 / 6.0)  # Scott's rule in 2D
    hx = sx * factor
    hy = sy * factor
    x0, x1 = pts[:, 0].min() - 3 * hx, pts[:, 0].max() + 3 * hx
    y0, y1 = pts[:, 1].min() - 3 * hy, pts[:, 1].max() + 3 * hy
    gx = np.linspace(x0, x1, resolution)
    gy = np.linspace(y0, y1, resolution)
    # separable Gaussian kernel: values[i, j] = density at (gx[i], gy[j])
    kx = np.exp(-0.5 * ((gx[:, None] - pts[None, :, 0]) / hx) ** 2)
    ky = np.exp(-0.5 * ((gy[:, None] - pts[None, :, 1]) / hy) ** 2)
    values = kx @ ky.T / (n * 2.0 * np.pi * hx * hy)
    bw = np.diag([hx * hx, hy * hy])
    return DensityGrid((float(x0), float(x1)), (float(y0), float(y1)),
                       resolution, values, bw, "kde", pts)


@dataclass
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray  # (2, d), orthonormal rows
    explained: tuple  # fractions, non-increasing
    schema_hash: Optional[str] = None


def pca_fit(data, schema_hash: Optional[str] = None) -> PcaProjection:
    """Top-2 principal directions of the covariance, mean-centered."""
    X = data.rows if isinstance(data, DatasetTable) else np.asarray(data, dtype=np.float64)
    if isinstance(data, DatasetTable) and schema_hash is None:
        schema_hash = data.schema.hash
    if X.shape[0] < 2:
        raise ValueError("pca_fit needs at least 2 rows")
    mean = X.mean(axis=0)
    Z = X - mean
    cov = (Z.T @ Z) / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    comps = evecs[:, order[:2]].T.copy()
    # fix sign: largest-magnitude coordinate of each component is positive
    for i in range(comps.shape[0]):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    total = float(evals.sum())
    explained = tuple((evals[:2] / total).tolist()) if total > 0 else (0.0, 0.0)
    return PcaProjection(mean, comps, explained, schema_hash)


def pca_project(data, proj: PcaProjection) -> np.ndarray:
    if isinstance(data, DatasetTable):
        if proj.schema_hash is not None and data.schema.hash != proj.schema_hash:
            raise SchemaMismatch(
                f"projection fitted on schema {proj.schema_hash}, table has {data.schema.hash}"
            )
        X = data.rows
    else:
        X = np.asarray(data, dtype=np.float64)
    return (X - proj.mean) @ proj.components.T
