"""PCA on distributed data: center columns, run an SVD, scale and project."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distmat import DistMatrix, mean_center_columns, mult_local
from .svd import ParameterError, RsvdParams, svd_normal_equations, svd_randomized, svd_tsqr


@dataclass
class PcaResult:
    """Component standard deviations, rotation, optional scores, column means."""

    sdev: np.ndarray
    rotation: np.ndarray
    scores: Optional[DistMatrix]
    means: np.ndarray


def pca(a, method="tssvd", ncomp=None, want_scores=False, params=None):
    """Principal components of a distributed data matrix.

    Columns are mean-centered, the chosen SVD runs on the centered data,
    and component standard deviations are sigma / sqrt(m - 1). method is
    one of "cpsvd", "tssvd", "rsvd"; rsvd takes its RsvdParams via
    `params` and can only deliver ncomp <= k components.
    """
    if a.global_rows < 2:
        raise ParameterError(f"pca needs at least 2 rows, got {a.global_rows}")
    if ncomp is None:
        ncomp = params.k if isinstance(params, RsvdParams) and method == "rsvd" else a.cols
    if not 1 <= ncomp <= a.cols:
        raise ParameterError(f"ncomp must be in 1..{a.cols}, got {ncomp}")

    centered, means = mean_center_columns(a)
    if method == "cpsvd":
        result = svd_normal_equations(centered, want_v=True)
    elif method == "tssvd":
        result = svd_tsqr(centered, want_v=True)
    elif method == "rsvd":
        if not isinstance(params, RsvdParams):
            raise ParameterError("method 'rsvd' requires RsvdParams via params=")
        if ncomp > params.k:
            raise ParameterError(
                f"rsvd computes only k={params.k} components, ncomp={ncomp} requested"
            )
        result = svd_randomized(centered, params, want_v=True)
    else:
        raise ParameterError(f"unknown pca method {method!r}")

    scale = np.sqrt(a.global_rows - 1)
    sdev = result.sigma[:ncomp] / result.sigma.dtype.type(scale)
    rotation = result.v[:, :ncomp]
    scores = mult_local(centered, rotation) if want_scores else None
    return PcaResult(sdev=sdev, rotation=rotation, scores=scores, means=means)
