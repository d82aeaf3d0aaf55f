"""Counting and localizing objects in Gaussian density maps.

Density maps are float32 arrays indexed [row, col] or [slice, row, col].
Points are (n, 2) or (n, 3) float arrays of (x, y[, z]) = (col, row[, slice]).
"""

import json as _json

from ._core import (
    Error,
    FormatError,
    IoError,
    Kernel,
    analyze_dma,
    cca_t,
    corrupt_density,
    count_dma,
    count_iodm,
    generate_scene,
    label_components,
    local_maxima,
    mahalanobis_radius_for_threshold,
    mass_within_radius,
    match_points,
    read_dmap,
    read_points,
    render,
    write_dmap,
    write_points,
)


def evaluate_manifest(manifest, kernel, methods=("dma", "cca-t", "iodm"), cca_threshold=None,
                      radius=5.0, seed=0, threads=1):
    """Score methods on a dataset manifest and return the report as a dict.

    Without ``cca_threshold`` the CCA-T threshold is swept on the same set.
    """
    from ._core import evaluate_manifest_json

    return _json.loads(evaluate_manifest_json(str(manifest), kernel, list(methods), cca_threshold,
                                              radius, seed, threads))


__all__ = [
    "Error",
    "FormatError",
    "IoError",
    "Kernel",
    "analyze_dma",
    "cca_t",
    "corrupt_density",
    "count_dma",
    "count_iodm",
    "evaluate_manifest",
    "generate_scene",
    "label_components",
    "local_maxima",
    "mahalanobis_radius_for_threshold",
    "mass_within_radius",
    "match_points",
    "read_dmap",
    "read_points",
    "render",
    "write_dmap",
    "write_points",
]
