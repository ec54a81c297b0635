# SPDX-License-Identifier: Apache-2.0
"""Semantic Gaussian fields: rendering, open-vocabulary queries and the toy pipeline."""

from ._core import (
    Camera,
    Scene,
    assemble_features,
    gradcheck,
    hungarian_match,
    miou_accuracy,
    open_vocab_segment,
    render,
    render_features_direct,
    run_toy,
    similarity_heatmap,
)

__all__ = [
    "Camera",
    "Scene",
    "assemble_features",
    "gradcheck",
    "hungarian_match",
    "miou_accuracy",
    "open_vocab_segment",
    "render",
    "render_features_direct",
    "run_toy",
    "similarity_heatmap",
]
