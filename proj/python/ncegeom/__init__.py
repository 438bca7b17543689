"""Latent-class model of contrastive learning with k negatives."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import metrics_json as _metrics_json
from ._core import validate_improved_bound as _validate_improved_bound


def metrics(path, normalize=False, strict_unit_norm=False):
    """Intra-Var and class-mean cosine similarity of an embeddings CSV, as a dict."""
    return _json.loads(_metrics_json(path, normalize, strict_unit_norm))


def improved_bound_report(Z, rho, k, beta=1.0):
    """validate_improved_bound as a dict."""
    return _json.loads(_validate_improved_bound(Z, rho, k, beta))
