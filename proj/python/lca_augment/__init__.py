"""Python access to the LCA augmentation policy, transforms and metrics."""

import json

from . import _lca
from ._lca import DataError, IoError, ValidationError, operation_names, probability_ladder, sub_policies

__all__ = [
    "DataError",
    "IoError",
    "ValidationError",
    "apply_op",
    "apply_policy",
    "metrics_report",
    "operation_names",
    "probability_ladder",
    "replay",
    "sub_policies",
]


def apply_op(name, image, magnitude=0.0, partners=()):
    """Apply one named operation to an HxWx3 uint8 array."""
    return _lca.apply_op(name, image, magnitude, list(partners))


def apply_policy(image, probability, seed, partners=(), noise_scale=1.0):
    """Return (augmented image, applied record dict)."""
    out, record = _lca.apply_policy(image, probability, seed, list(partners), noise_scale)
    return out, json.loads(record)


def replay(image, record, partners=(), noise_scale=1.0):
    """Reproduce apply_policy output from its record."""
    return _lca.replay(image, json.dumps(record), list(partners), noise_scale)


def metrics_report(scores, truths, class_names):
    """Per-class and averaged metrics as a dict."""
    return json.loads(_lca.metrics_report([list(map(float, s)) for s in scores], list(truths), list(class_names)))
