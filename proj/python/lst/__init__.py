"""Ladder side-tuning on a toy transformer.

Every function takes a dict of namespaced settings, e.g.
``{"model.layers": 2, "method.name": "lst", "side.r": 4}``; values may be
str, int, float, bool or a list of ints.
"""

from . import _core
from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    InputError,
    NumericError,
    WiringError,
    interleaved_keep,
    top_k_indices,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "InputError",
    "NumericError",
    "WiringError",
    "estimate_memory",
    "finetune",
    "grad_check",
    "interleaved_keep",
    "memory_report",
    "parameter_counts",
    "pretrain",
    "prune_init",
    "top_k_indices",
]


def _settings(cfg):
    out = {}
    for key, value in (cfg or {}).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        out[key] = str(value)
    return out


def memory_report(cfg=None):
    """Measured and estimated memory of one training step."""
    return _core.memory_report(_settings(cfg))


def estimate_memory(cfg=None, paper_mode=False):
    return _core.estimate_memory(_settings(cfg), paper_mode)


def grad_check(cfg=None, h=1e-4, tol=1e-4):
    return _core.grad_check(_settings(cfg), h, tol)


def pretrain(cfg=None, checkpoint=""):
    return _core.pretrain(_settings(cfg), str(checkpoint))


def finetune(cfg=None, backbone=""):
    return _core.finetune(_settings(cfg), str(backbone))


def prune_init(cfg=None, importance="magnitude", backbone=""):
    """Kept row indices per group of the pruned side network."""
    return _core.prune_init(_settings(cfg), importance, str(backbone))


def parameter_counts(cfg=None):
    """(total, trainable) element counts."""
    return _core.parameter_counts(_settings(cfg))
