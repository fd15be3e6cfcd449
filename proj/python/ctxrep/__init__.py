# SPDX-License-Identifier: Apache-2.0
"""Contextual-space repulsion toolkit."""

from ._ctxrep import (
    CtxrepError,
    average_pair_vendi,
    blend,
    cosine_kernel,
    eigh,
    entropy_and_score,
    entropy_gradient,
    rbf_kernel,
    repulse,
    run_command,
    simulate,
    vendi,
)

__all__ = [
    "CtxrepError",
    "average_pair_vendi",
    "blend",
    "cosine_kernel",
    "eigh",
    "entropy_and_score",
    "entropy_gradient",
    "rbf_kernel",
    "repulse",
    "run_command",
    "simulate",
    "vendi",
]
__version__ = "0.1.0"
