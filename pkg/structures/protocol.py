"""
ClosedFormStructure protocol: the interface closed-form models must satisfy.

To add a closed-form model:
  1. Create structures/<name>.py with module-level functions matching this
     protocol (the module object itself is the implementation).
  2. Register it in structures.closed_form_for().

All functions are batched: X and L are (B, n) arrays of base points and
initial covectors, t is a scalar or a (B,) array. The numeric flow
(flow.py) is model-agnostic and is always available as a cross-check; the
closed forms only speed up and sharpen what it computes.
"""

from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class ClosedFormStructure(Protocol):
    """
    exp: position exp_X(tL)
    covector: covector at time t along the extremal
    exp_jacobian: ∂ exp_X(tL)/∂L, i.e. N^V_0(t) in the canonical frame
    cut_time: closed-form cut time (inf for non-cut directions)
    in_domain: whether L lies strictly inside the cut-time domain at horizon 1
    beta: distortion coefficient β_t
    inverse_seeds: candidate minimizing covectors for X → Y (scalar reduction)
    """

    def exp(self, X: np.ndarray, L: np.ndarray, t) -> np.ndarray: ...

    def covector(self, X: np.ndarray, L: np.ndarray, t) -> np.ndarray: ...

    def exp_jacobian(self, X: np.ndarray, L: np.ndarray, t) -> np.ndarray: ...

    def cut_time(self, L: np.ndarray) -> np.ndarray: ...

    def in_domain(self, X: np.ndarray, L: np.ndarray) -> np.ndarray: ...

    def beta(self, X: np.ndarray, L: np.ndarray, t) -> np.ndarray: ...

    def inverse_seeds(self, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...
