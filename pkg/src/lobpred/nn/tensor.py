from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    pass


class NonFiniteActivation(NonFiniteError):
    def __init__(self, layer_index: int, name: str = ""):
        super().__init__(f"non-finite activation after layer {layer_index} {name}".rstrip())
        self.layer_index = layer_index


class NonFiniteGradient(NonFiniteError):
    pass


class ShapeMismatch(ValueError):
    def __init__(self, layer_index: int, detail: str):
        super().__init__(f"layer {layer_index}: {detail}")
        self.layer_index = layer_index


class Tensor:
    """Dense float64 parameter with an accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = True, name: str = ""):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def check_finite(self) -> None:
        if not np.isfinite(self.data).all():
            raise NonFiniteError(f"parameter {self.name or '?'} has non-finite values")
        if self.grad is not None and not np.isfinite(self.grad).all():
            raise NonFiniteGradient(f"gradient of {self.name or '?'} is non-finite")

    def __repr__(self) -> str:
        return f"Tensor({self.name!r}, shape={self.shape})"
