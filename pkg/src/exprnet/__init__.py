"""Seven-expression face classification pipeline."""

from .tensor import Parameter, Tensor, TensorError

__all__ = ["Parameter", "Tensor", "TensorError"]
__version__ = "0.1.0"
