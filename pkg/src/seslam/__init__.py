from .lie import GroupElement, TangentElement, compose, inverse  # noqa: F401
from .kernels import BACKEND  # noqa: F401

__version__ = "0.1.0"
