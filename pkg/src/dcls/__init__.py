"""Dilated convolution with learnable spacings: kernels, convolution engine, SNN delays."""

__version__ = "0.1.0"

from .conv import ConvSpec, col2im, conv_direct, conv_forward, im2col
from .interpolation import InterpKind
from .kernel import DclsParams
from .receptive_field import Layer, rf_chain
from .tensor import Tensor, load, save

__all__ = [
    "ConvSpec",
    "DclsParams",
    "InterpKind",
    "Layer",
    "Tensor",
    "col2im",
    "conv_direct",
    "conv_forward",
    "im2col",
    "load",
    "rf_chain",
    "save",
]
