"""Python bindings for the DIN super-resolution kit."""

from ._core import (
    ConfigError,
    Error,
    FusionMode,
    IoError,
    Model,
    ModelConfig,
    NumericError,
    ShapeError,
    TrainConfig,
    bicubic_resize,
    count_parameters,
    gradcheck,
    psnr_y,
    read_png,
    rgb_to_y,
    ssim_y,
    train,
    write_png,
)

__all__ = [
    "ConfigError",
    "Error",
    "FusionMode",
    "IoError",
    "Model",
    "ModelConfig",
    "NumericError",
    "ShapeError",
    "TrainConfig",
    "bicubic_resize",
    "count_parameters",
    "gradcheck",
    "psnr_y",
    "read_png",
    "rgb_to_y",
    "ssim_y",
    "train",
    "write_png",
]
