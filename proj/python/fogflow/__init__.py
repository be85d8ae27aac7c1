"""Optical flow in dense fog: fog physics, losses, metrics, I/O and inference.

Images are float32 arrays shaped (3, H, W) in [0, 1]; flows are (2, H, W).
"""

from ._fogflow import (
    CheckpointError,
    ConfigError,
    FormatError,
    Model,
    NonFiniteLossError,
    alpha_from_depth,
    atmospheric_light_chroma,
    chromaticity,
    cli,
    consistency_mask,
    cost_volume,
    default_config,
    flow_to_color,
    hazeline_loss,
    metric_bad_pixel,
    metric_epe,
    read_depth,
    read_flo,
    read_image,
    render_fog,
    save_initial_checkpoint,
    train,
    warp,
    write_flo,
    write_png,
)

__all__ = [name for name in dir() if not name.startswith("_")]
