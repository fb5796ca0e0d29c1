"""Class maps, disagreement maps and mosaics as PPM images."""

from sitswin.render.palette import IGNORE_COLOR, Palette, class_color, default_colors
from sitswin.render.images import (
    grid_shape,
    ppm_bytes,
    read_ppm,
    render_class_map,
    render_diff,
    render_rgb,
    stitch,
    write_ppm,
)

__all__ = [
    "IGNORE_COLOR",
    "Palette",
    "class_color",
    "default_colors",
    "grid_shape",
    "ppm_bytes",
    "read_ppm",
    "render_class_map",
    "render_diff",
    "render_rgb",
    "stitch",
    "write_ppm",
]
