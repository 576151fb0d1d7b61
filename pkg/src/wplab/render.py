"""Rasterizers for gardens and limiting vector fields, emitting binary PPM.

Images are plain P6 (8-bit RGB) so that output bytes are fully specified
by the pixel array: no compression, no metadata, no library surface.
Garden rasters color per-pixel tri-state membership and overlay the
cycle points and the critical point; vector-field rasters shade by field
strength and draw arrows on a coarse grid with poles and zeros marked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blaschke_core import critical_point
from .circle_dynamics import find_simple_cycle
from .gardens import GardenFrame, garden_membership_batch
from .vector_fields import VectorFieldModel, field_zeros, kappa_closed, kappa_measure

MIN_SIZE = 16

# Palette: membership tri-state, disk exterior, and overlays.
COLOR_IN = (46, 139, 87)
COLOR_OUT = (245, 245, 240)
COLOR_INDET = (200, 60, 50)
COLOR_EXTERIOR = (25, 25, 35)
COLOR_CIRCLE = (90, 90, 110)
COLOR_CYCLE = (255, 215, 0)
COLOR_CRITICAL = (30, 60, 255)
COLOR_POLE = (220, 40, 40)
COLOR_ZERO = (40, 90, 230)
COLOR_SINK = (250, 250, 60)
COLOR_ARROW = (15, 15, 15)


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB pixel grid over a rectangle of the complex plane."""

    width: int
    height: int
    pixels: np.ndarray
    viewport: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if self.width < MIN_SIZE or self.height < MIN_SIZE:
            raise ValueError(f"image dimensions must be at least {MIN_SIZE}")
        x0, x1, y0, y1 = self.viewport
        if not (x1 > x0 and y1 > y0):
            raise ValueError("viewport is degenerate")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError("pixel grid does not match the declared size")
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be 8-bit")


def write_ppm(image: RasterImage, path: str) -> None:
    """Binary P6 with maxval 255; bytes are a pure function of the pixels."""
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(image.pixels.tobytes())


def _pixel_centers(size: int, viewport: tuple[float, float, float, float]
                   ) -> np.ndarray:
    x0, x1, y0, y1 = viewport
    xs = x0 + (np.arange(size) + 0.5) * (x1 - x0) / size
    ys = y1 - (np.arange(size) + 0.5) * (y1 - y0) / size
    return xs[None, :] + 1j * ys[:, None]


def _to_pixel(z: complex, size: int,
              viewport: tuple[float, float, float, float]) -> tuple[int, int]:
    x0, x1, y0, y1 = viewport
    col = int((z.real - x0) / (x1 - x0) * size)
    row = int((y1 - z.imag) / (y1 - y0) * size)
    return row, col


def _stamp(pixels: np.ndarray, row: int, col: int, half: int,
           color: tuple[int, int, int]) -> None:
    h, w = pixels.shape[:2]
    r0, r1 = max(0, row - half), min(h, row + half + 1)
    c0, c1 = max(0, col - half), min(w, col + half + 1)
    if r0 < r1 and c0 < c1:
        pixels[r0:r1, c0:c1] = color


def _draw_segment(pixels: np.ndarray, r0: int, c0: int, r1: int, c1: int,
                  color: tuple[int, int, int]) -> None:
    n = max(abs(r1 - r0), abs(c1 - c0), 1)
    rows = np.rint(np.linspace(r0, r1, n + 1)).astype(int)
    cols = np.rint(np.linspace(c0, c1, n + 1)).astype(int)
    h, w = pixels.shape[:2]
    ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    pixels[rows[ok], cols[ok]] = color


@dataclass(frozen=True)
class GardenRaster:
    image: RasterImage
    indeterminate_pixels: int
    disk_pixels: int


DEFAULT_VIEWPORT = (-1.05, 1.05, -1.05, 1.05)


def render_garden(frame: GardenFrame, size: int = 512,
                  viewport: tuple[float, float, float, float] = DEFAULT_VIEWPORT,
                  overlays: bool = True,
                  chunk_rows: int = 64) -> GardenRaster:
    """Tri-state membership raster with cycle and critical-point overlays.

    Pixels outside the closed disk get a dark background, the circle a
    thin rim; inside, green marks the garden, off-white its complement,
    red the pixels where the linearizer did not settle (counted in the
    returned report rather than hidden).
    """
    x0, x1, y0, y1 = viewport
    if max(abs(x0), abs(x1), abs(y0), abs(y1)) > 1.5:
        raise ValueError("viewport should frame the unit disk")
    pixels = np.empty((size, size, 3), dtype=np.uint8)
    pixels[:] = COLOR_EXTERIOR
    centers = _pixel_centers(size, viewport)
    pix_diag = math.hypot((x1 - x0) / size, (y1 - y0) / size)
    indet = 0
    disk = 0
    for lo in range(0, size, chunk_rows):
        hi = min(lo + chunk_rows, size)
        block = centers[lo:hi].ravel()
        rad = np.abs(block)
        inside = (rad < 1.0) & (rad > 0.0)
        rim = np.abs(rad - 1.0) <= pix_diag
        tri = np.zeros(block.size, dtype=np.int8)
        if np.any(inside):
            tri[inside] = garden_membership_batch(frame, block[inside])
        colors = np.empty((block.size, 3), dtype=np.uint8)
        colors[:] = COLOR_EXTERIOR
        colors[inside & (tri == 0)] = COLOR_OUT
        colors[inside & (tri == 1)] = COLOR_IN
        colors[inside & (tri == -1)] = COLOR_INDET
        colors[rim] = COLOR_CIRCLE
        pixels[lo:hi] = colors.reshape(hi - lo, size, 3)
        indet += int(np.sum(inside & (tri == -1)))
        disk += int(np.sum(inside))
    if overlays:
        half = max(2, size // 170)
        try:
            cyc = find_simple_cycle(frame.a, frame.p, frame.q)
            for xi in cyc.xi:
                row, col = _to_pixel(complex(xi), size, viewport)
                _stamp(pixels, row, col, half, COLOR_CYCLE)
        except (ArithmeticError, ValueError):
            pass  # no simple cycle to draw at this parameter
        row, col = _to_pixel(critical_point(frame.a), size, viewport)
        _stamp(pixels, row, col, half, COLOR_CRITICAL)
    image = RasterImage(width=size, height=size, pixels=pixels,
                        viewport=viewport)
    return GardenRaster(image=image, indeterminate_pixels=indet,
                        disk_pixels=disk)


def render_vector_field(model: VectorFieldModel, size: int = 512,
                        viewport: tuple[float, float, float, float] = DEFAULT_VIEWPORT,
                        n_arrows: int = 18) -> RasterImage:
    """Shade |kappa| on log scale and draw arrows, poles, zeros, and the sink.

    Arrows sit on a square grid, scaled to a fixed pixel length with the
    head marked by a heavier stamp; pole pixels are left to the shading
    (the field blows up there) with a red marker on the pole itself.
    """
    centers = _pixel_centers(size, viewport)
    if model.q > 0:
        vals = kappa_closed(model.q, centers.ravel(), model.trace)
    else:
        assert model.measure is not None
        vals = kappa_measure(model.measure, centers.ravel())
    mag = np.abs(np.asarray(vals)).reshape(size, size)
    with np.errstate(divide="ignore"):
        level = np.log10(np.maximum(mag, 1e-12))
    lo, hi = -3.0, 1.0
    shade = np.clip((level - lo) / (hi - lo), 0.0, 1.0)
    # light background for weak field, steel blue toward the poles
    base = np.empty((size, size, 3), dtype=np.float64)
    base[..., 0] = 250.0 - 160.0 * shade
    base[..., 1] = 250.0 - 120.0 * shade
    base[..., 2] = 252.0 - 60.0 * shade
    pixels = base.astype(np.uint8)

    x0, x1, y0, y1 = viewport
    arrow_len = max(6, size // (2 * n_arrows))
    for gy in range(n_arrows):
        for gx in range(n_arrows):
            z = complex(x0 + (gx + 0.5) * (x1 - x0) / n_arrows,
                        y1 - (gy + 0.5) * (y1 - y0) / n_arrows)
            if min(abs(z - p) for p in model.poles) < 0.05:
                continue
            if model.q > 0:
                v = kappa_closed(model.q, z, model.trace)
            else:
                v = kappa_measure(model.measure, z)
            speed = abs(v)
            if speed < 1e-9:
                continue
            direction = v / speed
            row, col = _to_pixel(z, size, viewport)
            dr = int(round(-direction.imag * arrow_len))
            dc = int(round(direction.real * arrow_len))
            _draw_segment(pixels, row, col, row + dr, col + dc, COLOR_ARROW)
            _stamp(pixels, row + dr, col + dc, 1, COLOR_ARROW)
    marker = max(2, size // 128)
    for pole in model.poles:
        row, col = _to_pixel(pole, size, viewport)
        _stamp(pixels, row, col, marker, COLOR_POLE)
    for zero in field_zeros(model):
        row, col = _to_pixel(zero, size, viewport)
        _stamp(pixels, row, col, marker, COLOR_ZERO)
    row, col = _to_pixel(0.0 + 0.0j, size, viewport)
    _stamp(pixels, row, col, marker, COLOR_SINK)
    return RasterImage(width=size, height=size, pixels=pixels,
                       viewport=viewport)
