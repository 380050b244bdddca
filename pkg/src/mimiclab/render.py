"""Silhouette rasterizer for the simulated agent.

Each link is an oriented rectangle; a pixel belongs to the mask iff its
center lies inside any link (point-in-oriented-box test, no anti-aliasing).
The camera tracks the agent's root x, so masks are invariant to horizontal
translation of the whole body.

Masks are uint8 grids with values {0, 1}, row-major, row 0 at the top of
the view. Grayscale frames use a fixed per-link palette with lower link
indices drawn on top.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import physics as ph


@dataclass(frozen=True)
class Camera:
    center_x: float = 0.0   # m, follows the agent root
    center_y: float = 0.9   # m, fixed
    view_w: float = 3.0     # m
    view_h: float = 3.0     # m
    res_h: int = 64         # pixels
    res_w: int = 64         # pixels

    def __post_init__(self):
        if self.res_h <= 0 or self.res_w <= 0:
            raise ValueError("camera resolution must be positive")
        if self.view_w <= 0 or self.view_h <= 0:
            raise ValueError("camera view extent must be positive")


def follow_camera(cam: Camera, state: ph.SimState) -> Camera:
    """Camera re-centered on the agent's root x; everything else unchanged."""
    return replace(cam, center_x=float(state.root_pos[0]))


def pixel_centers(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """World coordinates of pixel centers as (X, Y) grids, row 0 on top."""
    xs = cam.center_x - cam.view_w / 2 + (np.arange(cam.res_w) + 0.5) * (
        cam.view_w / cam.res_w
    )
    ys = cam.center_y + cam.view_h / 2 - (np.arange(cam.res_h) + 0.5) * (
        cam.view_h / cam.res_h
    )
    return np.meshgrid(xs, ys)


def link_coverage(
    state: ph.SimState, morph: ph.MorphologySpec, cam: Camera
) -> np.ndarray:
    """Boolean (L, H, W) stack: pixel centers covered by each link."""
    X, Y = pixel_centers(cam)
    poses = ph.link_poses(morph, state)
    out = np.empty((len(morph.links), cam.res_h, cam.res_w), dtype=bool)
    for i, (link, (pos, angle)) in enumerate(zip(morph.links, poses)):
        dx = X - pos[0]
        dy = Y - pos[1]
        c, s = np.cos(angle), np.sin(angle)
        local_x = c * dx + s * dy
        local_y = -s * dx + c * dy
        out[i] = (np.abs(local_x) <= link.length / 2) & (
            np.abs(local_y) <= link.half_width
        )
    return out


def render_mask(
    state: ph.SimState, morph: ph.MorphologySpec, cam: Camera
) -> np.ndarray:
    """Binary silhouette: 1 where any link covers the pixel center."""
    return link_coverage(state, morph, cam).any(axis=0).astype(np.uint8)


def link_palette(n: int) -> np.ndarray:
    """Fixed grayscale per link; all values nonzero, lower index brighter."""
    return (255 - (np.arange(n) % 18) * 10).astype(np.uint8)


def render_frame(
    state: ph.SimState, morph: ph.MorphologySpec, cam: Camera
) -> np.ndarray:
    """Grayscale frame; links painted back-to-front so link 0 wins overlaps."""
    cover = link_coverage(state, morph, cam)
    palette = link_palette(len(morph.links))
    frame = np.zeros((cam.res_h, cam.res_w), dtype=np.uint8)
    for i in range(len(morph.links) - 1, -1, -1):
        frame[cover[i]] = palette[i]
    return frame
