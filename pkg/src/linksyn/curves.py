"""Curve normalization, arc-length resampling, Chamfer distance, and the
deterministic feature embedding used to condition the generator.

Normalization maps the centroid to the origin and the maximum radial
distance to 1, so every normalized curve fits the unit disk (and hence the
[-1, 1] coordinate box the generator works in). Chamfer distance is the
plain symmetric mean-of-minima sum; it is translation-covariant by
construction but deliberately *not* invariant to rotation or reflection.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCurve, ParseError

EMBED_POINTS = 64
EMBED_DIM = 2 * EMBED_POINTS
_SCALE_TOL = 1e-12


@dataclass(frozen=True)
class Curve:
    """Ordered 2D point sequence; closed curves wrap last -> first."""

    points: np.ndarray
    closed: bool = True

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"curve points must be (n, 2), got {pts.shape}")
        if pts.shape[0] < 3:
            raise ValueError("curve needs at least 3 points")
        if not np.isfinite(pts).all():
            raise ValueError("curve has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.shape[0])


def _as_points(curve) -> np.ndarray:
    if isinstance(curve, Curve):
        return curve.points
    pts = np.asarray(curve, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    return pts


def normalize_curve(curve: Curve) -> tuple[Curve, np.ndarray, float]:
    """Center on the centroid and scale the max radius to 1.

    Returns (normalized curve, center, scale) so the transform can be
    inverted: original = normalized * scale + center.
    """
    pts = curve.points
    center = pts.mean(axis=0)
    shifted = pts - center
    scale = float(np.sqrt((shifted ** 2).sum(axis=1)).max())
    if scale < _SCALE_TOL:
        raise DegenerateCurve(f"curve has no extent (max radius {scale:.3e})")
    return Curve(shifted / scale, closed=curve.closed), center, scale


def resample_curve(curve: Curve, m: int) -> Curve:
    """Resample to m points uniformly spaced by arc length.

    Walks the closed polyline from the input's first point; the output
    starts at that same point.
    """
    if m < 3:
        raise ValueError(f"need m >= 3, got {m}")
    pts = curve.points
    if curve.closed:
        loop = np.vstack([pts, pts[:1]])
    else:
        loop = pts
    seg = np.sqrt(((loop[1:] - loop[:-1]) ** 2).sum(axis=1))
    cumulative = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(cumulative[-1])
    if total < _SCALE_TOL:
        raise DegenerateCurve("curve has zero arc length")

    if curve.closed:
        targets = total * np.arange(m) / m
    else:
        targets = total * np.arange(m) / (m - 1)
    x = np.interp(targets, cumulative, loop[:, 0])
    y = np.interp(targets, cumulative, loop[:, 1])
    return Curve(np.column_stack([x, y]), closed=curve.closed)


def chamfer_distance(c1, c2) -> float:
    """Symmetric Chamfer distance between two point sets.

    Mean nearest-neighbor distance from c1 to c2 plus the mean from c2 to
    c1. Accepts Curve objects or (n, 2) arrays; exact O(|c1|*|c2|) search.
    """
    a = _as_points(c1)
    b = _as_points(c2)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    return float(dist.min(axis=1).mean() + dist.min(axis=0).mean())


def curve_features(curve: Curve) -> np.ndarray:
    """Deterministic 128-dim embedding: normalize, resample to 64 points,
    flatten interleaved as (x0, y0, x1, y1, ...).

    Invariant to translation and uniform scaling of the input by
    construction of the normalization; rotation changes the embedding.
    """
    normalized, _, _ = normalize_curve(curve)
    resampled = resample_curve(normalized, EMBED_POINTS)
    return resampled.points.reshape(-1).copy()


# --- CSV exchange format: header "x,y" then one point per row ---

def curve_to_csv(curve: Curve) -> str:
    buf = io.StringIO()
    buf.write("x,y\n")
    for p in curve.points:
        buf.write(f"{float(p[0])!r},{float(p[1])!r}\n")
    return buf.getvalue()


def curve_from_csv(text: str) -> Curve:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.lower() == "x,y":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 'x,y' pair, got {line!r}", line=lineno)
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    if len(rows) < 3:
        raise ParseError("curve CSV needs at least 3 points")
    return Curve(np.array(rows, dtype=np.float64))
