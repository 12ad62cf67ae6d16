"""Simplex visualization of the factor matrix ``H``.

Archetypes become vertices on the unit circle. Their cyclic order is an
exact shortest tour through the archetypes (in data space), and the circle
is divided into arcs proportional to the tour's edge lengths. Observations
are placed at ``sum_k H_kn * vertex_k``. Points may be coloured by their
normalized deviance (blue = 0, white = 1) and decorated with whiskers that
point toward the archetypes composing them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import NonFinite, PAAError

MAX_BRUTE_FORCE = 8
MAX_TSP = 15
WHISKER_THRESHOLD = 0.05
DEFAULT_WHISKER_SCALE = 0.15
START_ANGLE = math.pi / 2

# deviance colour map endpoints
COLOR_LOW = (0, 0, 255)
COLOR_HIGH = (255, 255, 255)


class TooManyArchetypes(PAAError):
    pass


@dataclass(frozen=True)
class VertexOrder:
    order: Tuple[int, ...]
    angles: np.ndarray
    degenerate: bool = False


@dataclass
class SimplexLayout:
    vertex_angles: np.ndarray
    point_coords: np.ndarray
    whiskers: List[List[Tuple[int, Tuple[float, float]]]]
    deviance_norm: Optional[np.ndarray]
    vertex_order: Tuple[int, ...]
    warnings: List[str] = field(default_factory=list)

    @property
    def vertex_coords(self) -> np.ndarray:
        return vertex_positions(self.vertex_angles)

    def to_dict(self) -> dict:
        return {
            "vertex_order": [int(k) for k in self.vertex_order],
            "vertex_angles": [float(a) for a in self.vertex_angles],
            "vertex_coords": self.vertex_coords.T.tolist(),
            "point_coords": self.point_coords.tolist(),
            "whiskers": [
                [{"archetype": int(k), "end": [float(e[0]), float(e[1])]} for k, e in ws]
                for ws in self.whiskers
            ],
            "deviance_norm": (None if self.deviance_norm is None
                              else [float(v) for v in self.deviance_norm]),
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# tours


def pairwise_distances(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    diff = z[:, :, None] - z[:, None, :]
    return np.sqrt(np.sum(diff ** 2, axis=0))


def tour_length(order: Sequence[int], dist: np.ndarray) -> float:
    order = list(order)
    return float(sum(dist[a, b] for a, b in zip(order, order[1:] + order[:1])))


def _canonical(order: Sequence[int]) -> Tuple[int, ...]:
    """Rotate to start at 0 and pick the lexicographically smaller direction."""
    order = list(order)
    i = order.index(0)
    fwd = order[i:] + order[:i]
    rev = [fwd[0]] + fwd[1:][::-1]
    return tuple(min(fwd, rev))


def brute_force_tour(dist: np.ndarray) -> Tuple[int, ...]:
    """Shortest cyclic tour by enumeration; the first (lexicographically
    smallest) tour wins ties."""
    k = dist.shape[0]
    if k <= 3:
        return tuple(range(k))
    best, best_len = None, math.inf
    for perm in itertools.permutations(range(1, k)):
        if perm[0] > perm[-1]:
            continue  # reversed duplicate
        order = (0,) + perm
        length = tour_length(order, dist)
        # a later tour must be shorter by more than rounding to replace the incumbent
        if best is None or length < best_len - 1e-12 * max(best_len, 1.0):
            best, best_len = order, length
    return best


def held_karp_tour(dist: np.ndarray) -> Tuple[int, ...]:
    """Shortest cyclic tour by dynamic programming over subsets."""
    k = dist.shape[0]
    if k <= 3:
        return tuple(range(k))
    m = k - 1  # cities 1..k-1 encoded as bits 0..m-1
    full = 1 << m
    cost = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=int)
    for j in range(m):
        cost[1 << j, j] = dist[0, j + 1]
    sub = dist[1:, 1:]
    for mask in range(1, full):
        members = [j for j in range(m) if mask >> j & 1]
        if len(members) < 2:
            continue
        for j in members:
            prev = mask ^ (1 << j)
            cand = cost[prev] + sub[:, j]
            cand[[i for i in range(m) if not prev >> i & 1]] = np.inf
            i = int(np.argmin(cand))
            cost[mask, j] = cand[i]
            parent[mask, j] = i
    closing = cost[full - 1] + dist[1:, 0]
    j = int(np.argmin(closing))
    mask, path = full - 1, []
    while j >= 0:
        path.append(j + 1)
        mask, j = mask ^ (1 << j), parent[mask, j]
    return _canonical([0] + path[::-1])


def order_vertices(z) -> VertexOrder:
    """Shortest cyclic order of the archetype columns of ``z`` and vertex
    angles with arcs proportional to consecutive tour distances."""
    dist = pairwise_distances(z)
    k = dist.shape[0]
    if k < 2:
        raise PAAError("need at least two archetypes to order")
    if k > MAX_TSP:
        raise TooManyArchetypes(f"exact ordering supports up to {MAX_TSP} archetypes, got {k}")
    if not np.any(dist > 0):
        return VertexOrder(tuple(range(k)), equal_angles(range(k)), degenerate=True)
    order = brute_force_tour(dist) if k <= MAX_BRUTE_FORCE else held_karp_tour(dist)
    edges = np.array([dist[a, b] for a, b in zip(order, order[1:] + order[:1])])
    arcs = 2.0 * math.pi * edges / edges.sum()
    angles = np.empty(k)
    theta = START_ANGLE
    for vertex, arc in zip(order, arcs):
        angles[vertex] = theta
        theta += arc
    return VertexOrder(tuple(order), angles)


def equal_angles(order: Sequence[int]) -> np.ndarray:
    order = list(order)
    k = len(order)
    angles = np.empty(k)
    for pos, vertex in enumerate(order):
        angles[vertex] = START_ANGLE + 2.0 * math.pi * pos / k
    return angles


# ---------------------------------------------------------------------------
# geometry


def vertex_positions(angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    return np.vstack([np.cos(angles), np.sin(angles)])


def project_points(h, angles, order=None) -> np.ndarray:
    """``N x 2`` coordinates of the columns of ``h``; ``angles[k]`` is the
    angle of archetype ``k`` (the order is already folded into them)."""
    h = np.asarray(getattr(h, "values", h), dtype=float)
    return (vertex_positions(angles) @ h).T


def compute_whiskers(h, point_coords, vertex_coords, length_scale: float = DEFAULT_WHISKER_SCALE,
                     threshold: float = WHISKER_THRESHOLD):
    """Segments from each point toward every archetype with weight above
    ``threshold``, of length ``length_scale * H_kn`` but never past the
    vertex (so they stay inside the circle)."""
    if not length_scale > 0:
        raise ValueError("length_scale must be positive")
    h = np.asarray(getattr(h, "values", h), dtype=float)
    pts = np.asarray(point_coords, dtype=float)
    verts = np.asarray(vertex_coords, dtype=float)
    out = []
    for n in range(h.shape[1]):
        p = pts[n]
        segs = []
        for k in np.flatnonzero(h[:, n] > threshold):
            direction = verts[:, k] - p
            room = float(np.hypot(*direction))
            if room == 0.0:
                end = p.copy()
            else:
                end = p + direction / room * min(length_scale * h[k, n], room)
            segs.append((int(k), (float(end[0]), float(end[1]))))
        out.append(segs)
    return out


def normalize_deviance(deviances) -> np.ndarray:
    """Min-max scaling to [0, 1]; a constant input maps to zeros."""
    d = np.asarray(deviances, dtype=float).ravel()
    if not np.all(np.isfinite(d)):
        raise NonFinite("deviances must be finite")
    if d.size == 0:
        return d
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.zeros_like(d)
    return np.clip((d - lo) / (hi - lo), 0.0, 1.0)


def build_layout(z, h, deviances=None, whiskers: bool = False, order: str = "tsp",
                 length_scale: float = DEFAULT_WHISKER_SCALE) -> SimplexLayout:
    h = np.asarray(getattr(h, "values", h), dtype=float)
    k = h.shape[0]
    warnings = []
    if order == "tsp" and k >= 2:
        vo = order_vertices(z)
        if vo.degenerate:
            warnings.append("all archetypes coincide; using equal angles")
        vertex_order, angles = vo.order, vo.angles
    elif order in ("tsp", "given"):
        vertex_order, angles = tuple(range(k)), equal_angles(range(k))
    else:
        raise ValueError(f"unknown vertex order {order!r}")
    pts = project_points(h, angles)
    segs = (compute_whiskers(h, pts, vertex_positions(angles), length_scale)
            if whiskers else [[] for _ in range(h.shape[1])])
    dev = None if deviances is None else normalize_deviance(deviances)
    return SimplexLayout(angles, pts, segs, dev, tuple(vertex_order), warnings)


# ---------------------------------------------------------------------------
# SVG

_SIZE = 400
_RADIUS = 160.0
_MARGIN = 200.0


def _xy(p) -> Tuple[str, str]:
    return f"{_MARGIN + _RADIUS * p[0]:.3f}", f"{_MARGIN - _RADIUS * p[1]:.3f}"


def deviance_color(t: float) -> str:
    rgb = [round(lo + (hi - lo) * float(t)) for lo, hi in zip(COLOR_LOW, COLOR_HIGH)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_svg(layout: SimplexLayout, show_deviance: bool = True, show_whiskers: bool = True,
               labels: Optional[Sequence[str]] = None) -> str:
    verts = layout.vertex_coords
    k = verts.shape[1]
    labels = list(labels) if labels is not None else [f"A{i + 1}" for i in range(k)]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SIZE}" '
        f'height="{_SIZE}" viewBox="0 0 {_SIZE} {_SIZE}">',
        f'<circle cx="{_MARGIN:.3f}" cy="{_MARGIN:.3f}" r="{_RADIUS:.3f}" fill="none" '
        'stroke="#bbbbbb" stroke-width="1"/>',
    ]
    order = list(layout.vertex_order)
    if k >= 2:
        pts = " ".join(",".join(_xy(verts[:, v])) for v in order)
        out.append(f'<polygon points="{pts}" fill="none" stroke="#888888" stroke-width="1"/>')
    if show_whiskers:
        for n, segs in enumerate(layout.whiskers):
            x1, y1 = _xy(layout.point_coords[n])
            for _, end in segs:
                x2, y2 = _xy(end)
                out.append(f'<line class="whisker" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                           'stroke="#555555" stroke-width="0.6"/>')
    for n, p in enumerate(layout.point_coords):
        if show_deviance and layout.deviance_norm is not None:
            fill = deviance_color(layout.deviance_norm[n])
        else:
            fill = "#444444"
        cx, cy = _xy(p)
        out.append(f'<circle class="point" cx="{cx}" cy="{cy}" r="3" fill="{fill}" '
                   'stroke="#333333" stroke-width="0.4"/>')
    for v in range(k):
        cx, cy = _xy(verts[:, v])
        lx, ly = _xy(verts[:, v] * 1.12)
        out.append(f'<circle class="vertex" cx="{cx}" cy="{cy}" r="4" fill="#000000"/>')
        out.append(f'<text x="{lx}" y="{ly}" font-family="sans-serif" font-size="12" '
                   f'text-anchor="middle" dominant-baseline="middle">{_escape(labels[v])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def render_curve_svg(ks: Sequence[int], values: Sequence[float], width: int = 480,
                     height: int = 320) -> str:
    """Line plot of best negative log-likelihood against K."""
    ks = [int(k) for k in ks]
    values = [float(v) for v in values]
    left, right, top, bottom = 60.0, 20.0, 20.0, 40.0
    kmin, kmax = min(ks), max(ks)
    vmin, vmax = min(values), max(values)
    kspan = (kmax - kmin) or 1
    vspan = (vmax - vmin) or 1.0

    def pos(k, v):
        x = left + (width - left - right) * (k - kmin) / kspan
        y = top + (height - top - bottom) * (vmax - v) / vspan
        return f"{x:.3f}", f"{y:.3f}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" '
        'stroke="#000000"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="#000000"/>',
        '<polyline fill="none" stroke="#1f4e9c" stroke-width="1.5" points="'
        + " ".join(",".join(pos(k, v)) for k, v in zip(ks, values)) + '"/>',
    ]
    for k, v in zip(ks, values):
        x, y = pos(k, v)
        out.append(f'<circle cx="{x}" cy="{y}" r="3" fill="#1f4e9c"/>')
        out.append(f'<text x="{x}" y="{height - bottom + 16}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="middle">{k}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
