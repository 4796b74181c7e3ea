"""Level-set extraction by marching squares and arc-length resampling.

Every segment is oriented so that values above the level lie on its left.
Consequently the left normal of a path is the direction of the field
gradient, closed loops around an excursion run counter-clockwise, and loops
around holes run clockwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, PreconditionError
from .field_sim import FieldGrid

_NUDGE = 1e-12


@dataclass
class ContourPath:
    vertices: np.ndarray
    closed: bool

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)

    def segments(self):
        """Start and end points of each polyline edge."""
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def length(self) -> float:
        a, b = self.segments()
        return float(np.sum(np.hypot(*(b - a).T)))


@dataclass
class ContourSet:
    """Arc-length resampled points on a family of paths.

    Point arrays are stored column-wise: ``positions`` and ``normals`` are
    (n, 2), ``path_index``, ``seg_length`` and ``arc`` (arc-length position
    within the path) are (n,).
    """

    paths: list
    positions: np.ndarray
    normals: np.ndarray
    path_index: np.ndarray
    seg_length: np.ndarray
    arc: np.ndarray
    total_length: float
    level: float = float("nan")

    @property
    def n_points(self) -> int:
        return len(self.seg_length)

    @property
    def points(self) -> list:
        """Per-point records (position, normal, path_index, seg_length)."""
        return [
            (tuple(p), tuple(n), int(k), float(w))
            for p, n, k, w in zip(self.positions, self.normals, self.path_index, self.seg_length)
        ]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "total_length": self.total_length,
            "paths": [{"closed": p.closed, "vertices": p.vertices.tolist()} for p in self.paths],
            "points": [
                {"position": list(pos), "normal": list(nrm), "path_index": k, "seg_length": w}
                for pos, nrm, k, w in self.points
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _edge_crossings(v, level, high, dx, dy, x0, y0):
    """Crossing coordinates on every horizontal and vertical grid edge.

    Returns an (n_edges, 2) array ordered as [horizontal edges, vertical edges];
    entries for edges without a crossing are left unset.
    """
    R, C = v.shape
    pts = np.empty((R * (C - 1) + (R - 1) * C, 2))
    # horizontal edge (i, j)-(i, j+1)
    v0, v1 = v[:, :-1], v[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (level - v0) / (v1 - v0)
    jj = np.arange(C - 1)[None, :]
    ii = np.arange(R)[:, None]
    n_h = R * (C - 1)
    pts[:n_h, 0] = (x0 + (jj + t) * dx).ravel()
    pts[:n_h, 1] = np.broadcast_to(y0 + ii * dy, t.shape).ravel()
    # vertical edge (i, j)-(i+1, j)
    v0, v1 = v[:-1, :], v[1:, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (level - v0) / (v1 - v0)
    jj = np.arange(C)[None, :]
    ii = np.arange(R - 1)[:, None]
    pts[n_h:, 0] = np.broadcast_to(x0 + jj * dx, t.shape).ravel()
    pts[n_h:, 1] = (y0 + (ii + t) * dy).ravel()
    return pts


def _cell_segments(v, level, high):
    """Oriented segments (start edge id, end edge id) for every crossed cell."""
    R, C = v.shape
    n_h = R * (C - 1)
    ii, jj = np.meshgrid(np.arange(R - 1), np.arange(C - 1), indexing="ij")
    # Corners in counter-clockwise order: BL, BR, TR, TL.
    corners = [high[:-1, :-1], high[:-1, 1:], high[1:, 1:], high[1:, :-1]]
    edges = [
        ii * (C - 1) + jj,              # bottom: h(i, j)
        n_h + ii * C + jj + 1,          # right:  v(i, j+1)
        (ii + 1) * (C - 1) + jj,        # top:    h(i+1, j)
        n_h + ii * C + jj,              # left:   v(i, j)
    ]
    hl = [corners[k] & ~corners[(k + 1) % 4] for k in range(4)]
    lh = [~corners[k] & corners[(k + 1) % 4] for k in range(4)]
    n_cross = sum(h.astype(np.int8) for h in hl)

    starts, ends = [], []
    single = n_cross == 1
    if np.any(single):
        hl_k = np.argmax(np.stack([h[single] for h in hl]), axis=0)
        lh_k = np.argmax(np.stack([h[single] for h in lh]), axis=0)
        e = np.stack([ed[single] for ed in edges])
        cols = np.arange(e.shape[1])
        starts.append(e[hl_k, cols])
        ends.append(e[lh_k, cols])

    saddle = n_cross == 2
    if np.any(saddle):
        vals = [v[:-1, :-1], v[:-1, 1:], v[1:, 1:], v[1:, :-1]]
        centre = 0.25 * sum(x[saddle] for x in vals)
        joined = centre > level
        e = np.stack([ed[saddle] for ed in edges])
        # Saddle with BL/TR high has HL edges {0, 2}; with BR/TL high, {1, 3}.
        first = np.where(corners[0][saddle], 0, 1)
        cols = np.arange(e.shape[1])
        for k in (first, first + 2):
            partner = np.where(joined, (k + 1) % 4, (k + 3) % 4)
            starts.append(e[k, cols])
            ends.append(e[partner, cols])

    if not starts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(starts).astype(np.int64), np.concatenate(ends).astype(np.int64)


def _link(start, end, n_edges):
    """Chain oriented segments into open paths and closed loops of edge ids."""
    n = len(start)
    by_start = np.full(n_edges, -1, dtype=np.int64)
    by_start[start] = np.arange(n)
    has_pred = np.zeros(n_edges, dtype=bool)
    has_pred[end] = True
    nxt = by_start[end].tolist()
    start_l = start.tolist()
    end_l = end.tolist()
    visited = bytearray(n)
    chains = []
    heads = np.flatnonzero(~has_pred[start]).tolist()
    for h in heads:
        ids = [start_l[h]]
        s = h
        while s != -1 and not visited[s]:
            visited[s] = 1
            ids.append(end_l[s])
            s = nxt[s]
        chains.append((ids, False))
    for s0 in range(n):
        if visited[s0]:
            continue
        ids = []
        s = s0
        while not visited[s]:
            visited[s] = 1
            ids.append(start_l[s])
            s = nxt[s]
        # canonical start: the loop does not depend on where the scan met it
        k = ids.index(min(ids))
        chains.append((ids[k:] + ids[:k], True))
    return chains


def _nudged(values, level):
    v = values
    hit = v == level
    if np.any(hit):
        scale = max(abs(level), float(np.max(np.abs(v))), 1e-300)
        v = np.where(hit, v + _NUDGE * scale, v)
    return v


def extract_level_set(grid: FieldGrid, level: float) -> list:
    """All iso-level polylines of ``grid`` at ``level``.

    Vertices are linear interpolants on cell edges. Saddle cells are resolved
    by comparing the cell-centre average with the level. Paths are oriented
    with larger values on the left.
    """
    v = np.asarray(grid.values, dtype=np.float64)
    if v.shape[0] < 2 or v.shape[1] < 2:
        raise PreconditionError("grid must be at least 2x2")
    level = float(level)
    v = _nudged(v, level)
    high = v > level
    R, C = v.shape
    start, end = _cell_segments(v, level, high)
    if len(start) == 0:
        return []
    x0, y0 = grid.origin
    pts = _edge_crossings(v, level, high, grid.dx, grid.dy, x0, y0)
    n_edges = pts.shape[0]
    paths = []
    for ids, closed in _link(start, end, n_edges):
        verts = pts[np.asarray(ids)]
        keep = np.ones(len(verts), dtype=bool)
        keep[1:] = np.any(verts[1:] != verts[:-1], axis=1)
        verts = verts[keep]
        if closed and len(verts) > 1 and np.all(verts[0] == verts[-1]):
            verts = verts[:-1]
        if len(verts) < 2:
            continue
        paths.append(ContourPath(verts, closed))
    return paths


def extract_binary_boundary(mask, smoothing_radius: float = 0.0, dx: float = 1.0,
                            dy: float = 1.0, origin=(0.0, 0.0)) -> list:
    """Boundary polylines of a binary excursion mask.

    With ``smoothing_radius > 0`` (in pixels) the indicator is blurred by a
    Gaussian kernel of that standard deviation before contouring at 0.5.
    """
    m = np.asarray(mask).astype(bool)
    if m.all() or not m.any():
        raise DegenerateInputError("mask must contain both excursion and background pixels")
    if smoothing_radius < 0:
        raise PreconditionError("smoothing_radius must be >= 0")
    ind = m.astype(np.float64)
    if smoothing_radius > 0:
        ind = ndimage.gaussian_filter(ind, sigma=smoothing_radius, mode="nearest")
    return extract_level_set(FieldGrid(ind, dx=dx, dy=dy, origin=origin), 0.5)


def resample_and_normals(paths, target_points: int = 1_000_000, level: float = float("nan"),
                         min_points: int = 3) -> ContourSet:
    """Resample ``paths`` uniformly in arc length and attach unit normals.

    About ``target_points`` points are shared among paths in proportion to
    their length (each path gets at least ``min_points``). Closed paths are
    sampled at ``k * h`` and open paths at the midpoints ``(k + 1/2) * h``,
    ``h = length / n``, so every point carries the same weight ``h`` within a
    path and the weights sum to the path length. Tangents are centred
    differences of neighbouring samples (one-sided at open ends); normals are
    tangents rotated by +pi/2.
    """
    if target_points < 10:
        raise PreconditionError("target_points must be >= 10")
    paths = [p for p in paths if p.length > 0]
    if not paths:
        raise DegenerateInputError("all paths have zero length")

    seg_a, seg_b, seg_path = [], [], []
    for k, p in enumerate(paths):
        a, b = p.segments()
        seg_a.append(a)
        seg_b.append(b)
        seg_path.append(np.full(len(a), k))
    seg_a = np.concatenate(seg_a)
    seg_b = np.concatenate(seg_b)
    seg_path = np.concatenate(seg_path)
    seg_len = np.hypot(*(seg_b - seg_a).T)
    cum_end = np.cumsum(seg_len)
    lengths = np.bincount(seg_path, weights=seg_len, minlength=len(paths))
    path_start_arc = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    total = float(np.sum(lengths))

    n_pts = np.maximum(min_points, np.rint(target_points * lengths / total)).astype(np.int64)
    pid = np.repeat(np.arange(len(paths)), n_pts)
    first = np.concatenate([[0], np.cumsum(n_pts)[:-1]])
    k = np.arange(pid.size) - first[pid]
    closed = np.array([p.closed for p in paths])
    h = lengths / n_pts
    arc = (k + np.where(closed[pid], 0.0, 0.5)) * h[pid]

    g = path_start_arc[pid] + arc
    seg_first = np.concatenate([[0], np.cumsum(np.bincount(seg_path, minlength=len(paths)))[:-1]])
    seg_last = seg_first + np.bincount(seg_path, minlength=len(paths)) - 1
    si = np.searchsorted(cum_end, g, side="right")
    si = np.clip(si, seg_first[pid], seg_last[pid])
    # skip zero-length edges that searchsorted may land on
    si_len = seg_len[si]
    while np.any(si_len == 0):
        bad = si_len == 0
        si[bad] = np.minimum(si[bad] + 1, seg_last[pid[bad]])
        si_len = seg_len[si]
        if np.all(seg_len[si[bad]] == 0) and np.all(si[bad] == seg_last[pid[bad]]):
            break
    local = (g - (cum_end[si] - seg_len[si])) / np.where(seg_len[si] > 0, seg_len[si], 1.0)
    local = np.clip(local, 0.0, 1.0)
    pos = seg_a[si] + local[:, None] * (seg_b[si] - seg_a[si])

    idx = np.arange(pid.size)
    last = first + n_pts - 1
    nxt = idx + 1
    prv = idx - 1
    at_end = idx == last[pid]
    at_start = idx == first[pid]
    nxt[at_end] = np.where(closed[pid[at_end]], first[pid[at_end]], idx[at_end])
    prv[at_start] = np.where(closed[pid[at_start]], last[pid[at_start]], idx[at_start])
    tan = pos[nxt] - pos[prv]
    norm = np.hypot(tan[:, 0], tan[:, 1])
    flat = norm == 0
    if np.any(flat):
        tan[flat] = (seg_b[si] - seg_a[si])[flat]
        norm[flat] = np.hypot(tan[flat, 0], tan[flat, 1])
    tan /= norm[:, None]
    normals = np.column_stack([-tan[:, 1], tan[:, 0]])

    return ContourSet(
        paths=paths,
        positions=pos,
        normals=normals,
        path_index=pid,
        seg_length=h[pid],
        arc=arc,
        total_length=total,
        level=float(level),
    )


def turning_number(path: ContourPath) -> float:
    """Total signed exterior angle of a closed path divided by 2 pi."""
    if not path.closed:
        raise PreconditionError("turning number is defined for closed paths only")
    a, b = path.segments()
    e = b - a
    e = e[np.hypot(e[:, 0], e[:, 1]) > 0]
    if len(e) < 3:
        return 0.0
    e_next = np.roll(e, -1, axis=0)
    cross = e[:, 0] * e_next[:, 1] - e[:, 1] * e_next[:, 0]
    dot = np.sum(e * e_next, axis=1)
    return float(np.sum(np.arctan2(cross, dot)) / (2 * np.pi))
