"""Triangular meshes of polygonal channels with tagged boundary segments.

A :class:`Mesh` is immutable once validated.  Boundary edges are stored in
the counter-clockwise orientation of the triangle that owns them, so the
outward unit normal of edge ``(i, j)`` is ``(dy, -dx) / L``.

Mesh text format::

    nsfmesh 1
    # comment
    v x y
    t i j k          (0-based, counter-clockwise)
    b i j TAG        (TAG in inlet | outlet | wall)
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    """Raised when a mesh fails to parse or validate."""


class BoundaryTag(enum.IntEnum):
    INLET = 0
    OUTLET = 1
    WALL = 2

    @classmethod
    def parse(cls, text: str) -> "BoundaryTag":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise MeshError(f"unknown boundary tag {text!r}") from None


#: Dirichlet part of the boundary (inlet and outlet).
DIRICHLET_TAGS = (BoundaryTag.INLET, BoundaryTag.OUTLET)
#: Robin part of the boundary for the heat problem (outlet and wall).
NEUMANN_TAGS = (BoundaryTag.OUTLET, BoundaryTag.WALL)


def _edge_keys(pairs: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return lo.astype(np.int64) * n + hi


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    _validated: bool = field(default=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", np.ascontiguousarray(self.boundary_tags, dtype=np.int64).reshape(-1))
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.boundary_tags):
            arr.setflags(write=False)
        if not self._validated:
            self._validate()
            object.__setattr__(self, "_validated", True)

    # ------------------------------------------------------------------
    # sizes
    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_boundary_edges(self) -> int:
        return self.boundary_edges.shape[0]

    # ------------------------------------------------------------------
    # geometry
    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant gradients of the barycentric basis, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        twice = 2.0 * self.signed_areas[:, None]
        g = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / twice[:, 0]
            g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / twice[:, 0]
        g.setflags(write=False)
        return g

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Outward unit normals of the boundary edges, shape (E, 2)."""
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / self.edge_lengths[:, None]

    @cached_property
    def edge_owner(self) -> np.ndarray:
        """Index of the triangle owning each boundary edge."""
        return self._boundary_owner

    @cached_property
    def vertex_triangles(self) -> sp.csr_matrix:
        """Incidence matrix, rows = vertices, columns = triangles."""
        rows = self.triangles.ravel()
        cols = np.repeat(np.arange(self.n_triangles), 3)
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_vertices, self.n_triangles))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (lo, hi), shape (Ne, 2)."""
        return self._edge_table[0]

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """Edge index of the edge opposite to each local vertex, shape (T, 3)."""
        return self._edge_table[1]

    @cached_property
    def _edge_table(self):
        n = self.n_vertices
        local = np.stack([self.triangles[:, [1, 2]], self.triangles[:, [2, 0]], self.triangles[:, [0, 1]]], axis=1)
        keys = _edge_keys(local.reshape(-1, 2), n)
        uniq, inverse = np.unique(keys, return_inverse=True)
        edges = np.column_stack([uniq // n, uniq % n])
        return edges, inverse.reshape(-1, 3)

    def tag_mask(self, tags: Iterable[BoundaryTag] | BoundaryTag) -> np.ndarray:
        """Boolean mask over boundary edges carrying any of ``tags``."""
        if isinstance(tags, (BoundaryTag, int)):
            tags = (tags,)
        tags = [int(t) for t in tags]
        return np.isin(self.boundary_tags, tags)

    def tagged_vertices(self, tags: Iterable[BoundaryTag] | BoundaryTag) -> np.ndarray:
        """Sorted vertex indices in the closure of the tagged boundary part."""
        mask = self.tag_mask(tags)
        return np.unique(self.boundary_edges[mask].ravel())

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges.ravel())

    # ------------------------------------------------------------------
    def _validate(self):
        nv, nt = self.n_vertices, self.n_triangles
        if nv < 3 or nt < 1:
            raise MeshError("mesh needs at least three vertices and one triangle")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinate")
        for name, arr in (("triangle", self.triangles), ("boundary edge", self.boundary_edges)):
            bad = np.nonzero((arr < 0).any(axis=1) | (arr >= nv).any(axis=1))[0]
            if bad.size:
                raise MeshError(f"{name} {bad[0]} references a dangling vertex index")
        if np.any(~np.isin(self.boundary_tags, [t.value for t in BoundaryTag])):
            raise MeshError("invalid boundary tag value")
        if self.boundary_tags.shape[0] != self.boundary_edges.shape[0]:
            raise MeshError("boundary tag count differs from boundary edge count")

        area = self.signed_areas
        bad = np.nonzero(area <= 0.0)[0]
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has negative area (clockwise or degenerate)")
        if np.setdiff1d(np.arange(nv), self.triangles.ravel()).size:
            raise MeshError("mesh contains a vertex that belongs to no triangle")

        # directed half-edges of all triangles
        half = np.stack([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]], axis=1).reshape(-1, 2)
        keys = _edge_keys(half, nv)
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        # interior edges must be traversed once in each direction
        forward = half[:, 0] < half[:, 1]
        fwd_count = np.bincount(inverse, weights=forward.astype(float), minlength=uniq.size)
        interior = counts == 2
        if np.any(fwd_count[interior] != 1):
            raise MeshError("adjacent triangles induce the same orientation on a shared edge")

        bkeys = _edge_keys(self.boundary_edges, nv)
        if np.unique(bkeys).size != bkeys.size:
            raise MeshError("duplicate boundary edge")
        topo_boundary = uniq[counts == 1]
        missing = np.setdiff1d(topo_boundary, bkeys)
        if missing.size:
            k = missing[0]
            raise MeshError(f"untagged boundary edge ({k // nv}, {k % nv})")
        extra = np.setdiff1d(bkeys, topo_boundary)
        if extra.size:
            k = extra[0]
            raise MeshError(f"tagged edge ({k // nv}, {k % nv}) is not on the boundary")

        # orient boundary edges like their owning triangle
        order = np.argsort(keys, kind="stable")
        owner_half = order[np.searchsorted(keys[order], bkeys)]
        oriented = half[owner_half]
        object.__setattr__(self, "boundary_edges", np.ascontiguousarray(oriented))
        self.boundary_edges.setflags(write=False)
        object.__setattr__(self, "_boundary_owner", owner_half // 3)

        # connectivity through shared edges
        tri_of_half = np.arange(half.shape[0]) // 3
        srt = np.argsort(inverse, kind="stable")
        inv_s = inverse[srt]
        same = np.nonzero(inv_s[1:] == inv_s[:-1])[0]
        pair_rows = tri_of_half[srt[same]]
        pair_cols = tri_of_half[srt[same + 1]]
        adj = sp.coo_matrix((np.ones(pair_rows.size), (pair_rows, pair_cols)), shape=(nt, nt))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise MeshError(f"mesh is not connected ({ncomp} components)")

        for tag in BoundaryTag:
            if boundary_measure(self, tag) <= 0.0:
                raise MeshError(f"boundary part {tag.name.lower()} has zero length")

    def shoelace_area(self) -> float:
        """Polygon area from the oriented boundary edges."""
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return 0.5 * float(np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

    def equals(self, other: "Mesh") -> bool:
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.boundary_tags, other.boundary_tags)
        )


def boundary_measure(mesh: Mesh, tag: BoundaryTag) -> float:
    """Total length of the boundary edges carrying ``tag``."""
    d = mesh.vertices[mesh.boundary_edges[:, 1]] - mesh.vertices[mesh.boundary_edges[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    return float(lengths[mesh.boundary_tags == int(tag)].sum())


def build_rectangle_channel(length: float, height: float, nx: int, ny: int,
                            inlet_side: str = "left", outlet_side: str = "right") -> Mesh:
    """Structured channel ``[0, length] x [0, height]``.

    Each grid cell is split along alternating diagonals (a checkerboard of
    the two diagonal directions).  Left edges are the inlet, right edges the
    outlet, top and bottom edges are walls.
    """
    if not (length > 0 and height > 0):
        raise ValueError("channel length and height must be positive")
    if int(nx) < 1 or int(ny) < 1 or int(nx) != nx or int(ny) != ny:
        raise ValueError("subdivision counts must be integers >= 1")
    if inlet_side != "left" or outlet_side != "right":
        raise ValueError("only inlet_side='left' and outlet_side='right' are supported")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]

    edges, tags = [], []
    for i in range(nx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(BoundaryTag.WALL)
    for j in range(ny):
        edges.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(BoundaryTag.OUTLET)
    for i in range(nx, 0, -1):
        edges.append((vid(i, ny), vid(i - 1, ny)))
        tags.append(BoundaryTag.WALL)
    for j in range(ny, 0, -1):
        edges.append((vid(0, j), vid(0, j - 1)))
        tags.append(BoundaryTag.INLET)
    return Mesh(vertices, np.array(tris), np.array(edges), np.array(tags, dtype=np.int64))


def load_mesh(source: TextIO | str) -> Mesh:
    """Parse the line-oriented mesh text format from a stream or string."""
    if isinstance(source, str):
        source = io.StringIO(source)
    verts, tris, edges, tags = [], [], [], []
    header_seen = False
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if not header_seen:
            if parts != ["nsfmesh", "1"]:
                raise MeshError(f"line {lineno}: expected header 'nsfmesh 1'")
            header_seen = True
            continue
        kind = parts[0]
        try:
            if kind == "v" and len(parts) == 3:
                verts.append((float(parts[1]), float(parts[2])))
            elif kind == "t" and len(parts) == 4:
                tris.append(tuple(int(p) for p in parts[1:]))
            elif kind == "b" and len(parts) == 4:
                edges.append((int(parts[1]), int(parts[2])))
                tags.append(BoundaryTag.parse(parts[3]))
            else:
                raise MeshError(f"line {lineno}: malformed line {raw.strip()!r}")
        except ValueError as exc:
            if isinstance(exc, MeshError):
                raise MeshError(f"line {lineno}: {exc}") from None
            raise MeshError(f"line {lineno}: malformed line {raw.strip()!r}") from None
    if not header_seen:
        raise MeshError("empty mesh file")
    return Mesh(np.array(verts), np.array(tris), np.array(edges), np.array(tags, dtype=np.int64))


def dump_mesh(mesh: Mesh, stream: TextIO | None = None) -> str:
    """Serialize ``mesh`` in the text format; returns the text as well."""
    out = ["nsfmesh 1"]
    out += [f"v {x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    out += [f"b {i} {j} {BoundaryTag(t).name.lower()}"
            for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    text = "\n".join(out) + "\n"
    if stream is not None:
        stream.write(text)
    return text
