"""2D meshes: structured generators, a plain-text file format, validation, VTK export.

Meshes are homogeneous collections of counter-clockwise triangles or quads.
Boundary edges carry a condition marker (``dirichlet``, ``neumann``, ``robin``).
A mesh is immutable after construction and safe to share read-only between
concurrent workers.

Text format (line oriented, ``#`` starts a comment)::

    nodes N
    x y            # N lines, decimal coordinates
    elements M kind  # kind is "tri" or "quad"
    i j k [l]      # M lines, 0-based vertex indices
    boundary B
    a b marker     # B lines, marker in {dirichlet, neumann, robin}
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MeshError

TRI = "tri"
QUAD = "quad"

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
ROBIN = "robin"
MARKERS = (DIRICHLET, NEUMANN, ROBIN)

# duplicate-node tolerance, relative to the coordinate span
_DUP_TOL = 1e-12

_VTK_CELL_TYPE = {TRI: 5, QUAD: 9}


@dataclass
class Mesh:
    """Immutable 2D mesh with boundary-condition markers on edges."""

    nodes: np.ndarray            # (N, 2) float64
    elements: np.ndarray         # (M, 3) or (M, 4) int64, counter-clockwise
    boundary_edges: tuple        # of (node_a, node_b, marker)
    element_kind: str            # "tri" or "quad"

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=np.float64))
        self.elements = np.ascontiguousarray(np.asarray(self.elements, dtype=np.int64))
        self.boundary_edges = tuple(
            (int(a), int(b), str(m)) for a, b, m in self.boundary_edges
        )
        self.nodes.flags.writeable = False
        self.elements.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_coords(self) -> np.ndarray:
        """Vertex coordinates per element, shape (M, k, 2)."""
        return self.nodes[self.elements]

    def signed_areas(self) -> np.ndarray:
        """Signed area per element (shoelace formula)."""
        coords = self.element_coords()
        x, y = coords[..., 0], coords[..., 1]
        xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        return 0.5 * np.sum(x * yn - xn * y, axis=1)

    def edge_lengths(self) -> np.ndarray:
        """Edge lengths per element, shape (M, k); edge i joins vertex i and i+1."""
        coords = self.element_coords()
        diffs = np.roll(coords, -1, axis=1) - coords
        return np.hypot(diffs[..., 0], diffs[..., 1])

    def element_medians(self) -> np.ndarray:
        """Median lengths per triangle, shape (M, 3); median i runs from vertex i."""
        if self.element_kind != TRI:
            raise MeshError("medians are defined for triangle meshes only")
        coords = self.element_coords()
        opposite_mid = 0.5 * (np.roll(coords, -1, axis=1) + np.roll(coords, -2, axis=1))
        diffs = opposite_mid - coords
        return np.hypot(diffs[..., 0], diffs[..., 1])

    def h_char(self) -> np.ndarray:
        """Characteristic size per element: mean edge length."""
        return self.edge_lengths().mean(axis=1)

    def dirichlet_nodes(self):
        """Node indices touching at least one Dirichlet edge.

        A node on a Dirichlet/Neumann (or Robin) junction counts as Dirichlet.
        """
        nodes = set()
        for a, b, marker in self.boundary_edges:
            if marker == DIRICHLET:
                nodes.add(a)
                nodes.add(b)
        return np.array(sorted(nodes), dtype=np.int64)

    def node_element_counts(self) -> np.ndarray:
        """How many elements touch each node."""
        return np.bincount(self.elements.ravel(), minlength=self.n_nodes)

    def validate(self) -> None:
        """Raise MeshError on any structural or geometric defect."""
        n, m = self.n_nodes, self.n_elements
        if n < 3 or m < 1:
            raise MeshError(f"mesh too small: {n} nodes, {m} elements")
        k = self.elements.shape[1]
        if (self.element_kind, k) not in ((TRI, 3), (QUAD, 4)):
            raise MeshError(f"element kind {self.element_kind!r} with {k} vertices")
        if self.elements.min(initial=0) < 0 or self.elements.max(initial=-1) >= n:
            bad = int(np.argmax((self.elements < 0) | (self.elements >= n)))
            raise MeshError(f"dangling index in element {bad // k}")

        areas = self.signed_areas()
        scale = self.edge_lengths().max()
        if np.any(areas <= 1e-14 * scale * scale):
            bad = int(np.argmin(areas))
            raise MeshError(
                f"element {bad} has non-positive or degenerate area {areas[bad]:.3e}"
                " (vertices must be counter-clockwise)"
            )
        if self.element_kind == QUAD:
            self._check_convex_quads()

        self._check_duplicates()
        self._check_boundary()

    def _check_convex_quads(self):
        coords = self.element_coords()
        e = np.roll(coords, -1, axis=1) - coords
        cross = e[..., 0] * np.roll(e, -1, axis=1)[..., 1] - e[..., 1] * np.roll(e, -1, axis=1)[..., 0]
        if np.any(cross <= 0):
            bad = int(np.argmax(np.any(cross <= 0, axis=1)))
            raise MeshError(f"quad element {bad} is non-convex or inverted")

    def _check_duplicates(self):
        span = max(np.ptp(self.nodes[:, 0]), np.ptp(self.nodes[:, 1]), 1e-300)
        keys = np.round(self.nodes / (span * _DUP_TOL)).astype(np.int64)
        _, counts = np.unique(keys, axis=0, return_counts=True)
        if np.any(counts > 1):
            raise MeshError("duplicate nodes within tolerance of coordinate span")

    def _element_edge_counts(self):
        counts: dict = {}
        for elem in self.elements:
            kk = len(elem)
            for i in range(kk):
                a, b = int(elem[i]), int(elem[(i + 1) % kk])
                key = (a, b) if a < b else (b, a)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def _check_boundary(self):
        counts = self._element_edge_counts()
        if any(c > 2 for c in counts.values()):
            raise MeshError("an edge is shared by more than two elements")
        once = {e for e, c in counts.items() if c == 1}
        listed = set()
        for a, b, marker in self.boundary_edges:
            if marker not in MARKERS:
                raise MeshError(f"unknown boundary marker {marker!r} on edge ({a}, {b})")
            key = (a, b) if a < b else (b, a)
            if key in listed:
                raise MeshError(f"boundary edge ({a}, {b}) listed twice")
            if key not in once:
                raise MeshError(
                    f"boundary edge ({a}, {b}) does not belong to exactly one element"
                )
            listed.add(key)
        missing = once - listed
        if missing:
            a, b = sorted(missing)[0]
            raise MeshError(
                f"element edge ({a}, {b}) lies on the boundary but carries no marker"
            )


@dataclass(frozen=True)
class ElementGeometry:
    """Per-element geometry used by the bubble sub-problems."""

    vertices: np.ndarray      # (k, 2)
    medians: np.ndarray       # (3,) for triangles, empty for quads
    edge_lengths: np.ndarray  # (k,)
    h_char: float
    kind: str

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def element_geometry(mesh: Mesh, elem: int) -> ElementGeometry:
    """Geometry of one element: medians, edge lengths, characteristic size."""
    verts = np.array(mesh.nodes[mesh.elements[elem]])
    diffs = np.roll(verts, -1, axis=0) - verts
    lengths = np.hypot(diffs[:, 0], diffs[:, 1])
    if mesh.element_kind == TRI:
        mids = 0.5 * (np.roll(verts, -1, axis=0) + np.roll(verts, -2, axis=0))
        medians = np.hypot(*(mids - verts).T)
    else:
        medians = np.empty(0)
    return ElementGeometry(
        vertices=verts,
        medians=medians,
        edge_lengths=lengths,
        h_char=float(lengths.mean()),
        kind=mesh.element_kind,
    )


def geometry_from_vertices(vertices: np.ndarray, kind: str) -> ElementGeometry:
    """ElementGeometry straight from a (k, 2) vertex array."""
    verts = np.asarray(vertices, dtype=float)
    diffs = np.roll(verts, -1, axis=0) - verts
    lengths = np.hypot(diffs[:, 0], diffs[:, 1])
    if kind == TRI:
        mids = 0.5 * (np.roll(verts, -1, axis=0) + np.roll(verts, -2, axis=0))
        medians = np.hypot(*(mids - verts).T)
    else:
        medians = np.empty(0)
    return ElementGeometry(verts, medians, lengths, float(lengths.mean()), kind)


# ---------------------------------------------------------------------------
# Structured generators
# ---------------------------------------------------------------------------

def gen_equilateral_triangle_domain(
    side: float,
    ch_target: float,
    c: float,
    bc_markers: Sequence[str] = (DIRICHLET, DIRICHLET, DIRICHLET),
) -> Mesh:
    """Uniform equilateral triangulation of the equilateral triangle domain.

    The domain has vertices (0, 0), (side, 0), (side/2, sqrt(3)/2 * side).
    The element side h is ch_target / c, rounded so an integer number n of
    subdivisions fits; the mesh then has n^2 elements.  ``bc_markers`` sets
    the markers of the (bottom, right slant, left slant) sides.
    """
    if c <= 0 or ch_target <= 0 or side <= 0:
        raise MeshError("side, c and ch_target must be positive")
    n = int(round(side * c / ch_target))
    if n < 2:
        raise MeshError(
            f"degenerate mesh: {n} subdivision(s) per side; need at least 2"
        )
    h = side / n
    row = math.sqrt(3.0) / 2.0 * h

    offsets = [0] * (n + 2)
    for j in range(n + 1):
        offsets[j + 1] = offsets[j] + (n + 1 - j)

    def idx(i, j):
        return offsets[j] + i

    nodes = np.empty((offsets[n + 1], 2))
    for j in range(n + 1):
        i = np.arange(n + 1 - j)
        nodes[offsets[j]: offsets[j + 1], 0] = i * h + j * (h / 2.0)
        nodes[offsets[j]: offsets[j + 1], 1] = j * row

    elements = []
    for j in range(n):
        for i in range(n - j):
            elements.append((idx(i, j), idx(i + 1, j), idx(i, j + 1)))
        for i in range(n - j - 1):
            elements.append((idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)))

    bottom, right, left = bc_markers
    boundary = []
    for i in range(n):
        boundary.append((idx(i, 0), idx(i + 1, 0), bottom))
    for j in range(n):
        boundary.append((idx(n - j, j), idx(n - j - 1, j + 1), right))
        boundary.append((idx(0, j), idx(0, j + 1), left))

    mesh = Mesh(nodes, np.array(elements), tuple(boundary), TRI)
    mesh.validate()
    return mesh


def _integral_subdivisions(length: float, h: float, what: str) -> int:
    ratio = length / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise MeshError(f"{what} = {length} is not an integral multiple of h = {h}")
    return n


def _cells_to_quad_mesh(
    keep: np.ndarray,
    origin: tuple,
    h: float,
    nx: int,
    ny: int,
    marker_fn: Callable[[float, float], str],
) -> Mesh:
    """Build a quad mesh from a boolean (nx, ny) cell mask over a uniform grid."""
    x0, y0 = origin
    node_id = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    nodes = []
    elements = []
    for j in range(ny):
        for i in range(nx):
            if not keep[i, j]:
                continue
            corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
            ids = []
            for ci, cj in corners:
                if node_id[ci, cj] < 0:
                    node_id[ci, cj] = len(nodes)
                    nodes.append((x0 + ci * h, y0 + cj * h))
                ids.append(node_id[ci, cj])
            elements.append(tuple(ids))

    if not elements:
        raise MeshError("no cells selected for quad mesh")

    counts: dict = {}
    for elem in elements:
        for i in range(4):
            a, b = elem[i], elem[(i + 1) % 4]
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    nodes_arr = np.array(nodes)
    boundary = []
    for (a, b), cnt in sorted(counts.items()):
        if cnt == 1:
            mx, my = 0.5 * (nodes_arr[a] + nodes_arr[b])
            boundary.append((a, b, marker_fn(mx, my)))

    mesh = Mesh(nodes_arr, np.array(elements), tuple(boundary), QUAD)
    mesh.validate()
    return mesh


def gen_structured_quad_mesh(
    width: float,
    height: float,
    h: float,
    bc_markers: Sequence[str] = (DIRICHLET, DIRICHLET, DIRICHLET, DIRICHLET),
    origin: tuple = (0.0, 0.0),
) -> Mesh:
    """Axis-aligned uniform square grid on ``[0, width] x [0, height]`` + origin.

    ``bc_markers`` applies to (bottom, right, top, left); width/h and height/h
    must be integral within 1e-9.
    """
    nx = _integral_subdivisions(width, h, "width")
    ny = _integral_subdivisions(height, h, "height")
    x0, y0 = origin
    bottom, rightm, top, left = bc_markers

    def marker(mx, my):
        if abs(my - y0) < 1e-12 * max(1.0, height):
            return bottom
        if abs(my - (y0 + height)) < 1e-12 * max(1.0, height):
            return top
        if abs(mx - x0) < 1e-12 * max(1.0, width):
            return left
        return rightm

    keep = np.ones((nx, ny), dtype=bool)
    return _cells_to_quad_mesh(keep, origin, h, nx, ny, marker)


def gen_lshape_quad_mesh(
    h: float,
    width: float = 2.0,
    height: float = 2.0,
    origin: tuple = (-1.0, -1.0),
    cut_corner: str = "se",
    cut_width: float = 1.0,
    cut_height: float = 1.0,
    marker: str | Callable[[float, float], str] = DIRICHLET,
) -> Mesh:
    """L-shaped union of two rectangles: a width x height rectangle with one
    corner rectangle (cut_width x cut_height at ``cut_corner``) removed.

    All dimensions must be integral multiples of h.
    """
    nx = _integral_subdivisions(width, h, "width")
    ny = _integral_subdivisions(height, h, "height")
    cw = _integral_subdivisions(cut_width, h, "cut_width")
    chh = _integral_subdivisions(cut_height, h, "cut_height")
    if cw >= nx or chh >= ny:
        raise MeshError("cut rectangle must be strictly smaller than the outer one")

    keep = np.ones((nx, ny), dtype=bool)
    xs = slice(nx - cw, nx) if cut_corner in ("se", "ne") else slice(0, cw)
    ys = slice(ny - chh, ny) if cut_corner in ("ne", "nw") else slice(0, chh)
    if cut_corner not in ("se", "sw", "ne", "nw"):
        raise MeshError(f"unknown cut corner {cut_corner!r}")
    keep[xs, ys] = False

    marker_fn = marker if callable(marker) else (lambda mx, my: marker)
    return _cells_to_quad_mesh(keep, origin, h, nx, ny, marker_fn)


def gen_square_annulus_mesh(
    outer_half: float,
    inner_half: float,
    h: float,
    outer_marker: str = NEUMANN,
    inner_marker: str = DIRICHLET,
) -> Mesh:
    """Square ring: [-outer, outer]^2 with the open square (-inner, inner)^2 removed.

    Used as a polygonal stand-in for scatterer geometries; the outer boundary
    carries ``outer_marker``, the hole boundary ``inner_marker``.
    """
    if not 0 < inner_half < outer_half:
        raise MeshError("need 0 < inner_half < outer_half")
    n = _integral_subdivisions(2.0 * outer_half, h, "outer width")
    _integral_subdivisions(outer_half - inner_half, h, "ring thickness")

    x0 = -outer_half
    centers = x0 + (np.arange(n) + 0.5) * h
    cx, cy = np.meshgrid(centers, centers, indexing="ij")
    keep = (np.abs(cx) > inner_half) | (np.abs(cy) > inner_half)

    def marker(mx, my):
        on_outer = max(abs(mx), abs(my)) > outer_half - 1e-12 * outer_half
        return outer_marker if on_outer else inner_marker

    return _cells_to_quad_mesh(keep, (x0, x0), h, n, n, marker)


def split_quads_to_tris(mesh: Mesh) -> Mesh:
    """Split each quad (a, b, c, d) into triangles (a, b, c) and (a, c, d)."""
    if mesh.element_kind != QUAD:
        raise MeshError("split_quads_to_tris expects a quad mesh")
    q = mesh.elements
    tris = np.empty((2 * q.shape[0], 3), dtype=np.int64)
    tris[0::2] = q[:, (0, 1, 2)]
    tris[1::2] = q[:, (0, 2, 3)]
    out = Mesh(np.array(mesh.nodes), tris, mesh.boundary_edges, TRI)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Text file format
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, path) -> None:
    """Write the text format; coordinates are written with full precision
    so a save/load round trip is bit exact."""
    lines = [f"nodes {mesh.n_nodes}"]
    for x, y in mesh.nodes:
        lines.append(f"{x!r} {y!r}")
    lines.append(f"elements {mesh.n_elements} {mesh.element_kind}")
    for elem in mesh.elements:
        lines.append(" ".join(str(int(v)) for v in elem))
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    for a, b, marker in mesh.boundary_edges:
        lines.append(f"{a} {b} {marker}")
    Path(path).write_text("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, path):
        self.path = str(path)
        self.lines = Path(path).read_text().splitlines()
        self.pos = 0

    def next(self) -> tuple[int, str]:
        while self.pos < len(self.lines):
            self.pos += 1
            raw = self.lines[self.pos - 1]
            text = raw.split("#", 1)[0].strip()
            if text:
                return self.pos, text
        raise MeshError(f"{self.path}: unexpected end of file")

    def fail(self, lineno: int, msg: str):
        raise MeshError(f"{self.path}:{lineno}: {msg}")


def load_mesh(path) -> Mesh:
    """Parse and validate a mesh file; failures report 1-based line numbers."""
    rd = _LineReader(path)

    ln, head = rd.next()
    parts = head.split()
    if len(parts) != 2 or parts[0] != "nodes":
        rd.fail(ln, f"expected 'nodes N', got {head!r}")
    try:
        n_nodes = int(parts[1])
    except ValueError:
        rd.fail(ln, f"bad node count {parts[1]!r}")
    nodes = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        ln, text = rd.next()
        parts = text.split()
        if len(parts) != 2:
            rd.fail(ln, f"expected 'x y', got {text!r}")
        try:
            nodes[i] = (float(parts[0]), float(parts[1]))
        except ValueError:
            rd.fail(ln, f"bad coordinate in {text!r}")

    ln, head = rd.next()
    parts = head.split()
    if len(parts) != 3 or parts[0] != "elements" or parts[2] not in (TRI, QUAD):
        rd.fail(ln, f"expected 'elements M tri|quad', got {head!r}")
    n_elems, kind = int(parts[1]), parts[2]
    k = 3 if kind == TRI else 4
    elements = np.empty((n_elems, k), dtype=np.int64)
    for i in range(n_elems):
        ln, text = rd.next()
        parts = text.split()
        if len(parts) != k:
            rd.fail(ln, f"expected {k} vertex indices, got {text!r}")
        try:
            row = [int(p) for p in parts]
        except ValueError:
            rd.fail(ln, f"bad vertex index in {text!r}")
        for v in row:
            if not 0 <= v < n_nodes:
                rd.fail(ln, f"dangling index {v} (node count {n_nodes})")
        elements[i] = row

    ln, head = rd.next()
    parts = head.split()
    if len(parts) != 2 or parts[0] != "boundary":
        rd.fail(ln, f"expected 'boundary B', got {head!r}")
    boundary = []
    for _ in range(int(parts[1])):
        ln, text = rd.next()
        parts = text.split()
        if len(parts) != 3:
            rd.fail(ln, f"expected 'a b marker', got {text!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            rd.fail(ln, f"bad edge index in {text!r}")
        if parts[2] not in MARKERS:
            rd.fail(ln, f"unknown marker {parts[2]!r}")
        if not (0 <= a < n_nodes and 0 <= b < n_nodes):
            rd.fail(ln, f"dangling index in boundary edge {text!r}")
        boundary.append((a, b, parts[2]))

    mesh = Mesh(nodes, elements, tuple(boundary), kind)
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# VTK legacy export
# ---------------------------------------------------------------------------

def write_vtk(mesh: Mesh, path, point_data: Optional[dict] = None, title: str = "helmbubble field") -> None:
    """Write mesh + nodal scalar fields as legacy ASCII VTK (UNSTRUCTURED_GRID).

    Complex fields are split into ``<name>_re`` / ``<name>_im``.
    """
    fields: dict[str, np.ndarray] = {}
    for name, values in (point_data or {}).items():
        arr = np.asarray(values)
        if arr.shape != (mesh.n_nodes,):
            raise ValueError(f"field {name!r} has shape {arr.shape}, expected ({mesh.n_nodes},)")
        if np.iscomplexobj(arr):
            fields[f"{name}_re"] = arr.real
            fields[f"{name}_im"] = arr.imag
        else:
            fields[name] = arr.astype(float)

    k = mesh.elements.shape[1]
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.nodes:
        out.append(f"{x:.17g} {y:.17g} 0")
    out.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (k + 1)}")
    for elem in mesh.elements:
        out.append(f"{k} " + " ".join(str(int(v)) for v in elem))
    out.append(f"CELL_TYPES {mesh.n_elements}")
    cell_type = _VTK_CELL_TYPE[mesh.element_kind]
    out.extend(str(cell_type) for _ in range(mesh.n_elements))
    if fields:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for name, arr in fields.items():
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(f"{v:.17g}" for v in arr)
    Path(path).write_text("\n".join(out) + "\n")
