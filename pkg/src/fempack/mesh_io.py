"""Plain-text mesh reader and writer.

Format, in order, with `#` comments and blank lines allowed anywhere:

    mesh <dim> <nnode> <nelem>
    nodes
    <x> <y> [<z>]                  one line per node
    elements <TYPE> <count>        repeatable, one section per block
    <n1> <n2> ...                  1-based node ids, one line per element
    boundary <count>               optional
    <owner> <n> <node ids...>      1-based owner element and node ids

Numbers are written with 17 significant digits so coordinates round-trip
bit exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .elements import DIM, NNODES, ElementType
from .errors import MeshParseError
from .mesh import ElementGroup, FaceGroup, Mesh


def format_mesh(mesh: Mesh) -> str:
    """Serialize a mesh to the text format."""
    lines = [f"mesh {mesh.dim} {mesh.nnode} {mesh.nelem}", "nodes"]
    for row in mesh.coords:
        lines.append(" ".join(f"{x:.17g}" for x in row))
    for g in mesh.groups:
        lines.append(f"elements {g.etype.value} {g.nelem}")
        for row in g.conn:
            lines.append(" ".join(str(n + 1) for n in row))
    nfaces = sum(fg.nfaces for fg in mesh.boundary)
    if nfaces:
        lines.append(f"boundary {nfaces}")
        for fg in mesh.boundary:
            for owner, row in zip(fg.owner, fg.conn):
                nodes = " ".join(str(n + 1) for n in row)
                lines.append(f"{owner + 1} {fg.nnodes} {nodes}")
    return "\n".join(lines) + "\n"


class _Scanner:
    """Iterates content lines of the file, tracking 1-based line numbers."""

    def __init__(self, text: str):
        self.raw = text.splitlines()
        self.pos = 0
        self.line = 0

    def next_content(self) -> list[str] | None:
        while self.pos < len(self.raw):
            self.pos += 1
            self.line = self.pos
            stripped = self.raw[self.pos - 1].split("#", 1)[0].strip()
            if stripped:
                return stripped.split()
        return None

    def error(self, message: str):
        raise MeshParseError(self.line, message)


def _ints(scanner, tokens, count, upper, what):
    if len(tokens) != count:
        scanner.error(f"expected {count} values for {what}, got {len(tokens)}")
    try:
        vals = [int(t) for t in tokens]
    except ValueError:
        scanner.error(f"non-integer value in {what}")
    for v in vals:
        if not 1 <= v <= upper:
            scanner.error(f"{what} id {v} outside 1..{upper}")
    return [v - 1 for v in vals]


def parse_mesh(text: str) -> Mesh:
    """Parse the text format; raises MeshParseError with a line number."""
    sc = _Scanner(text)
    tokens = sc.next_content()
    if tokens is None or tokens[0] != "mesh" or len(tokens) != 4:
        sc.error("expected header 'mesh <dim> <nnode> <nelem>'")
    try:
        dim, nnode, nelem = (int(t) for t in tokens[1:])
    except ValueError:
        sc.error("non-integer value in mesh header")
    if dim not in (2, 3):
        sc.error(f"unsupported dimension {dim}")

    tokens = sc.next_content()
    if tokens is None or tokens[0] != "nodes":
        sc.error("expected 'nodes' section")
    coords = np.empty((nnode, dim))
    for i in range(nnode):
        tokens = sc.next_content()
        if tokens is None:
            sc.error(f"unexpected end of file in nodes ({i} of {nnode} read)")
        if len(tokens) != dim:
            sc.error(f"expected {dim} coordinates, got {len(tokens)}")
        try:
            coords[i] = [float(t) for t in tokens]
        except ValueError:
            sc.error("non-numeric coordinate")

    groups: list[ElementGroup] = []
    faces: list[tuple[int, int, list[int]]] = []
    total_elems = 0
    tokens = sc.next_content()
    while tokens is not None:
        if tokens[0] == "elements":
            if len(tokens) != 3:
                sc.error("expected 'elements <TYPE> <count>'")
            try:
                etype = ElementType(tokens[1])
            except ValueError:
                sc.error(f"unknown element type {tokens[1]!r}")
            if DIM[etype] != dim:
                sc.error(f"{etype.value} not allowed in a {dim}D mesh")
            try:
                count = int(tokens[2])
            except ValueError:
                sc.error("non-integer element count")
            nn = NNODES[etype]
            conn = np.empty((count, nn), dtype=np.int64)
            for e in range(count):
                tokens = sc.next_content()
                if tokens is None:
                    sc.error(f"unexpected end of file in {etype.value} section")
                conn[e] = _ints(sc, tokens, nn, nnode, "node")
            if count:
                groups.append(ElementGroup(etype, conn))
            total_elems += count
        elif tokens[0] == "boundary":
            if len(tokens) != 2:
                sc.error("expected 'boundary <count>'")
            try:
                count = int(tokens[1])
            except ValueError:
                sc.error("non-integer boundary count")
            for _ in range(count):
                tokens = sc.next_content()
                if tokens is None:
                    sc.error("unexpected end of file in boundary section")
                if len(tokens) < 2:
                    sc.error("boundary face needs owner and node count")
                owner = _ints(sc, tokens[:1], 1, max(total_elems, 1), "owner")[0]
                try:
                    fn = int(tokens[1])
                except ValueError:
                    sc.error("non-integer face node count")
                nodes = _ints(sc, tokens[2:], fn, nnode, "node")
                faces.append((fn, owner, nodes))
        else:
            sc.error(f"unknown keyword {tokens[0]!r}")
        tokens = sc.next_content()

    if total_elems != nelem:
        raise MeshParseError(
            sc.line, f"header declares {nelem} elements, sections contain {total_elems}"
        )
    boundary = []
    sizes_seen: list[int] = []
    for fn, _, _ in faces:
        if fn not in sizes_seen:
            sizes_seen.append(fn)
    for fn in sizes_seen:
        sel = [(o, nd) for size, o, nd in faces if size == fn]
        boundary.append(
            FaceGroup(
                fn,
                np.array([o for o, _ in sel], dtype=np.int64),
                np.array([nd for _, nd in sel], dtype=np.int64),
            )
        )
    mesh = Mesh(dim, coords, groups, boundary)
    mesh.validate()
    return mesh


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text())


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))
