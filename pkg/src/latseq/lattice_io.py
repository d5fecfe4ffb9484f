"""Lattice text formats: canonical JSON, PLF ingestion, DOT export.

The JSON format is the canonical interchange form and round-trips
bit-exactly (floats print in shortest round-trip representation). PLF is
the nested-parenthesis edge-labeled form, one lattice per line; it is
parsed as an edge-labeled lattice and immediately converted through the
line graph, so the node-labeled Lattice is the only in-memory
representation.
"""
from __future__ import annotations

import json
import math

from .lattice import (
    EdgeLabeledLattice,
    Edge,
    LabeledEdge,
    Lattice,
    LatticeSyntaxError,
    Node,
    ValidationError,
    line_graph,
)

JSON_FORMAT = "json"
PLF_FORMAT = "plf"


def lattice_to_json(lat: Lattice) -> str:
    obj = {
        "nodes": [{"id": n.id, "token": n.token} for n in lat.nodes],
        "edges": [{"from": e.src, "to": e.dst, "p": e.p} for e in lat.edges],
        "start": lat.start,
        "end": lat.end,
    }
    return json.dumps(obj, separators=(",", ":"))


def lattice_from_json(text: str) -> Lattice:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LatticeSyntaxError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno - 1) from exc
    if not isinstance(obj, dict):
        raise LatticeSyntaxError("top-level JSON value must be an object")
    try:
        raw_nodes = obj["nodes"]
        raw_edges = obj["edges"]
        start = obj["start"]
        end = obj["end"]
    except KeyError as exc:
        raise LatticeSyntaxError(f"missing key {exc.args[0]!r}") from exc

    # Node ids are reassigned densely in list order; edges are remapped.
    try:
        id_map = {int(n["id"]): i for i, n in enumerate(raw_nodes)}
        if len(id_map) != len(raw_nodes):
            raise ValidationError("duplicate node ids")
        nodes = [Node(i, str(n["token"])) for i, n in enumerate(raw_nodes)]
        edges = [Edge(id_map[int(e["from"])], id_map[int(e["to"])], float(e["p"]))
                 for e in raw_edges]
        start_id = id_map[int(start)]
        end_id = id_map[int(end)]
    except (KeyError, TypeError) as exc:
        raise LatticeSyntaxError(f"malformed lattice object: {exc}") from exc
    return Lattice(nodes, edges, start_id, end_id)


class _PlfScanner:
    """Character scanner for the nested-parenthesis PLF syntax."""

    def __init__(self, text: str, line_no: int = 1):
        self.text = text
        self.pos = 0
        self.line = line_no

    def error(self, msg: str):
        raise LatticeSyntaxError(msg, self.line, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}, found {self.peek()!r}")
        self.pos += 1

    def accept(self, ch: str) -> bool:
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def string(self) -> str:
        quote = self.peek()
        if quote not in ("'", '"'):
            self.error(f"expected a quoted token, found {quote!r}")
        self.pos += 1
        out = []
        while True:
            if self.pos >= len(self.text):
                self.error("unterminated token string")
            c = self.text[self.pos]
            self.pos += 1
            if c == "\\":
                if self.pos >= len(self.text):
                    self.error("dangling escape in token string")
                out.append(self.text[self.pos])
                self.pos += 1
            elif c == quote:
                return "".join(out)
            else:
                out.append(c)

    def number(self) -> float:
        self.skip_ws()
        start = self.pos
        allowed = "+-0123456789.eE"
        while self.pos < len(self.text) and self.text[self.pos] in allowed:
            self.pos += 1
        if self.pos == start:
            self.error("expected a number")
        try:
            return float(self.text[start:self.pos])
        except ValueError:
            self.error(f"bad number literal {self.text[start:self.pos]!r}")


def parse_plf(text: str, prob: str = "linear", line_no: int = 1) -> EdgeLabeledLattice:
    """Parse one PLF lattice: a tuple of per-node out-edge tuples, each
    edge a (token, probability, node-offset) triple.

    `prob` selects how the second field is read: "linear" probabilities
    are used as-is, "log" values are exponentiated.
    """
    if prob not in ("linear", "log"):
        raise ValueError(f"prob must be 'linear' or 'log', got {prob!r}")
    sc = _PlfScanner(text, line_no)
    sc.expect("(")
    groups: list[list[tuple[str, float, int]]] = []
    while not sc.accept(")"):
        sc.expect("(")
        edges: list[tuple[str, float, int]] = []
        while not sc.accept(")"):
            sc.expect("(")
            token = sc.string()
            sc.expect(",")
            value = sc.number()
            sc.expect(",")
            offset = sc.number()
            sc.accept(",")
            sc.expect(")")
            sc.accept(",")
            if offset != int(offset) or int(offset) < 1:
                sc.error(f"edge offset must be a positive integer, got {offset!r}")
            p = math.exp(value) if prob == "log" else value
            edges.append((token, p, int(offset)))
        sc.accept(",")
        groups.append(edges)
    sc.skip_ws()
    if sc.pos != len(sc.text):
        sc.error("trailing characters after lattice")

    n_nodes = len(groups) + 1
    labeled = []
    for src, edges in enumerate(groups):
        for token, p, offset in edges:
            dst = src + offset
            if dst >= n_nodes:
                raise LatticeSyntaxError(
                    f"edge from node {src} jumps past the final node ({dst} >= {n_nodes})",
                    line_no)
            labeled.append(LabeledEdge(src, dst, token, p))
    return EdgeLabeledLattice(n_nodes, labeled, start=0, end=n_nodes - 1)


def parse_lattice(text: str, format: str = JSON_FORMAT, plf_prob: str = "linear") -> Lattice:
    """Parse lattice text in the named format into a node-labeled Lattice.

    PLF input is edge-labeled and is converted through the line graph, so
    the result gains fresh sentinel start/end nodes.
    """
    if format == JSON_FORMAT:
        return lattice_from_json(text)
    if format == PLF_FORMAT:
        return line_graph(parse_plf(text, prob=plf_prob))
    raise ValueError(f"unknown lattice format {format!r}")


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(lat: Lattice) -> str:
    """GraphViz rendering with nodes shaded by marginal probability."""
    from .masks import compute_marginals

    marg = compute_marginals(lat)
    lines = ["digraph lattice {", "  rankdir=LR;", '  node [shape=box, style=filled];']
    for n in lat.nodes:
        m = marg[n.id]
        bucket = min(4, int(m * 5.0)) + 1  # 5-step shade scale over (0, 1]
        label = _dot_escape(n.token) + "\\n" + f"p={m:.4g}"
        lines.append(f'  n{n.id} [label="{label}", fillcolor="/blues5/{bucket}"];')
    for e in lat.edges:
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.p:.4g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
