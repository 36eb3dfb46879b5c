"""CPPN genomes and deterministic image rendering.

A genome is a small feed-forward network mapping pixel coordinates
(x, y, r) plus a constant bias to hue/saturation/brightness.  Connections
are partitioned into a *structure* subnetwork (everything that can reach
the brightness output) and a *color* subnetwork (everything that can only
reach hue/saturation), so color-only edits provably cannot change the
grayscale image.

Genomes and image buffers are immutable values: operators build new ones.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from functools import cached_property
from random import Random

import numpy as np
from PIL import Image

ACTIVATIONS = ("sigmoid", "sine", "cosine", "identity")

STRUCTURE = "structure"
COLOR = "color"

INPUT_ROLES = ("input-x", "input-y", "input-r", "input-bias")
OUTPUT_ROLES = ("output-brightness", "output-hue", "output-saturation")
HIDDEN = "hidden"

# Fixed output activations: brightness is squashed, hue/saturation are raw
# and get wrapped/clamped at render time.
OUTPUT_ACTIVATION = {
    "output-brightness": "sigmoid",
    "output-hue": "identity",
    "output-saturation": "identity",
}

# Node ids of the seed topology.  Every genome contains exactly these seven
# roles; hidden nodes get fresh ids from the innovation registry.
X_ID, Y_ID, R_ID, BIAS_ID = 0, 1, 2, 3
BRIGHTNESS_ID, HUE_ID, SATURATION_ID = 4, 5, 6

# Innovation numbers of the six seed connections (identical topology in all
# initial genomes, so fixed numbers are consistent NEAT bookkeeping).
SEED_INNOVATIONS = 6
SEED_IDS = 7


class StructureError(RuntimeError):
    """A genome violates a structural invariant (cycle, missing role...).

    Signals a bug in a mutation operator, not bad user input.
    """


@dataclass(frozen=True)
class NodeGene:
    id: int
    role: str
    activation: str | None
    subnet: str


@dataclass(frozen=True)
class ConnectionGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool
    subnet: str


@dataclass(frozen=True)
class Genome:
    nodes: tuple[NodeGene, ...]
    connections: tuple[ConnectionGene, ...]

    def __post_init__(self):
        # Canonical gene order (nodes by id, connections by innovation) so a
        # genome built through any mutation path is bit-identical to its
        # serialized-and-reloaded self, and operators iterate deterministically.
        object.__setattr__(self, "nodes",
                           tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "connections",
                           tuple(sorted(self.connections,
                                        key=lambda c: c.innovation)))

    @cached_property
    def node_map(self) -> dict[int, NodeGene]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((c.src, c.dst) for c in self.connections)

    @cached_property
    def topo_order(self) -> tuple[int, ...]:
        return _topological_order(self)

    def node(self, node_id: int) -> NodeGene:
        return self.node_map[node_id]

    def hidden_nodes(self) -> tuple[NodeGene, ...]:
        return tuple(n for n in self.nodes if n.role == HIDDEN)


@dataclass(frozen=True)
class ImageBuffer:
    """Rendered raster: row-major (h, s, b) components, each in [0, 1]."""

    width: int
    height: int
    hsb: np.ndarray  # shape (height, width, 3), read-only float64

    def brightness(self) -> np.ndarray:
        return self.hsb[:, :, 2]


def _topological_order(genome: Genome) -> tuple[int, ...]:
    """Kahn's algorithm over all connections (disabled ones included).

    Ties broken by node id so the order is a pure function of the genome.
    """
    indegree = {n.id: 0 for n in genome.nodes}
    outgoing: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for c in genome.connections:
        indegree[c.dst] += 1
        outgoing[c.src].append(c.dst)

    ready = sorted(nid for nid, deg in indegree.items() if deg == 0)
    order: list[int] = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        newly = []
        for dst in outgoing[nid]:
            indegree[dst] -= 1
            if indegree[dst] == 0:
                newly.append(dst)
        if newly:
            ready = sorted(ready + newly)
    if len(order) != len(genome.nodes):
        raise StructureError("cycle detected in genome connections")
    return tuple(order)


def target_subnet(genome_nodes: dict[int, NodeGene], dst: int) -> str:
    """Subnet tag a connection into `dst` must carry.

    Color iff the target is the hue/saturation output or a color-tagged
    hidden node; everything else is structure.
    """
    node = genome_nodes[dst]
    if node.role in ("output-hue", "output-saturation"):
        return COLOR
    if node.role == HIDDEN and node.subnet == COLOR:
        return COLOR
    return STRUCTURE


def connection_allowed(genome: Genome, src: int, dst: int) -> bool:
    """Check a candidate edge against the wiring rules (not acyclicity).

    Rejects edges into inputs, self-loops, duplicates, and any edge that
    would let a color node feed the structure subnetwork.
    """
    nodes = genome.node_map
    if src == dst or dst not in nodes or src not in nodes:
        return False
    if nodes[dst].role in INPUT_ROLES:
        return False
    if (src, dst) in genome.edge_set:
        return False
    if nodes[src].subnet == COLOR and target_subnet(nodes, dst) == STRUCTURE:
        return False
    return True


def creates_cycle(genome: Genome, src: int, dst: int) -> bool:
    """True if adding src -> dst would close a directed cycle."""
    if src == dst:
        return True
    # Path dst -> ... -> src over existing connections?
    outgoing: dict[int, list[int]] = {}
    for c in genome.connections:
        outgoing.setdefault(c.src, []).append(c.dst)
    stack = [dst]
    seen = set()
    while stack:
        nid = stack.pop()
        if nid == src:
            return True
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(outgoing.get(nid, ()))
    return False


def init_genome(rng: Random) -> Genome:
    """Minimal seed genome: inputs wired to brightness, brightness wired to
    hue and saturation, no hidden nodes.  Weights uniform in [-1, 1]."""
    nodes = (
        NodeGene(X_ID, "input-x", None, STRUCTURE),
        NodeGene(Y_ID, "input-y", None, STRUCTURE),
        NodeGene(R_ID, "input-r", None, STRUCTURE),
        NodeGene(BIAS_ID, "input-bias", None, STRUCTURE),
        NodeGene(BRIGHTNESS_ID, "output-brightness", "sigmoid", STRUCTURE),
        NodeGene(HUE_ID, "output-hue", "identity", COLOR),
        NodeGene(SATURATION_ID, "output-saturation", "identity", COLOR),
    )
    connections = (
        ConnectionGene(0, X_ID, BRIGHTNESS_ID, rng.uniform(-1, 1), True, STRUCTURE),
        ConnectionGene(1, Y_ID, BRIGHTNESS_ID, rng.uniform(-1, 1), True, STRUCTURE),
        ConnectionGene(2, R_ID, BRIGHTNESS_ID, rng.uniform(-1, 1), True, STRUCTURE),
        ConnectionGene(3, BIAS_ID, BRIGHTNESS_ID, rng.uniform(-1, 1), True, STRUCTURE),
        ConnectionGene(4, BRIGHTNESS_ID, HUE_ID, rng.uniform(-1, 1), True, COLOR),
        ConnectionGene(5, BRIGHTNESS_ID, SATURATION_ID, rng.uniform(-1, 1), True, COLOR),
    )
    return Genome(nodes, connections)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_ACT_FN = {
    "sigmoid": _sigmoid,
    "sine": np.sin,
    "cosine": np.cos,
    "identity": lambda x: x,
}


def _evaluate(genome: Genome, x: np.ndarray, y: np.ndarray, r: np.ndarray,
              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feed-forward evaluation over coordinate arrays.

    Returns raw (brightness, hue, saturation) node outputs; brightness is
    post-sigmoid, hue/saturation are unbounded identity sums.
    """
    inputs = {X_ID: x, Y_ID: y, R_ID: r, BIAS_ID: np.ones_like(x)}
    incoming: dict[int, list[ConnectionGene]] = {}
    for c in genome.connections:
        if c.enabled:
            incoming.setdefault(c.dst, []).append(c)

    values: dict[int, np.ndarray] = {}
    zero = np.zeros_like(x)
    for nid in genome.topo_order:
        node = genome.node_map[nid]
        if node.role in INPUT_ROLES:
            values[nid] = inputs[nid]
            continue
        total = zero
        for c in incoming.get(nid, ()):
            total = total + c.weight * values[c.src]
        values[nid] = _ACT_FN[node.activation](np.asarray(total, dtype=np.float64))
    return values[BRIGHTNESS_ID], values[HUE_ID], values[SATURATION_ID]


def eval_cppn(genome: Genome, x: float, y: float, r: float) -> tuple[float, float, float]:
    """Evaluate one coordinate tuple; raises StructureError on a cyclic genome."""
    xs = np.array([x], dtype=np.float64)
    ys = np.array([y], dtype=np.float64)
    rs = np.array([r], dtype=np.float64)
    b, h, s = _evaluate(genome, xs, ys, rs)
    return float(b[0]), float(h[0]), float(s[0])


def coordinate_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel-center coordinates: x, y in [-1, 1], r the Euclidean norm."""
    xs = -1.0 + 2.0 * (np.arange(width, dtype=np.float64) + 0.5) / width
    ys = -1.0 + 2.0 * (np.arange(height, dtype=np.float64) + 0.5) / height
    x = np.tile(xs, (height, 1))
    y = np.tile(ys[:, None], (1, width))
    r = np.sqrt(x * x + y * y)
    return x, y, r


def render(genome: Genome, width: int, height: int, color_mode: bool) -> ImageBuffer:
    """Render the genome to an HSB raster.

    Grayscale mode samples only the brightness output (hue = saturation = 0).
    In color mode hue wraps into [0, 1) and saturation clamps to [0, 1].
    """
    if width < 1 or height < 1:
        raise ValueError("render size must be at least 1x1")
    x, y, r = coordinate_grid(width, height)
    b, h_raw, s_raw = _evaluate(genome, x.ravel(), y.ravel(), r.ravel())

    hsb = np.zeros((height, width, 3), dtype=np.float64)
    hsb[:, :, 2] = b.reshape(height, width)
    if color_mode:
        hsb[:, :, 0] = np.mod(h_raw, 1.0).reshape(height, width)
        hsb[:, :, 1] = np.clip(s_raw, 0.0, 1.0).reshape(height, width)
    hsb.flags.writeable = False
    return ImageBuffer(width, height, hsb)


def to_rgb(buffer: ImageBuffer) -> np.ndarray:
    """HSB -> RGB bytes, components quantized by round(v * 255)."""
    h = buffer.hsb[:, :, 0]
    s = buffer.hsb[:, :, 1]
    v = buffer.hsb[:, :, 2]

    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6

    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.rint(rgb * 255.0).astype(np.uint8)


def to_png_bytes(buffer: ImageBuffer) -> bytes:
    out = io.BytesIO()
    Image.fromarray(to_rgb(buffer), mode="RGB").save(out, format="PNG")
    return out.getvalue()


def write_png(buffer: ImageBuffer, path) -> None:
    Image.fromarray(to_rgb(buffer), mode="RGB").save(path, format="PNG")


# ----------------------------------------------------------------------
# Canonical text serialization (diffable, hashable, round-trip exact)
# ----------------------------------------------------------------------

def serialize_genome(genome: Genome) -> str:
    lines = ["cppn 1"]
    for n in sorted(genome.nodes, key=lambda n: n.id):
        act = n.activation if n.activation is not None else "-"
        lines.append(f"node {n.id} {n.role} {act} {n.subnet}")
    for c in sorted(genome.connections, key=lambda c: c.innovation):
        lines.append(
            f"conn {c.innovation} {c.src} {c.dst} {c.weight!r} "
            f"{1 if c.enabled else 0} {c.subnet}"
        )
    return "\n".join(lines) + "\n"


def parse_genome(text: str) -> Genome:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["cppn", "1"]:
        raise ValueError("not a cppn genome file")
    nodes: list[NodeGene] = []
    conns: list[ConnectionGene] = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "node":
            _, nid, role, act, subnet = parts
            nodes.append(NodeGene(int(nid), role, None if act == "-" else act, subnet))
        elif parts[0] == "conn":
            _, innov, src, dst, weight, enabled, subnet = parts
            conns.append(ConnectionGene(
                int(innov), int(src), int(dst), float(weight),
                enabled == "1", subnet))
        else:
            raise ValueError(f"unknown genome line: {ln!r}")
    return Genome(tuple(nodes), tuple(conns))


def genome_hash(genome: Genome) -> str:
    return hashlib.sha256(serialize_genome(genome).encode()).hexdigest()


def validate_genome(genome: Genome) -> None:
    """Raise StructureError on any violated representation invariant."""
    roles = [n.role for n in genome.nodes]
    for role in INPUT_ROLES + OUTPUT_ROLES:
        if roles.count(role) != 1:
            raise StructureError(f"expected exactly one {role} node")
    ids = [n.id for n in genome.nodes]
    if len(set(ids)) != len(ids):
        raise StructureError("duplicate node ids")
    for n in genome.nodes:
        if n.role in OUTPUT_ROLES and n.activation != OUTPUT_ACTIVATION[n.role]:
            raise StructureError(f"{n.role} must keep activation {OUTPUT_ACTIVATION[n.role]}")
        if n.role == HIDDEN and n.activation not in ACTIVATIONS:
            raise StructureError(f"bad hidden activation {n.activation!r}")

    node_map = {n.id: n for n in genome.nodes}
    edges = set()
    seed_color = {(BRIGHTNESS_ID, HUE_ID), (BRIGHTNESS_ID, SATURATION_ID)}
    for c in genome.connections:
        if c.src not in node_map or c.dst not in node_map:
            raise StructureError("connection references missing node")
        if node_map[c.dst].role in INPUT_ROLES:
            raise StructureError("connection targets an input node")
        if c.src == c.dst:
            raise StructureError("self-loop")
        if (c.src, c.dst) in edges:
            raise StructureError(f"duplicate edge {(c.src, c.dst)}")
        edges.add((c.src, c.dst))
        if c.subnet != target_subnet(node_map, c.dst):
            raise StructureError(f"edge {(c.src, c.dst)} mis-tagged {c.subnet}")
        if node_map[c.src].subnet == COLOR and target_subnet(node_map, c.dst) == STRUCTURE:
            raise StructureError(f"color node {c.src} feeds structure node {c.dst}")
        seed_color.discard((c.src, c.dst))
    if seed_color:
        raise StructureError("missing seed brightness->hue/saturation connections")
    _topological_order(genome)  # raises on cycles


def distance_grayscale(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean absolute per-pixel brightness difference."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("image sizes differ")
    return float(np.mean(np.abs(a.brightness() - b.brightness())))


def radial_distance(x: float, y: float) -> float:
    return math.sqrt(x * x + y * y)
