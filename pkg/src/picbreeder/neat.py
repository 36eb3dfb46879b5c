"""Genetic operators over CPPN genomes.

Weight perturbation scaled by a strength slider, structural mutations that
respect the structure/color mutation mode, innovation-aligned crossover,
and offspring-population construction.  All operators are pure functions of
(genome, params, rng); the innovation registry is the one shared object and
serializes its own bookkeeping.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, replace
from random import Random

from .cppn import (
    ACTIVATIONS,
    COLOR,
    HIDDEN,
    SEED_IDS,
    STRUCTURE,
    ConnectionGene,
    Genome,
    NodeGene,
    StructureError,
    connection_allowed,
    creates_cycle,
    target_subnet,
)

log = logging.getLogger(__name__)

MODES = ("structure-only", "color-only", "both")

STRENGTH_MIN, STRENGTH_MAX = 0.01, 1.0


class ParameterError(ValueError):
    pass


def permitted_subnets(mode: str) -> frozenset[str]:
    if mode == "structure-only":
        return frozenset((STRUCTURE,))
    if mode == "color-only":
        return frozenset((COLOR,))
    if mode == "both":
        return frozenset((STRUCTURE, COLOR))
    raise ParameterError(f"unknown mutation mode {mode!r}")


@dataclass(frozen=True)
class MutationParams:
    strength: float = 0.5
    mode: str = "structure-only"
    p_weight: float = 0.8
    rate_add_node: float = 0.08
    rate_add_connection: float = 0.15
    rate_activation: float = 0.1

    def __post_init__(self):
        if not STRENGTH_MIN <= self.strength <= STRENGTH_MAX:
            raise ParameterError(
                f"strength {self.strength} outside [{STRENGTH_MIN}, {STRENGTH_MAX}]")
        permitted_subnets(self.mode)


class InnovationRegistry:
    """Experiment-global innovation numbers and split-node ids.

    Equal structural signatures get equal numbers for the lifetime of the
    experiment, which is what makes crossover gene alignment meaningful.
    New node ids and connection innovations share one counter so they can
    never collide.  Thread-safe; new assignments can be drained for an
    append-only persistence log.
    """

    def __init__(self, next_id: int = SEED_IDS):
        self._lock = threading.Lock()
        self._conn: dict[tuple[int, int], int] = {}
        self._node: dict[tuple[int, int, int], int] = {}
        self._next = next_id
        self._pending: list[dict] = []

    def conn_innovation(self, src: int, dst: int) -> int:
        with self._lock:
            key = (src, dst)
            if key not in self._conn:
                self._conn[key] = self._next
                self._pending.append(
                    {"kind": "conn", "src": src, "dst": dst, "id": self._next})
                self._next += 1
            return self._conn[key]

    def split_node_id(self, src: int, dst: int, existing_ids) -> int:
        """Node id for splitting connection src->dst.

        The same split in another genome reuses the id; if that id already
        exists in this genome (a re-split after crossover), the next
        occurrence key yields a fresh one.
        """
        with self._lock:
            occurrence = 0
            while True:
                key = (src, dst, occurrence)
                if key not in self._node:
                    self._node[key] = self._next
                    self._pending.append(
                        {"kind": "node", "src": src, "dst": dst,
                         "occ": occurrence, "id": self._next})
                    self._next += 1
                if self._node[key] not in existing_ids:
                    return self._node[key]
                occurrence += 1

    def drain_events(self) -> list[dict]:
        with self._lock:
            events, self._pending = self._pending, []
            return events

    def replay_event(self, event: dict) -> None:
        with self._lock:
            if event["kind"] == "conn":
                self._conn[(event["src"], event["dst"])] = event["id"]
            else:
                self._node[(event["src"], event["dst"], event["occ"])] = event["id"]
            self._next = max(self._next, event["id"] + 1)


def mutate_weights(genome: Genome, params: MutationParams, rng: Random) -> Genome:
    """Gaussian-perturb each permitted-subnet weight with probability p_weight.

    sigma equals params.strength; forbidden-subnet weights stay bit-identical.
    """
    allowed = permitted_subnets(params.mode)
    sigma = params.strength
    p = params.p_weight
    out = []
    changed = False
    for c in genome.connections:
        if c.subnet in allowed and rng.random() < p:
            out.append(ConnectionGene(c.innovation, c.src, c.dst,
                                      c.weight + rng.gauss(0.0, sigma),
                                      c.enabled, c.subnet))
            changed = True
        else:
            out.append(c)
    if not changed:
        return genome
    return Genome(genome.nodes, tuple(out))


def add_node(genome: Genome, mode: str, registry: InnovationRegistry,
             rng: Random) -> tuple[Genome, bool]:
    """Split a random permitted enabled connection with a new hidden node.

    The old connection is disabled; in-weight is 1.0 and out-weight keeps the
    old weight.  Returns (genome, False) when no permitted connection exists.
    """
    allowed = permitted_subnets(mode)
    candidates = [c for c in genome.connections if c.enabled and c.subnet in allowed]
    if not candidates:
        return genome, False
    target = candidates[rng.randrange(len(candidates))]

    node_id = registry.split_node_id(target.src, target.dst, set(genome.node_map))
    activation = ACTIVATIONS[rng.randrange(len(ACTIVATIONS))]
    subnet = COLOR if target.subnet == COLOR else STRUCTURE
    new_node = NodeGene(node_id, HIDDEN, activation, subnet)

    nodes = dict(genome.node_map)
    nodes[node_id] = new_node
    in_conn = ConnectionGene(
        registry.conn_innovation(target.src, node_id),
        target.src, node_id, 1.0, True, target_subnet(nodes, node_id))
    out_conn = ConnectionGene(
        registry.conn_innovation(node_id, target.dst),
        node_id, target.dst, target.weight, True, target_subnet(nodes, target.dst))

    conns = tuple(replace(c, enabled=False) if c is target else c
                  for c in genome.connections) + (in_conn, out_conn)
    return Genome(genome.nodes + (new_node,), conns), True


def add_connection(genome: Genome, mode: str, registry: InnovationRegistry,
                   rng: Random, max_tries: int = 20) -> tuple[Genome, bool]:
    """Add a random legal edge in the permitted subnet, weight uniform [-1, 1].

    Gives up after max_tries failed placements and returns (genome, False).
    """
    allowed = permitted_subnets(mode)
    nodes = genome.nodes
    node_map = genome.node_map
    for _ in range(max_tries):
        src = nodes[rng.randrange(len(nodes))].id
        dst = nodes[rng.randrange(len(nodes))].id
        if not connection_allowed(genome, src, dst):
            continue
        subnet = target_subnet(node_map, dst)
        if subnet not in allowed:
            continue
        if creates_cycle(genome, src, dst):
            continue
        conn = ConnectionGene(registry.conn_innovation(src, dst),
                              src, dst, rng.uniform(-1, 1), True, subnet)
        return Genome(genome.nodes, genome.connections + (conn,)), True
    return genome, False


def mutate_activation(genome: Genome, rng: Random, rate: float = 0.1,
                      mode: str = "both") -> Genome:
    """Resample each hidden node's activation with per-node probability rate.

    Restricted to hidden nodes in the mode's permitted subnets so the
    color-only closure invariant extends to activation changes.
    """
    allowed = permitted_subnets(mode)
    out = []
    changed = False
    for n in genome.nodes:
        if n.role == HIDDEN and n.subnet in allowed and rng.random() < rate:
            out.append(NodeGene(n.id, n.role,
                                ACTIVATIONS[rng.randrange(len(ACTIVATIONS))],
                                n.subnet))
            changed = True
        else:
            out.append(n)
    if not changed:
        return genome
    return Genome(tuple(out), genome.connections)


def crossover(parent_a: Genome, parent_b: Genome, rng: Random,
              max_retries: int = 5) -> Genome:
    """NEAT gene alignment by innovation number.

    Matching genes come from a uniformly random parent; disjoint and excess
    genes from a uniformly chosen leading parent (sessions assign no fitness).
    A child that closes a cycle is retried with fresh coin flips, then falls
    back to a copy of parent_a.
    """
    genes_a = {c.innovation: c for c in parent_a.connections}
    genes_b = {c.innovation: c for c in parent_b.connections}
    for _ in range(max_retries + 1):
        lead_is_a = rng.random() < 0.5
        lead, other = (parent_a, parent_b) if lead_is_a else (parent_b, parent_a)
        lead_genes = genes_a if lead_is_a else genes_b

        conns: list[ConnectionGene] = []
        for innov in sorted(set(genes_a) | set(genes_b)):
            in_a, in_b = innov in genes_a, innov in genes_b
            if in_a and in_b:
                conns.append(genes_a[innov] if rng.random() < 0.5 else genes_b[innov])
            elif innov in lead_genes:
                conns.append(lead_genes[innov])

        node_map = dict(lead.node_map)
        for c in conns:
            for nid in (c.src, c.dst):
                if nid not in node_map:
                    node_map[nid] = other.node_map[nid]
        child = Genome(tuple(sorted(node_map.values(), key=lambda n: n.id)),
                       tuple(conns))
        try:
            child.topo_order
        except StructureError:
            continue
        return child
    log.debug("crossover produced cycles %d times; falling back to parent copy",
              max_retries + 1)
    return parent_a


def make_offspring(parents, params: MutationParams, registry: InnovationRegistry,
                   rng: Random, pop_size: int = 15) -> tuple[Genome, ...]:
    """Next population: exact parent copies first, then mutated children.

    Children of multiple parents cross two distinct uniformly chosen parents
    before mutation.  Every child gets a weight mutation; structural and
    activation mutations apply at their configured rates.
    """
    parents = list(parents)
    if not 1 <= len(parents) <= pop_size:
        raise ParameterError(f"parent count {len(parents)} outside 1..{pop_size}")
    population: list[Genome] = list(parents)
    while len(population) < pop_size:
        if len(parents) >= 2:
            i, j = rng.sample(range(len(parents)), 2)
            child = crossover(parents[i], parents[j], rng)
        else:
            child = parents[0]
        child = mutate_weights(child, params, rng)
        if rng.random() < params.rate_add_node:
            child, _ = add_node(child, params.mode, registry, rng)
        if rng.random() < params.rate_add_connection:
            child, _ = add_connection(child, params.mode, registry, rng)
        child = mutate_activation(child, rng, params.rate_activation, params.mode)
        population.append(child)
    return tuple(population)
