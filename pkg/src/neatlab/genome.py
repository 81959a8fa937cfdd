"""Genotype representation and variation operators for topology-evolving networks.

A genome is a list of node genes plus a list of connection genes ordered by
innovation number. Structural mutations draw their markers from a shared
``InnovationRegistry`` so that identical mutations arising independently in
the same generation receive identical innovation numbers, which is what makes
crossover gene alignment and compatibility distance meaningful.

Genomes are treated as immutable values: every operator returns a new genome
and never modifies its arguments (the ``fitness`` attribute, set once after
evaluation, is the single exception).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Literal, Optional

import numpy as np

if TYPE_CHECKING:
    from .foraging import FitnessRecord

INPUT = "input"
BIAS = "bias"
HIDDEN = "hidden"
OUTPUT = "output"

NODE_KINDS = (INPUT, BIAS, HIDDEN, OUTPUT)

InitMode = Literal["partial", "feature_select"]
FitterParent = Literal["a", "b", "tie"]


@dataclass(frozen=True)
class NodeGene:
    id: int
    kind: str


@dataclass(frozen=True)
class ConnectionGene:
    innovation: int
    source: int
    target: int
    weight: float
    enabled: bool
    recurrent: bool


@dataclass
class GenomeParams:
    """Tunable constants for genome initialization and mutation.

    ``p_init`` is the per-pair connect probability for "partial" initial
    genomes. Weight initialization is uniform on
    ``[-weight_init_range, +weight_init_range]``; perturbations add uniform
    noise from ``[-perturb_delta, +perturb_delta]``; all weights are clamped
    to ``[-weight_max, +weight_max]``.
    """

    p_init: float = 0.5
    weight_init_range: float = 1.0
    perturb_delta: float = 0.5
    weight_max: float = 8.0
    q_perturb: float = 0.8
    q_replace: float = 0.1
    q_redisable: float = 0.75
    p_add_connection: float = 0.3
    p_add_node: float = 0.1


@dataclass
class Genome:
    """Node genes plus connection genes sorted by innovation number."""

    nodes: list[NodeGene]
    connections: list[ConnectionGene]
    fitness: Optional["FitnessRecord"] = None

    def node_ids(self) -> set[int]:
        return {n.id for n in self.nodes}

    def input_ids(self) -> list[int]:
        """Input-side node ids (sensor inputs and the bias channel), ascending."""
        return sorted(n.id for n in self.nodes if n.kind in (INPUT, BIAS))

    def output_ids(self) -> list[int]:
        return sorted(n.id for n in self.nodes if n.kind == OUTPUT)

    def connected_pairs(self) -> set[tuple[int, int]]:
        return {(c.source, c.target) for c in self.connections}

    def enabled_connections(self) -> list[ConnectionGene]:
        return [c for c in self.connections if c.enabled]

    def clone(self, fitness: Optional["FitnessRecord"] = None) -> "Genome":
        return Genome(list(self.nodes), list(self.connections), fitness)


class InnovationRegistry:
    """Assigns innovation numbers and hidden-node ids for structural mutations.

    Within one generation, repeating a structural mutation (same connection
    pair, or splitting the gene with the same innovation) yields the same
    markers; ``begin_generation`` clears that memory while the counters keep
    increasing for the whole run.
    """

    def __init__(self, next_innovation: int = 0, next_node_id: int = 0):
        self.next_innovation = next_innovation
        self.next_node_id = next_node_id
        self._conn_cache: dict[tuple[int, int], int] = {}
        self._split_cache: dict[int, tuple[int, int, int]] = {}

    def reserve_node_ids(self, count: int) -> None:
        """Ensure fixed io node ids [0, count) are never handed out again."""
        self.next_node_id = max(self.next_node_id, count)

    def connection_innovation(self, source: int, target: int) -> int:
        key = (source, target)
        if key not in self._conn_cache:
            self._conn_cache[key] = self.next_innovation
            self.next_innovation += 1
        return self._conn_cache[key]

    def split_markers(self, innovation: int) -> tuple[int, int, int]:
        """Markers (node id, in-edge innovation, out-edge innovation) for
        splitting the connection gene carrying ``innovation``."""
        if innovation not in self._split_cache:
            self._split_cache[innovation] = self._fresh_split()
        return self._split_cache[innovation]

    def fresh_split_markers(self) -> tuple[int, int, int]:
        """Uncached markers, for the rare case where the cached node id
        already exists in the requesting genome (a re-enabled gene being
        split twice along one lineage)."""
        return self._fresh_split()

    def _fresh_split(self) -> tuple[int, int, int]:
        node_id = self.next_node_id
        self.next_node_id += 1
        in_innov = self.next_innovation
        out_innov = self.next_innovation + 1
        self.next_innovation += 2
        return node_id, in_innov, out_innov

    def begin_generation(self) -> None:
        self._conn_cache.clear()
        self._split_cache.clear()


def _reachable(adjacency: dict[int, list[int]], start: int, goal: int) -> bool:
    stack = [start]
    seen = {start}
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        for nxt in adjacency.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def closes_cycle(connections: Iterable[ConnectionGene], source: int, target: int) -> bool:
    """Would adding source->target close a directed cycle?

    The test runs over every connection gene, enabled or not: disabled genes
    can be re-enabled by crossover, so they stay part of the structural graph.
    """
    if source == target:
        return True
    adjacency: dict[int, list[int]] = {}
    for c in connections:
        adjacency.setdefault(c.source, []).append(c.target)
    return _reachable(adjacency, target, source)


def is_acyclic(genome: Genome) -> bool:
    """Kahn's topological sort over all connection genes."""
    indeg = {n.id: 0 for n in genome.nodes}
    adjacency: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for c in genome.connections:
        adjacency[c.source].append(c.target)
        indeg[c.target] += 1
    ready = [nid for nid, d in indeg.items() if d == 0]
    visited = 0
    while ready:
        node = ready.pop()
        visited += 1
        for nxt in adjacency[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    return visited == len(genome.nodes)


def new_genome(
    n_inputs: int,
    n_outputs: int,
    init_mode: InitMode,
    params: GenomeParams,
    reg: InnovationRegistry,
    rng: np.random.Generator,
) -> Genome:
    """Create an initial genome.

    Node ids are fixed: inputs occupy ids ``0 .. n_inputs-1`` with the last
    one acting as the always-on bias channel, outputs follow. ``partial``
    connects each input/output pair independently with probability
    ``params.p_init``; ``feature_select`` connects exactly one uniformly
    chosen input (bias included) to every output.
    """
    if n_inputs < 1 or n_outputs < 1:
        raise ValueError(
            f"need at least one input and one output, got {n_inputs}/{n_outputs}"
        )
    nodes = [NodeGene(i, INPUT) for i in range(n_inputs - 1)]
    nodes.append(NodeGene(n_inputs - 1, BIAS))
    nodes.extend(NodeGene(n_inputs + j, OUTPUT) for j in range(n_outputs))
    reg.reserve_node_ids(n_inputs + n_outputs)

    w = params.weight_init_range
    connections = []
    if init_mode == "feature_select":
        source = int(rng.integers(n_inputs))
        for j in range(n_outputs):
            target = n_inputs + j
            connections.append(
                ConnectionGene(
                    reg.connection_innovation(source, target),
                    source,
                    target,
                    float(rng.uniform(-w, w)),
                    True,
                    False,
                )
            )
    elif init_mode == "partial":
        for source in range(n_inputs):
            for j in range(n_outputs):
                target = n_inputs + j
                if rng.random() < params.p_init:
                    connections.append(
                        ConnectionGene(
                            reg.connection_innovation(source, target),
                            source,
                            target,
                            float(rng.uniform(-w, w)),
                            True,
                            False,
                        )
                    )
    else:
        raise ValueError(f"unknown init mode: {init_mode!r}")

    connections.sort(key=lambda c: c.innovation)
    return Genome(nodes, connections)


def _insert_gene(connections: list[ConnectionGene], gene: ConnectionGene) -> list[ConnectionGene]:
    """New list with ``gene`` inserted keeping innovation order."""
    innovations = [c.innovation for c in connections]
    pos = bisect.bisect_left(innovations, gene.innovation)
    return connections[:pos] + [gene] + connections[pos:]


def mutate_add_connection(
    g: Genome,
    allow_recurrent: bool,
    params: GenomeParams,
    reg: InnovationRegistry,
    rng: np.random.Generator,
) -> Genome:
    """Add one connection between a uniformly chosen unconnected pair.

    Sources are any non-output node, targets any hidden or output node.
    With recurrency disallowed, pairs that would close a directed cycle are
    not candidates; otherwise the new gene is flagged ``recurrent`` exactly
    when it closes a cycle at creation time. Saturation is a silent no-op.
    """
    taken = g.connected_pairs()
    sources = sorted(n.id for n in g.nodes if n.kind != OUTPUT)
    targets = sorted(n.id for n in g.nodes if n.kind in (HIDDEN, OUTPUT))
    untaken = [(s, t) for s in sources for t in targets if (s, t) not in taken]
    if not untaken:
        return g

    adjacency: dict[int, list[int]] = {}
    for c in g.connections:
        adjacency.setdefault(c.source, []).append(c.target)

    # Scanning a shuffled candidate list until the first legal pair keeps
    # the choice uniform over legal pairs without running a cycle test on
    # every candidate.
    for idx in rng.permutation(len(untaken)):
        s, t = untaken[idx]
        cyclic = s == t or _reachable(adjacency, t, s)
        if cyclic and not allow_recurrent:
            continue
        gene = ConnectionGene(
            reg.connection_innovation(s, t),
            s,
            t,
            float(rng.uniform(-params.weight_init_range, params.weight_init_range)),
            True,
            cyclic,
        )
        return Genome(list(g.nodes), _insert_gene(g.connections, gene), None)
    return g


def mutate_add_node(
    g: Genome,
    params: GenomeParams,
    reg: InnovationRegistry,
    rng: np.random.Generator,
) -> Genome:
    """Split a random enabled connection with a new hidden node.

    The old gene is disabled; the in-edge gets weight 1.0 and the out-edge
    inherits the old weight. No enabled connections is a silent no-op.
    """
    enabled = g.enabled_connections()
    if not enabled:
        return g
    old = enabled[int(rng.integers(len(enabled)))]
    node_id, in_innov, out_innov = reg.split_markers(old.innovation)
    if node_id in g.node_ids():
        node_id, in_innov, out_innov = reg.fresh_split_markers()

    connections = [replace(c, enabled=False) if c is old else c for c in g.connections]
    # Recurrency of each new edge is judged against the graph as it grows,
    # so splitting a recurrent gene yields a recurrent out-edge.
    in_gene = ConnectionGene(
        in_innov, old.source, node_id, 1.0, True,
        closes_cycle(connections, old.source, node_id),
    )
    connections = _insert_gene(connections, in_gene)
    out_gene = ConnectionGene(
        out_innov, node_id, old.target, old.weight, True,
        closes_cycle(connections, node_id, old.target),
    )
    connections = _insert_gene(connections, out_gene)

    nodes = sorted(g.nodes + [NodeGene(node_id, HIDDEN)], key=lambda n: n.id)
    return Genome(nodes, connections, None)


def mutate_weights(g: Genome, params: GenomeParams, rng: np.random.Generator) -> Genome:
    """Perturb or replace each connection weight independently."""
    w_max = params.weight_max
    connections = []
    for c in g.connections:
        u = rng.random()
        if u < params.q_perturb:
            w = c.weight + float(rng.uniform(-params.perturb_delta, params.perturb_delta))
        elif u < params.q_perturb + params.q_replace:
            w = float(rng.uniform(-params.weight_init_range, params.weight_init_range))
        else:
            connections.append(c)
            continue
        connections.append(replace(c, weight=min(w_max, max(-w_max, w))))
    return Genome(list(g.nodes), connections, None)


def crossover(
    a: Genome,
    b: Genome,
    fitter: FitterParent,
    params: GenomeParams,
    allow_recurrent: bool,
    rng: np.random.Generator,
) -> Genome:
    """Recombine two genomes by innovation-number alignment.

    Matching genes come uniformly from either parent; disjoint and excess
    genes come from the fitter parent, or per-gene coin flips on a tie.
    A gene disabled in either parent is disabled in the child with
    probability ``q_redisable``.

    The child is assembled in innovation order and a gene is skipped when it
    would duplicate an already-taken (source, target) pair (possible because
    innovation memory is per-generation) or, with recurrency disallowed,
    when it would close a cycle (possible when a tie mixes disjoint genes
    from both sides).
    """
    genes_a = {c.innovation: c for c in a.connections}
    genes_b = {c.innovation: c for c in b.connections}
    nodes_by_id = {n.id: n for n in b.nodes}
    nodes_by_id.update({n.id: n for n in a.nodes})

    chosen: list[ConnectionGene] = []
    for innov in sorted(set(genes_a) | set(genes_b)):
        ca = genes_a.get(innov)
        cb = genes_b.get(innov)
        if ca is not None and cb is not None:
            gene = ca if rng.random() < 0.5 else cb
            disabled_in_parent = not (ca.enabled and cb.enabled)
        else:
            present, side = (ca, "a") if ca is not None else (cb, "b")
            if fitter == "tie":
                if rng.random() < 0.5:
                    continue
            elif fitter != side:
                continue
            gene = present
            disabled_in_parent = not present.enabled
        enabled = True
        if disabled_in_parent and rng.random() < params.q_redisable:
            enabled = False
        chosen.append(replace(gene, enabled=enabled))

    accepted: list[ConnectionGene] = []
    pairs: set[tuple[int, int]] = set()
    for gene in chosen:
        if (gene.source, gene.target) in pairs:
            continue
        if not allow_recurrent and closes_cycle(accepted, gene.source, gene.target):
            continue
        accepted.append(gene)
        pairs.add((gene.source, gene.target))

    io_nodes = [n for n in a.nodes if n.kind != HIDDEN]
    hidden_ids = set()
    for gene in accepted:
        for nid in (gene.source, gene.target):
            if nodes_by_id[nid].kind == HIDDEN:
                hidden_ids.add(nid)
    nodes = sorted(io_nodes + [nodes_by_id[h] for h in hidden_ids], key=lambda n: n.id)
    return Genome(nodes, accepted, None)


def compatibility_distance(
    a: Genome,
    b: Genome,
    coeffs: tuple[float, float, float],
    small_genome_threshold: int = 0,
) -> float:
    """Structural distance c1*E/N + c2*D/N + c3*meanW.

    E counts excess genes (innovations beyond the other genome's largest),
    D counts disjoint genes, meanW is the mean absolute weight difference
    over matching genes. N is the larger gene count, except N = 1 when both
    genomes have fewer than ``small_genome_threshold`` genes (0 disables
    that convention).
    """
    c1, c2, c3 = coeffs
    genes_a = {c.innovation: c for c in a.connections}
    genes_b = {c.innovation: c for c in b.connections}
    if not genes_a and not genes_b:
        return 0.0
    max_a = max(genes_a, default=-1)
    max_b = max(genes_b, default=-1)

    matching = genes_a.keys() & genes_b.keys()
    excess = 0
    disjoint = 0
    for innov in genes_a.keys() ^ genes_b.keys():
        other_max = max_b if innov in genes_a else max_a
        if innov > other_max:
            excess += 1
        else:
            disjoint += 1
    mean_w = (
        sum(abs(genes_a[i].weight - genes_b[i].weight) for i in matching) / len(matching)
        if matching
        else 0.0
    )

    len_a, len_b = len(genes_a), len(genes_b)
    if len_a < small_genome_threshold and len_b < small_genome_threshold:
        n = 1
    else:
        n = max(len_a, len_b, 1)
    return c1 * excess / n + c2 * disjoint / n + c3 * mean_w


def genome_to_dict(g: Genome) -> dict:
    return {
        "nodes": [{"id": n.id, "kind": n.kind} for n in g.nodes],
        "connections": [
            {
                "innovation": c.innovation,
                "source": c.source,
                "target": c.target,
                "weight": c.weight,
                "enabled": c.enabled,
                "recurrent": c.recurrent,
            }
            for c in g.connections
        ],
    }


def genome_from_dict(data: dict) -> Genome:
    nodes = [NodeGene(int(n["id"]), str(n["kind"])) for n in data["nodes"]]
    connections = [
        ConnectionGene(
            int(c["innovation"]),
            int(c["source"]),
            int(c["target"]),
            float(c["weight"]),
            bool(c["enabled"]),
            bool(c["recurrent"]),
        )
        for c in data["connections"]
    ]
    return Genome(nodes, connections)


def genome_to_json(g: Genome) -> str:
    """Serialize a genome losslessly (weights round-trip via repr)."""
    return json.dumps(genome_to_dict(g), separators=(",", ":"))


def genome_from_json(text: str) -> Genome:
    return genome_from_dict(json.loads(text))
