"""Compile genomes into executable phenotypes.

The compiled form is a flat array plan (evaluation order plus per-node
incoming edge lists) shared by the pure-Python ``Phenotype.activate`` and
the compiled trial kernel in :mod:`neatlab.foraging`, so both evaluate the
same graph with the same operation order.

Activation is one synchronous pass per timestep: every non-input neuron
computes ``sigmoid(sum(w * a))`` where recurrent in-edges read the previous
timestep's activation and the rest read values already computed this pass.
Inputs pass through raw. Hidden and output neurons use the steepened
sigmoid ``1 / (1 + exp(-4.9 x))``, so outputs always lie strictly in (0, 1).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .genome import BIAS, HIDDEN, INPUT, OUTPUT, Genome, closes_cycle

SIGMOID_SLOPE = 4.9


def steep_sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-SIGMOID_SLOPE * x))


@dataclass
class Phenotype:
    """Executable network with persistent activation state.

    Carries mutable state across ``activate`` calls (one instance per
    concurrent evaluation task); ``reset`` zeroes it. ``index_of`` maps
    genome node ids to dense state indices for inspection in tests.
    """

    n_nodes: int
    n_inputs: int
    output_index: np.ndarray
    eval_order: np.ndarray
    edge_ptr: np.ndarray
    edge_src: np.ndarray
    edge_weight: np.ndarray
    edge_reads_prev: np.ndarray
    recurrent: bool
    index_of: dict[int, int]
    _curr: np.ndarray = field(init=False)
    _prev: np.ndarray = field(init=False)

    def __post_init__(self):
        self._curr = np.zeros(self.n_nodes)
        self._prev = np.zeros(self.n_nodes)

    def reset(self) -> None:
        self._curr[:] = 0.0
        self._prev[:] = 0.0

    def activate(self, inputs) -> np.ndarray:
        if len(inputs) != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {len(inputs)}")
        curr, prev = self._curr, self._prev
        for i in range(self.n_inputs):
            curr[i] = inputs[i]
        for oi in range(len(self.eval_order)):
            total = 0.0
            for ei in range(self.edge_ptr[oi], self.edge_ptr[oi + 1]):
                src = self.edge_src[ei]
                if self.edge_reads_prev[ei]:
                    total += self.edge_weight[ei] * prev[src]
                else:
                    total += self.edge_weight[ei] * curr[src]
            curr[self.eval_order[oi]] = steep_sigmoid(total)
        prev[:] = curr
        return curr[self.output_index].copy()


def compile(genome: Genome) -> Phenotype:  # noqa: A001 - domain verb
    """Build the evaluation plan for a genome's enabled connections.

    Nodes are laid out inputs first (dense index equals input channel),
    then outputs, then hidden nodes. Current-pass edges are ordered
    topologically; an edge not flagged recurrent that would still close a
    cycle among the current-pass edges (possible after tie crossovers in
    recurrent mode) is demoted to read the previous timestep instead. Gene
    flags are never altered.
    """
    inputs = sorted(n.id for n in genome.nodes if n.kind in (INPUT, BIAS))
    outputs = sorted(n.id for n in genome.nodes if n.kind == OUTPUT)
    hidden = sorted(n.id for n in genome.nodes if n.kind == HIDDEN)
    index_of = {nid: i for i, nid in enumerate(inputs + outputs + hidden)}
    n_nodes = len(index_of)
    n_in = len(inputs)

    enabled = [c for c in genome.connections if c.enabled]
    for c in enabled:
        if c.source not in index_of or c.target not in index_of:
            raise ValueError(
                f"connection {c.innovation} references unknown node "
                f"{c.source if c.source not in index_of else c.target}"
            )

    # Split edges into current-pass and previous-step readers; demote
    # non-recurrent edges that would make the current-pass subgraph cyclic.
    current_edges: list = []
    reads_prev: dict[int, bool] = {}
    for c in sorted(enabled, key=lambda c: c.innovation):
        if c.recurrent or closes_cycle(current_edges, c.source, c.target):
            reads_prev[c.innovation] = True
        else:
            reads_prev[c.innovation] = False
            current_edges.append(c)

    # Topological order of non-input nodes over the current-pass subgraph,
    # ties broken by dense index so the plan is deterministic.
    indegree = [0] * n_nodes
    adjacency: list[list[int]] = [[] for _ in range(n_nodes)]
    for c in current_edges:
        adjacency[index_of[c.source]].append(index_of[c.target])
        indegree[index_of[c.target]] += 1
    ready = [i for i in range(n_nodes) if indegree[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        if node >= n_in:
            order.append(node)
        for nxt in adjacency[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    assert len(order) == n_nodes - n_in, "current-pass subgraph must be acyclic"

    incoming: dict[int, list] = {i: [] for i in range(n_nodes)}
    for c in enabled:
        incoming[index_of[c.target]].append(c)

    edge_ptr = [0]
    edge_src: list[int] = []
    edge_weight: list[float] = []
    edge_prev: list[bool] = []
    for node in order:
        for c in sorted(incoming[node], key=lambda c: c.innovation):
            edge_src.append(index_of[c.source])
            edge_weight.append(c.weight)
            edge_prev.append(reads_prev[c.innovation])
        edge_ptr.append(len(edge_src))

    return Phenotype(
        n_nodes=n_nodes,
        n_inputs=n_in,
        output_index=np.array([index_of[o] for o in outputs], dtype=np.int64),
        eval_order=np.array(order, dtype=np.int64),
        edge_ptr=np.array(edge_ptr, dtype=np.int64),
        edge_src=np.array(edge_src, dtype=np.int64),
        edge_weight=np.array(edge_weight, dtype=np.float64),
        edge_reads_prev=np.array(edge_prev, dtype=np.bool_),
        recurrent=bool(any(reads_prev.values())),
        index_of=index_of,
    )
