"""Shared test helpers."""

import numpy as np

from neatlab.genome import (
    BIAS,
    HIDDEN,
    INPUT,
    OUTPUT,
    ConnectionGene,
    Genome,
    GenomeParams,
    InnovationRegistry,
    NodeGene,
    mutate_add_connection,
    mutate_add_node,
    mutate_weights,
    new_genome,
)


def make_genome(n_in, n_out, gene_specs, hidden_ids=()):
    """Genome from explicit (innovation, source, target, weight, enabled,
    recurrent) tuples; inputs 0..n_in-1 (last is bias), outputs follow."""
    nodes = [NodeGene(i, INPUT) for i in range(n_in - 1)]
    nodes.append(NodeGene(n_in - 1, BIAS))
    nodes.extend(NodeGene(n_in + j, OUTPUT) for j in range(n_out))
    nodes.extend(NodeGene(h, HIDDEN) for h in hidden_ids)
    conns = [ConnectionGene(*spec) for spec in sorted(gene_specs)]
    return Genome(sorted(nodes, key=lambda n: n.id), conns)


def random_genome(rng, n_in=3, n_out=2, max_nodes=10, allow_recurrent=True,
                  mutations=None, p_init=0.6):
    """Grow a random small genome through the mutation operators."""
    params = GenomeParams()
    reg = InnovationRegistry()
    g = new_genome(n_in, n_out, "partial", GenomeParams(p_init=p_init), reg, rng)
    steps = int(rng.integers(0, 8)) if mutations is None else mutations
    for _ in range(steps):
        roll = rng.random()
        if roll < 0.45:
            g = mutate_add_connection(g, allow_recurrent, params, reg, rng)
        elif roll < 0.7 and len(g.nodes) < max_nodes:
            g = mutate_add_node(g, params, reg, rng)
        else:
            g = mutate_weights(g, params, rng)
    return g


def oracle_outputs(genome, input_stream):
    """Recursive-substitution evaluation of the same graph.

    value(node, t) is the raw input for input-side nodes, otherwise
    sigmoid of the weighted sum where recurrent in-edges use value(src, t-1)
    and the rest use value(src, t); values at t=-1 are zero.
    """
    from neatlab.network import steep_sigmoid

    input_ids = genome.input_ids()
    slot = {nid: i for i, nid in enumerate(input_ids)}
    incoming = {}
    for c in genome.connections:
        if c.enabled:
            incoming.setdefault(c.target, []).append(c)
    for conns in incoming.values():
        conns.sort(key=lambda c: c.innovation)
    memo = {}

    def value(node, t):
        if t < 0:
            return 0.0
        if node in slot:
            return float(input_stream[t][slot[node]])
        key = (node, t)
        if key not in memo:
            total = 0.0
            for c in incoming.get(node, ()):
                total += c.weight * value(c.source, t - 1 if c.recurrent else t)
            memo[key] = steep_sigmoid(total)
        return memo[key]

    outs = []
    for t in range(len(input_stream)):
        outs.append([value(o, t) for o in genome.output_ids()])
    return outs
