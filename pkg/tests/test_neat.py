import statistics
from random import Random

import numpy as np
import pytest

from picbreeder.cppn import (
    COLOR,
    HIDDEN,
    STRUCTURE,
    ConnectionGene,
    Genome,
    connection_allowed,
    creates_cycle,
    init_genome,
    render,
    target_subnet,
    validate_genome,
)
from picbreeder.neat import (
    InnovationRegistry,
    MutationParams,
    ParameterError,
    add_connection,
    add_node,
    crossover,
    make_offspring,
    mutate_activation,
    mutate_weights,
    permitted_subnets,
)


def test_params_reject_out_of_range_strength():
    with pytest.raises(ParameterError):
        MutationParams(strength=1.5)
    with pytest.raises(ParameterError):
        MutationParams(strength=0.005)
    with pytest.raises(ParameterError):
        MutationParams(mode="colour")


def test_mutate_weights_color_only_leaves_structure_untouched():
    g = init_genome(Random(1))
    params = MutationParams(strength=1.0, mode="color-only")
    mutated = mutate_weights(g, params, Random(2))
    for before, after in zip(g.connections, mutated.connections):
        if before.subnet == STRUCTURE:
            assert before == after


def test_mutate_weights_seeded_repeatable():
    g = init_genome(Random(1))
    params = MutationParams(strength=0.5, mode="both")
    assert mutate_weights(g, params, Random(9)) == mutate_weights(g, params, Random(9))


@pytest.mark.parametrize("strength", [0.01, 1.0])
def test_mutate_weights_perturbation_scale(strength):
    g = init_genome(Random(4))
    params = MutationParams(strength=strength, mode="both", p_weight=1.0)
    rng = Random(7)
    deltas = []
    while len(deltas) < 10_000:
        mutated = mutate_weights(g, params, rng)
        deltas.extend(a.weight - b.weight
                      for a, b in zip(mutated.connections, g.connections))
    sd = statistics.pstdev(deltas)
    assert abs(sd - strength) <= 0.1 * strength


def test_add_node_splits_identity_path_without_changing_image():
    base = init_genome(Random(3))
    registry = InnovationRegistry()
    rng = Random(5)
    # Force the inserted node to use identity activation by retrying seeds:
    # with in-weight 1.0 the composition identity(1.0 * v) * w is unchanged.
    for seed in range(200):
        g, changed = add_node(base, "structure-only", registry, Random(seed))
        if changed and g.hidden_nodes()[0].activation == "identity":
            break
    else:
        pytest.fail("no identity split found")
    before = render(base, 16, 16, color_mode=True)
    after = render(g, 16, 16, color_mode=True)
    assert np.allclose(before.hsb, after.hsb, atol=1e-12)
    validate_genome(g)


def test_add_node_color_split_is_color_tagged():
    base = init_genome(Random(3))
    registry = InnovationRegistry()
    g, changed = add_node(base, "color-only", registry, Random(0))
    assert changed
    node = g.hidden_nodes()[0]
    assert node.subnet == COLOR
    for c in g.connections:
        if node.id in (c.src, c.dst):
            assert c.subnet == COLOR


def test_add_node_same_split_same_innovation_numbers():
    registry = InnovationRegistry()
    a = init_genome(Random(1))
    b = init_genome(Random(2))
    # Identical structural signature: force both to split the x->brightness
    # connection by making it the only enabled structure connection.
    def only_x(g):
        conns = tuple(
            c if (c.src, c.dst) == (0, 4) or c.subnet == COLOR
            else ConnectionGene(c.innovation, c.src, c.dst, c.weight, False, c.subnet)
            for c in g.connections)
        return Genome(g.nodes, conns)

    ga, _ = add_node(only_x(a), "structure-only", registry, Random(3))
    gb, _ = add_node(only_x(b), "structure-only", registry, Random(4))
    new_a = ga.hidden_nodes()[0]
    new_b = gb.hidden_nodes()[0]
    assert new_a.id == new_b.id
    innovs_a = {(c.src, c.dst): c.innovation for c in ga.connections}
    innovs_b = {(c.src, c.dst): c.innovation for c in gb.connections}
    assert innovs_a == innovs_b


def test_add_node_no_permitted_connection_is_flagged_noop():
    g = init_genome(Random(1))
    conns = tuple(
        ConnectionGene(c.innovation, c.src, c.dst, c.weight,
                       c.subnet == COLOR, c.subnet)
        for c in g.connections)
    g = Genome(g.nodes, conns)  # every structure connection disabled
    out, changed = add_node(g, "structure-only", InnovationRegistry(), Random(2))
    assert not changed
    assert out == g


def brute_force_legal_edges(genome, mode):
    allowed = permitted_subnets(mode)
    legal = []
    for src in genome.nodes:
        for dst in genome.nodes:
            if not connection_allowed(genome, src.id, dst.id):
                continue
            if target_subnet(genome.node_map, dst.id) not in allowed:
                continue
            if creates_cycle(genome, src.id, dst.id):
                continue
            legal.append((src.id, dst.id))
    return legal


def test_add_connection_respects_mode_and_acyclicity():
    registry = InnovationRegistry()
    rng = Random(8)
    g = init_genome(rng)
    for _ in range(30):
        g2, changed = add_connection(g, "structure-only", registry, rng)
        if changed:
            new = set(g2.connections) - set(g.connections)
            assert len(new) == 1
            assert new.pop().subnet == STRUCTURE
            validate_genome(g2)
            g = g2
        g2, changed = add_node(g, "both", registry, rng)
        if changed:
            g = g2


def test_add_connection_saturated_genome_flagged_noop():
    registry = InnovationRegistry()
    rng = Random(1)
    g = init_genome(rng)
    # Saturate by repeatedly adding every remaining legal edge.
    while True:
        legal = brute_force_legal_edges(g, "both")
        if not legal:
            break
        src, dst = legal[0]
        conn = ConnectionGene(registry.conn_innovation(src, dst), src, dst,
                              0.1, True, target_subnet(g.node_map, dst))
        g = Genome(g.nodes, g.connections + (conn,))
    validate_genome(g)
    out, changed = add_connection(g, "both", registry, rng)
    assert not changed
    assert out == g


def test_mutate_activation_no_hidden_unchanged():
    g = init_genome(Random(1))
    assert mutate_activation(g, Random(2), rate=1.0) == g


def test_mutate_activation_outputs_fixed_and_frequencies_uniform():
    base = init_genome(Random(3))
    g, _ = add_node(base, "structure-only", InnovationRegistry(), Random(4))
    hidden_id = g.hidden_nodes()[0].id
    rng = Random(5)
    counts = {k: 0 for k in ("sigmoid", "sine", "cosine", "identity")}
    for _ in range(10_000):
        mutated = mutate_activation(g, rng, rate=1.0)
        for n in mutated.nodes:
            if n.role != HIDDEN:
                assert n.activation == g.node_map[n.id].activation
        counts[mutated.node_map[hidden_id].activation] += 1
    for kind, n in counts.items():
        assert abs(n / 10_000 - 0.25) <= 0.02, kind


def test_mutate_activation_mode_restricts_subnet():
    base = init_genome(Random(3))
    registry = InnovationRegistry()
    g, _ = add_node(base, "structure-only", registry, Random(4))
    g, _ = add_node(g, "color-only", registry, Random(5))
    structure_ids = {n.id for n in g.hidden_nodes() if n.subnet == STRUCTURE}
    mutated = mutate_activation(g, Random(6), rate=1.0, mode="color-only")
    for nid in structure_ids:
        assert mutated.node_map[nid] == g.node_map[nid]


def test_crossover_self_is_identity():
    g = init_genome(Random(1))
    child = crossover(g, g, Random(2))
    assert child == g


def test_crossover_innovations_subset_of_union():
    registry = InnovationRegistry()
    rng = Random(3)
    a = init_genome(rng)
    b = init_genome(rng)
    for _ in range(6):
        a, _ = add_connection(a, "both", registry, rng)
        a, _ = add_node(a, "both", registry, rng)
        b, _ = add_node(b, "both", registry, rng)
    union = {c.innovation for c in a.connections} | {c.innovation for c in b.connections}
    for seed in range(50):
        child = crossover(a, b, Random(seed))
        assert {c.innovation for c in child.connections} <= union
        validate_genome(child)


def test_crossover_matching_weights_uniform():
    a = init_genome(Random(1))
    b = init_genome(Random(2))
    rng = Random(3)
    from_a = total = 0
    for _ in range(1000):
        child = crossover(a, b, rng)
        weights_a = {c.innovation: c.weight for c in a.connections}
        for c in child.connections:
            total += 1
            if c.weight == weights_a[c.innovation]:
                from_a += 1
    assert abs(from_a / total - 0.5) <= 0.05


def test_make_offspring_population_shape():
    registry = InnovationRegistry()
    rng = Random(4)
    parents = [init_genome(rng) for _ in range(3)]
    params = MutationParams()
    pop = make_offspring(parents, params, registry, rng)
    assert len(pop) == 15
    assert pop[0] == parents[0] and pop[1] == parents[1] and pop[2] == parents[2]
    with pytest.raises(ParameterError):
        make_offspring([], params, registry, rng)


def test_make_offspring_single_parent_slot0_exact():
    registry = InnovationRegistry()
    rng = Random(5)
    parent = init_genome(rng)
    pop = make_offspring([parent], MutationParams(), registry, rng)
    assert pop[0] == parent


def random_mode(rng, color_allowed=True):
    modes = ["structure-only", "both", "color-only"] if color_allowed else ["structure-only"]
    return modes[rng.randrange(len(modes))]


def test_fuzz_operators_preserve_invariants():
    registry = InnovationRegistry()
    rng = Random(99)
    for _ in range(300):
        g = init_genome(rng)
        for _ in range(rng.randrange(1, 8)):
            op = rng.randrange(4)
            mode = random_mode(rng)
            if op == 0:
                g = mutate_weights(g, MutationParams(strength=rng.uniform(0.01, 1), mode=mode), rng)
            elif op == 1:
                g, _ = add_node(g, mode, registry, rng)
            elif op == 2:
                g, _ = add_connection(g, mode, registry, rng)
            else:
                g = mutate_activation(g, rng, rate=0.5, mode=mode)
        validate_genome(g)


def test_fuzz_color_only_sequences_keep_grayscale_bit_identical():
    registry = InnovationRegistry()
    rng = Random(123)
    for _ in range(150):
        g = init_genome(rng)
        # Prime with some structure so the color subnet has company.
        for _ in range(3):
            g, _ = add_node(g, "both", registry, rng)
            g, _ = add_connection(g, "both", registry, rng)
        before = render(g, 12, 12, color_mode=False)
        mutated = g
        params = MutationParams(strength=1.0, mode="color-only")
        for _ in range(rng.randrange(1, 6)):
            op = rng.randrange(4)
            if op == 0:
                mutated = mutate_weights(mutated, params, rng)
            elif op == 1:
                mutated, _ = add_node(mutated, "color-only", registry, rng)
            elif op == 2:
                mutated, _ = add_connection(mutated, "color-only", registry, rng)
            else:
                mutated = mutate_activation(mutated, rng, rate=1.0, mode="color-only")
        after = render(mutated, 12, 12, color_mode=False)
        assert np.array_equal(before.brightness(), after.brightness())
