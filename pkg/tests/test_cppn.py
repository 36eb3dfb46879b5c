import colorsys
import math
from random import Random

import numpy as np
import pytest

from picbreeder.cppn import (
    BIAS_ID,
    BRIGHTNESS_ID,
    COLOR,
    HUE_ID,
    SATURATION_ID,
    STRUCTURE,
    X_ID,
    ConnectionGene,
    Genome,
    NodeGene,
    StructureError,
    eval_cppn,
    genome_hash,
    init_genome,
    parse_genome,
    render,
    serialize_genome,
    to_rgb,
    validate_genome,
)


def zero_weight_genome():
    g = init_genome(Random(0))
    conns = tuple(
        ConnectionGene(c.innovation, c.src, c.dst, 0.0, c.enabled, c.subnet)
        for c in g.connections
    )
    return Genome(g.nodes, conns)


def test_init_genome_deterministic():
    a = init_genome(Random(7))
    b = init_genome(Random(7))
    assert a == b
    assert serialize_genome(a) == serialize_genome(b)


def test_init_genome_topology():
    g = init_genome(Random(3))
    assert len(g.connections) == 6
    assert len(g.nodes) == 7
    assert not g.hidden_nodes()
    color_edges = {(c.src, c.dst) for c in g.connections if c.subnet == COLOR}
    assert color_edges == {(BRIGHTNESS_ID, HUE_ID), (BRIGHTNESS_ID, SATURATION_ID)}
    validate_genome(g)


def test_eval_zero_weights_gives_sigmoid_midpoint():
    g = zero_weight_genome()
    for x, y, r in [(0, 0, 0), (1, -1, math.sqrt(2)), (0.3, 0.7, 0.76)]:
        b, h, s = eval_cppn(g, x, y, r)
        assert b == 0.5
        assert h == 0.0
        assert s == 0.0


def test_eval_single_hidden_sine_path_matches_hand_computation():
    # x --w1--> hidden(sine) --w2--> brightness, everything else zeroed.
    w1, w2 = 0.8, -1.3
    base = zero_weight_genome()
    hidden = NodeGene(10, "hidden", "sine", STRUCTURE)
    conns = base.connections + (
        ConnectionGene(10, X_ID, 10, w1, True, STRUCTURE),
        ConnectionGene(11, 10, BRIGHTNESS_ID, w2, True, STRUCTURE),
    )
    g = Genome(base.nodes + (hidden,), conns)
    validate_genome(g)
    for x in (-1.0, -0.25, 0.0, 0.4, 1.0):
        expected = 1.0 / (1.0 + math.exp(-(w2 * math.sin(w1 * x))))
        b, _, _ = eval_cppn(g, x, 0.0, abs(x))
        assert b == pytest.approx(expected, abs=1e-12)


def test_eval_cycle_raises_structure_error():
    base = zero_weight_genome()
    h1 = NodeGene(10, "hidden", "identity", STRUCTURE)
    h2 = NodeGene(11, "hidden", "identity", STRUCTURE)
    conns = base.connections + (
        ConnectionGene(10, 10, 11, 1.0, True, STRUCTURE),
        ConnectionGene(11, 11, 10, 1.0, True, STRUCTURE),
    )
    g = Genome(base.nodes + (h1, h2), conns)
    with pytest.raises(StructureError):
        eval_cppn(g, 0.0, 0.0, 0.0)


def test_render_zero_weights_grayscale():
    g = zero_weight_genome()
    buf = render(g, 128, 128, color_mode=False)
    assert buf.hsb.shape == (128, 128, 3)
    assert np.all(buf.hsb[:, :, 0] == 0.0)
    assert np.all(buf.hsb[:, :, 1] == 0.0)
    assert np.all(buf.hsb[:, :, 2] == 0.5)


def hue_bias_genome(bias_to_hue, bias_to_sat):
    """Constant h_raw/s_raw via direct bias->hue and bias->saturation edges."""
    base = zero_weight_genome()
    conns = base.connections + (
        ConnectionGene(10, BIAS_ID, HUE_ID, bias_to_hue, True, COLOR),
        ConnectionGene(11, BIAS_ID, SATURATION_ID, bias_to_sat, True, COLOR),
    )
    return Genome(base.nodes, conns)


@pytest.mark.parametrize("h_raw,expected", [(1.25, 0.25), (-0.25, 0.75), (1.0, 0.0)])
def test_render_hue_wraps(h_raw, expected):
    g = hue_bias_genome(h_raw, 0.0)
    buf = render(g, 4, 4, color_mode=True)
    assert np.allclose(buf.hsb[:, :, 0], expected)


@pytest.mark.parametrize("s_raw,expected", [(-0.3, 0.0), (2.0, 1.0), (0.4, 0.4)])
def test_render_saturation_clamps(s_raw, expected):
    g = hue_bias_genome(0.0, s_raw)
    buf = render(g, 4, 4, color_mode=True)
    assert np.allclose(buf.hsb[:, :, 1], expected)


def test_render_deterministic_and_grayscale_independent():
    rng = Random(11)
    for _ in range(5):
        g = init_genome(rng)
        color = render(g, 32, 32, color_mode=True)
        again = render(g, 32, 32, color_mode=True)
        gray = render(g, 32, 32, color_mode=False)
        assert np.array_equal(color.hsb, again.hsb)
        assert np.array_equal(color.brightness(), gray.brightness())


def test_render_components_in_range():
    rng = Random(5)
    for _ in range(10):
        g = init_genome(rng)
        buf = render(g, 16, 16, color_mode=True)
        assert np.all(buf.hsb >= 0.0) and np.all(buf.hsb <= 1.0)
        assert np.all(buf.hsb[:, :, 0] < 1.0)  # hue half-open


def test_color_weight_changes_leave_brightness_bit_identical():
    rng = Random(23)
    for _ in range(20):
        g = init_genome(rng)
        before = render(g, 16, 16, color_mode=True)
        conns = tuple(
            ConnectionGene(c.innovation, c.src, c.dst,
                           c.weight + rng.uniform(-2, 2) if c.subnet == COLOR else c.weight,
                           c.enabled, c.subnet)
            for c in g.connections
        )
        after = render(Genome(g.nodes, conns), 16, 16, color_mode=True)
        assert np.array_equal(before.brightness(), after.brightness())


def test_to_rgb_known_points():
    hsb = np.zeros((1, 2, 3))
    hsb[0, 0] = (0.0, 0.0, 0.5)   # mid gray
    hsb[0, 1] = (0.0, 1.0, 1.0)   # pure red
    from picbreeder.cppn import ImageBuffer
    rgb = to_rgb(ImageBuffer(2, 1, hsb))
    assert tuple(rgb[0, 0]) == (128, 128, 128)
    assert tuple(rgb[0, 1]) == (255, 0, 0)


def test_to_rgb_matches_colorsys_reference():
    rng = Random(99)
    from picbreeder.cppn import ImageBuffer
    hsb = np.array(
        [[[rng.random(), rng.random(), rng.random()] for _ in range(16)]
         for _ in range(16)]
    )
    rgb = to_rgb(ImageBuffer(16, 16, hsb))
    for i in range(16):
        for j in range(16):
            h, s, v = hsb[i, j]
            ref = colorsys.hsv_to_rgb(h, s, v)
            for got, want in zip(rgb[i, j], ref):
                assert abs(int(got) - round(want * 255)) <= 1


def test_serialize_round_trip_and_hash():
    g = init_genome(Random(42))
    text = serialize_genome(g)
    assert parse_genome(text) == g
    assert genome_hash(g) == genome_hash(parse_genome(text))
    other = init_genome(Random(43))
    assert genome_hash(g) != genome_hash(other)


def test_png_bytes_round_trip():
    import io

    from PIL import Image

    from picbreeder.cppn import to_png_bytes

    g = init_genome(Random(1))
    buf = render(g, 16, 16, color_mode=True)
    data = to_png_bytes(buf)
    img = Image.open(io.BytesIO(data))
    assert img.size == (16, 16)
    assert np.array_equal(np.asarray(img), to_rgb(buf))
