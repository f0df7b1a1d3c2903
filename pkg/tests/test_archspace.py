import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epenas.archspace import (
    EDGES,
    NUM_OPS,
    OPS,
    SPACE_SIZE,
    ArchParseError,
    CellSpec,
    decode,
    encode,
    enumerate_all,
    index_of,
    random_sample,
)

ALL_SKIP = "|skip_connect~0|+|skip_connect~0|skip_connect~1|+|skip_connect~0|skip_connect~1|skip_connect~2|"

genes = st.lists(st.integers(0, NUM_OPS - 1), min_size=6, max_size=6).map(tuple)


def test_encode_all_skip():
    assert encode(CellSpec((1,) * 6)) == ALL_SKIP
    assert decode(ALL_SKIP) == CellSpec((1,) * 6)


def test_encode_all_none():
    text = encode(CellSpec((0,) * 6))
    assert text.count("none~") == 6
    assert decode(text).genes == (0,) * 6


def test_gene_order_matches_edges():
    spec = CellSpec((0, 1, 2, 3, 4, 0))
    text = encode(spec)
    assert text == "|none~0|+|skip_connect~0|nor_conv_1x1~1|+|nor_conv_3x3~0|avg_pool_3x3~1|none~2|"
    assert [spec.op(i) for i in range(6)] == [OPS[g] for g in spec.genes]
    assert EDGES == ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))


def test_space_is_complete_and_round_trips():
    specs = list(enumerate_all())
    assert len(specs) == SPACE_SIZE == 15625
    assert len(set(specs)) == 15625
    assert specs[0].genes == (0,) * 6
    assert specs == sorted(specs)
    for i, spec in enumerate(specs):
        assert decode(encode(spec)) == spec
        assert index_of(spec) == i
    assert len({encode(s) for s in specs}) == 15625


@pytest.mark.parametrize(
    "text,fragment",
    [
        (ALL_SKIP.replace("skip_connect~1", "conv_5x5~1", 1), "edge (2,1)"),
        (ALL_SKIP.replace("skip_connect~2", "skip_connect~1"), "edge (3,2)"),
        ("|none~0|+|none~0|none~1|", "3 node groups"),
        ("|none~0|+|none~0|+|none~0|none~1|none~2|", "node 2"),
        ("none~0|+|none~0|none~1|+|none~0|none~1|none~2|", "node 1"),
        ("|none0|+|none~0|none~1|+|none~0|none~1|none~2|", "edge (1,0)"),
        ("", "3 node groups"),
    ],
)
def test_decode_errors_name_location(text, fragment):
    with pytest.raises(ArchParseError, match=fragment.replace("(", r"\(").replace(")", r"\)")):
        decode(text)


def test_invalid_genes_rejected():
    with pytest.raises(ValueError):
        CellSpec((0,) * 5)
    with pytest.raises(ValueError, match=r"\(3,2\)"):
        CellSpec((0, 0, 0, 0, 0, 5))


@given(genes)
def test_json_round_trip(g):
    spec = CellSpec(g)
    assert CellSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec
    assert str(spec) == encode(spec)


def test_random_sample_deterministic():
    assert random_sample(50, seed=3) == random_sample(50, seed=3)
    assert random_sample(50, seed=3) != random_sample(50, seed=4)
    (one,) = random_sample(1, seed=0)
    assert decode(encode(one)) == one
    with pytest.raises(ValueError):
        random_sample(0, seed=0)


def test_random_sample_is_uniform():
    n = SPACE_SIZE * 100
    g = np.array([s.genes for s in random_sample(n, seed=12345)])
    expected = n / NUM_OPS
    for edge in range(6):
        counts = np.bincount(g[:, edge], minlength=NUM_OPS)
        assert np.all(np.abs(counts - expected) <= 0.05 * expected)
