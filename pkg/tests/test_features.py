import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import filtered, linear, passthrough, two_way
from streamcost.features import (
    DEFAULT_LAYOUT,
    FeatureError,
    FeatureSchema,
    Normalizer,
    featurize,
    fit_normalizer,
    raw_numeric,
    tuple_widths,
)
from streamcost.query import FILTER_FUNCTIONS, WindowParams
from streamcost.simulator import DataCharacteristics, SimConfig, simulate
from streamcost.workload import ParamSpace, generate_query, substream

SCHEMA = FeatureSchema()


def bounds(**extra):
    b = {
        "source.event_rate": (250.0, 2500.0), "source.n_int": (0.0, 5.0),
        "source.n_string": (0.0, 5.0), "source.n_double": (0.0, 5.0),
        "source.width_in": (1.0, 5.0), "source.width_out": (1.0, 5.0),
        "filter.selectivity": (1e-4, 1.0), "filter.width_in": (1.0, 5.0),
        "filter.width_out": (1.0, 5.0),
    }
    b.update(extra)
    return Normalizer(b)


def test_filter_vector_layout():
    q = filtered("<", 50).with_placements({1: "medium"})
    fg = featurize(q, DataCharacteristics({1: 0.4}), SCHEMA, bounds())
    v = fg.vectors[1]
    assert fg.kinds == ["source", "filter"]
    assert v[:7].tolist() == [1, 0, 0, 0, 0, 0, 0]
    assert v[7:10].tolist() == [1, 0, 0]
    assert v[10:13].tolist() == [0, 1, 0]
    sel = (math.log10(0.4) - math.log10(1e-4)) / (0 - math.log10(1e-4))
    assert v[13] == pytest.approx(sel)
    assert v[14:].tolist() == [0.0, 0.0]  # width 1 is the training minimum
    assert len(v) == SCHEMA.width("filter")


def test_max_rate_normalizes_to_one():
    q = passthrough(2500.0)
    fg = featurize(q, DataCharacteristics(), SCHEMA, bounds())
    assert fg.vectors[0][3] == 1.0
    assert featurize(passthrough(250.0), DataCharacteristics(), SCHEMA,
                     bounds()).vectors[0][3] == 0.0


def test_out_of_range_values_are_not_clamped():
    fg = featurize(passthrough(5000.0), DataCharacteristics(), SCHEMA, bounds())
    assert fg.vectors[0][3] > 1.0
    fg = featurize(passthrough(100.0), DataCharacteristics(), SCHEMA, bounds())
    assert fg.vectors[0][3] < 0.0


def test_tumbling_slide_is_zero():
    q = linear(WindowParams("tumbling", "count", 10))
    raw = raw_numeric(q, simulate(q, SimConfig(duration=3.0, warmup=1.0)).dcs)
    assert raw["window.count.slide"] == [0.0]
    assert raw["window.count.size"] == [10.0]


def test_fit_normalizer_on_rates_and_windows():
    space = ParamSpace()
    samples = []
    for i in range(60):
        q = generate_query("linear", space, substream(5, "norm", i))
        samples.append((q, simulate(q, SimConfig(duration=3.0, warmup=1.0)).dcs))
    norm = fit_normalizer(samples)
    assert norm.bounds["source.event_rate"] == (250.0, 2500.0)
    assert norm.bounds["window.time.size"] == (0.25, 3.0)


def test_constant_feature_is_rejected():
    q = passthrough(1000.0)
    with pytest.raises(FeatureError, match="constant"):
        fit_normalizer([(q, DataCharacteristics())] * 3)


def test_missing_normalizer_entry():
    with pytest.raises(FeatureError):
        featurize(passthrough(), DataCharacteristics(), SCHEMA, Normalizer({}))


def test_width_rules():
    q = two_way(widths=(3, 2))
    w = tuple_widths(q)
    join = q.graph.kind_ids("join")[0]
    assert w[join] == (2.5, 5.0)
    f = filtered()
    assert tuple_widths(f)[1] == (1.0, 1.0)


def test_aggregation_width_matches_logged_output():
    q = linear(WindowParams("tumbling", "count", 5), width=5, group_by=True)
    obs = simulate(q, SimConfig(duration=3.0, warmup=1.0))
    assert tuple_widths(q)[2] == (5.0, 2.0)
    assert obs.dcs.widths[2] == (5.0, 2.0)
    assert obs.dcs.widths[3][0] == 2.0  # the sink receives two attributes


def test_undefined_selectivity_encodes_as_one():
    q = filtered()
    a = featurize(q, DataCharacteristics({1: None}), SCHEMA, bounds())
    b = featurize(q, DataCharacteristics({1: 1.0}), SCHEMA, bounds())
    assert np.array_equal(a.vectors[1], b.vectors[1])


def test_missing_dcs_is_an_error():
    with pytest.raises(FeatureError):
        featurize(filtered(), DataCharacteristics(), SCHEMA, bounds())


def test_feature_graph_structure():
    q = two_way()
    obs = simulate(q, SimConfig(duration=3.0, warmup=1.0))
    cfg = SimConfig(duration=3.0, warmup=1.0)
    samples = [(q, obs.dcs)]
    for i in range(30):
        g = generate_query("two-way-join", ParamSpace(), substream(4, "graph", i))
        samples.append((g, simulate(g, cfg).dcs))
    fg = featurize(q, obs.dcs, SCHEMA, fit_normalizer(samples))
    assert "sink" not in fg.kinds and len(fg) == len(q.graph.nodes) - 1
    join = fg.kinds.index("join")
    assert [fg.kinds[c] for c in fg.children[join]] == ["window", "window"]
    assert fg.kinds[fg.root] == "aggregation"


def test_schema_round_trip_and_version_check():
    d = SCHEMA.to_dict()
    assert FeatureSchema.from_dict(d) == SCHEMA
    with pytest.raises(FeatureError):
        FeatureSchema.from_dict(dict(d, version="other"))
    norm = bounds()
    assert Normalizer.from_dict(norm.to_dict()) == norm


def test_one_hot_blocks_have_one_entry():
    cfg = SimConfig(duration=3.0, warmup=1.0)
    samples = []
    for i in range(30):
        q = generate_query("three-way-join", ParamSpace(), substream(4, "hot", i))
        samples.append((q, simulate(q, cfg).dcs))
    norm = fit_normalizer(samples)
    for q, dcs in samples[:5]:
        fg = featurize(q, dcs, SCHEMA, norm)
        for kind, vec in zip(fg.kinds, fg.vectors):
            pos = 0
            for enc in DEFAULT_LAYOUT[kind]:
                block = vec[pos:pos + enc.width]
                if not enc.numeric:
                    assert block.sum() == 1.0 and set(block.tolist()) <= {0.0, 1.0}
                pos += enc.width
            assert pos == len(vec)


@settings(max_examples=40, deadline=None)
@given(a=st.sampled_from(FILTER_FUNCTIONS), b=st.sampled_from(FILTER_FUNCTIONS),
       sa=st.floats(1e-4, 1.0), sb=st.floats(1e-4, 1.0),
       pa=st.sampled_from(["small", "medium", "large"]),
       pb=st.sampled_from(["small", "medium", "large"]))
def test_distinct_filters_encode_distinctly(a, b, sa, sb, pa, pb):
    """Featurization is injective over the properties a filter node encodes."""
    qa = filtered(a).with_placements({1: pa})
    qb = filtered(b).with_placements({1: pb})
    va = featurize(qa, DataCharacteristics({1: sa}), SCHEMA, bounds()).vectors[1]
    vb = featurize(qb, DataCharacteristics({1: sb}), SCHEMA, bounds()).vectors[1]
    same = (a, sa, pa) == (b, sb, pb)
    assert np.array_equal(va, vb) == same
    hot = va[:7]
    assert hot.sum() == 1.0 and hot[FILTER_FUNCTIONS.index(a)] == 1.0
