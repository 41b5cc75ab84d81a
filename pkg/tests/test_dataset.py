import numpy as np
import pytest

from fraudfusion.dataset import (
    SCENARIOS,
    Column,
    FeatureGroup,
    FeatureSchema,
    Scenario,
    encode,
    from_arrays,
    ingest_csv,
    select_scenario,
    time_split,
    write_csv,
)
from fraudfusion.errors import ConfigError, DataError, SchemaError
from fraudfusion.synthgen import SynthSpec, generate, paper_schema

G = FeatureGroup


@pytest.fixture
def tiny_schema():
    return FeatureSchema((
        Column("tenure", G.SUPER_APP),
        Column("line_type", G.MOBILE, ("prepaid", "postpaid")),
        Column("score", G.BUREAU),
    ))


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_ingest_counts_and_fraud_rate(tmp_path, tiny_schema):
    p = write(tmp_path, "application_order,tenure,line_type,score,is_fraud\n"
                        "1,3.5,prepaid,700,0\n2,1.0,postpaid,650,1\n3,2.0,prepaid,600,0\n4,0.5,,710,0\n")
    d = ingest_csv(p, tiny_schema)
    assert d.n_rows == 4
    assert d.fraud_rate == 0.25
    assert not d.encoded
    assert d.X[3, 1] is None  # empty categorical cell


def test_ingest_missing_column_names_it(tmp_path, tiny_schema):
    p = write(tmp_path, "application_order,line_type,score,is_fraud\n1,prepaid,700,0\n")
    with pytest.raises(SchemaError, match="tenure"):
        ingest_csv(p, tiny_schema)


def test_ingest_sorts_by_order(tmp_path, tiny_schema):
    p = write(tmp_path, "application_order,tenure,line_type,score,is_fraud\n"
                        "30,3.0,prepaid,1,0\n10,1.0,prepaid,1,1\n20,2.0,postpaid,,0\n")
    d = ingest_csv(p, tiny_schema)
    assert list(d.order) == [10, 20, 30]
    assert list(d.X[:, 0]) == [1.0, 2.0, 3.0]
    assert list(d.y) == [1, 0, 0]
    assert np.isnan(d.X[1, 2])


def test_ingest_rejects_non_binary_label_with_row(tmp_path, tiny_schema):
    p = write(tmp_path, "application_order,tenure,line_type,score,is_fraud\n1,1,prepaid,1,0\n2,1,prepaid,1,2\n")
    with pytest.raises(DataError, match="row 3"):
        ingest_csv(p, tiny_schema)


def test_ingest_rejects_unparseable_numeric(tmp_path, tiny_schema):
    p = write(tmp_path, "application_order,tenure,line_type,score,is_fraud\n1,abc,prepaid,1,0\n")
    with pytest.raises(DataError, match=r"row 2, column 'tenure'"):
        ingest_csv(p, tiny_schema)


def test_ingest_order_ties_renumbered_in_file_order(tmp_path, tiny_schema, caplog):
    p = write(tmp_path, "application_order,tenure,line_type,score,is_fraud\n"
                        "5,1,prepaid,1,0\n5,2,prepaid,1,0\n1,3,prepaid,1,1\n")
    d = ingest_csv(p, tiny_schema)
    assert list(d.X[:, 0]) == [3.0, 1.0, 2.0]
    assert (np.diff(d.order) > 0).all()
    assert "duplicate" in caplog.text


def test_encode_widths(tiny_schema):
    raw = from_arrays(
        FeatureSchema((Column("x", G.BUREAU), Column("z", G.BUREAU), Column("k", G.MOBILE, ("a", "b", "c")))),
        np.array([[1.0, 2.0, "a"], [3.0, 4.0, "c"]], dtype=object),
        [0, 1],
    )
    enc = encode(raw)
    assert enc.n_features == 5
    np.testing.assert_array_equal(enc.X, [[1, 2, 1, 0, 0], [3, 4, 0, 0, 1]])
    assert enc.feature_names == ["x", "z", "k=a", "k=b", "k=c"]
    assert enc.groups[2:] == [G.MOBILE] * 3


def test_encode_all_numeric_is_identity(numeric_schema):
    X = np.random.default_rng(0).normal(size=(6, 3))
    raw = from_arrays(numeric_schema, X.astype(object), [0, 1, 0, 1, 0, 0], encoded=False)
    enc = encode(raw)
    np.testing.assert_array_equal(enc.X, X)
    np.testing.assert_array_equal(enc.y, raw.y)


def test_paper_schema_expands_23_to_48():
    s = paper_schema()
    assert len(s.columns) == 23
    assert s.raw_counts() == {G.SUPER_APP: 8, G.MOBILE: 6, G.BUREAU: 9}
    assert len(s.encoded_columns()) == 48


def test_encode_unseen_category(tiny_schema):
    raw = from_arrays(tiny_schema, np.array([[1.0, "satellite", 2.0]], dtype=object), [0])
    with pytest.raises(DataError, match="satellite"):
        encode(raw)


def test_encode_missing_categorical_is_nan(tiny_schema):
    raw = from_arrays(tiny_schema, np.array([[1.0, None, 2.0]], dtype=object), [0])
    enc = encode(raw)
    assert np.isnan(enc.X[0, 1:3]).all()


def test_time_split_sizes_and_order(numeric_schema):
    d = from_arrays(numeric_schema, np.zeros((10, 3)), [0] * 10)
    tr, te = time_split(d, train_fraction=0.6)
    assert (tr.n_rows, te.n_rows) == (6, 4)
    assert tr.order.max() < te.order.min()


def test_time_split_reference_counts():
    schema = FeatureSchema((Column("x", G.BUREAU),))
    d = from_arrays(schema, np.zeros((86_726, 1)), np.zeros(86_726))
    assert tuple(x.n_rows for x in time_split(d, train_size=60_708)) == (60_708, 26_018)
    assert tuple(x.n_rows for x in time_split(d, train_fraction=0.7)) == (60_708, 26_018)


def test_time_split_empty_side(numeric_schema):
    d = from_arrays(numeric_schema, np.zeros((1, 3)), [0])
    with pytest.raises(ConfigError):
        time_split(d, train_fraction=0.6)


def test_time_split_is_partition(numeric_dataset):
    tr, te = time_split(numeric_dataset, train_fraction=0.37)
    joined = np.concatenate([tr.order, te.order])
    np.testing.assert_array_equal(joined, numeric_dataset.order)
    np.testing.assert_array_equal(np.vstack([tr.X, te.X]), numeric_dataset.X)


def test_scenarios_match_input_table():
    assert list(SCENARIOS) == ["C", "S", "M", "S+M", "S+C", "S+M+C"]
    assert SCENARIOS["S+M"].groups == {G.SUPER_APP, G.MOBILE}
    assert SCENARIOS["C"].groups == {G.BUREAU}
    assert Scenario.parse("s+m+c") is SCENARIOS["S+M+C"]
    with pytest.raises(ConfigError):
        Scenario.parse("X")


def test_select_scenario_raw_counts():
    raw = generate(SynthSpec(50, 30, 0.2, 0.2, {"SuperApp": 0, "Mobile": 0, "Bureau": 0}, 1))
    assert select_scenario(raw, "C").n_features == 9
    assert select_scenario(raw, "S+M").n_features == 14
    full = select_scenario(raw, "S+M+C")
    parts = set()
    for sid in ("S", "M", "C"):
        parts |= set(select_scenario(raw, sid).feature_names)
    assert set(full.feature_names) == parts
    assert full.feature_names == raw.feature_names


def test_select_scenario_properties(small_synth):
    _, enc = small_synth
    counts = {sid: select_scenario(enc, sid).n_features for sid in SCENARIOS}
    assert counts["S+M"] == counts["S"] + counts["M"]
    assert counts["S+C"] == counts["S"] + counts["C"]
    assert counts["S+M+C"] == 48
    v = select_scenario(enc, "S+C")
    again = select_scenario(v, "S+C")
    np.testing.assert_array_equal(v.X, again.X)
    assert v.schema_fingerprint == again.schema_fingerprint
    np.testing.assert_array_equal(v.y, enc.y)
    # fused view is the ordered concatenation of its parts' columns
    s, c = select_scenario(enc, "S"), select_scenario(enc, "C")
    np.testing.assert_array_equal(v.X, np.hstack([s.X, c.X]))


def test_select_scenario_zero_columns(numeric_schema):
    schema = FeatureSchema((Column("a", G.SUPER_APP),))
    d = from_arrays(schema, np.zeros((3, 1)), [0, 1, 0])
    with pytest.raises(ConfigError, match="zero columns"):
        select_scenario(d, "M")


def test_encode_preserves_rows_and_labels(small_synth):
    spec, enc = small_synth
    assert enc.n_rows == spec.n_rows
    np.testing.assert_array_equal(enc.y, generate(spec).y)


def test_csv_round_trip(tmp_path):
    spec = SynthSpec(300, 200, 0.2, 0.1, {"SuperApp": 0.3, "Mobile": 0.2, "Bureau": 0.1}, 9, missing_rate=0.1)
    raw = generate(spec)
    p = tmp_path / "x.csv"
    write_csv(raw, p)
    back = ingest_csv(p, spec.schema)
    np.testing.assert_array_equal(back.y, raw.y)
    np.testing.assert_array_equal(back.order, raw.order)
    np.testing.assert_array_equal(encode(back).X, encode(raw).X)


def test_schema_yaml_round_trip(tmp_path):
    s = paper_schema()
    s.save(tmp_path / "s.yaml")
    assert FeatureSchema.load(tmp_path / "s.yaml") == s


def test_schema_rejects_duplicates():
    with pytest.raises(SchemaError):
        FeatureSchema((Column("a", G.BUREAU), Column("a", G.MOBILE)))


def test_dataset_is_immutable(numeric_dataset):
    with pytest.raises(ValueError):
        numeric_dataset.X[0, 0] = 1.0
