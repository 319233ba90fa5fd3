import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wasabi_metric import InputError
from wasabi_metric.feature_table import (
    FeatureTable,
    RegionEntry,
    RegionMap,
    TableSchema,
    apply_region_map,
    default_region_map,
    filter_by_qc,
    load_table,
    load_table_with_report,
    normalize_by_icv,
    qc_iqr_threshold,
    write_table,
)


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _table(values, qc=None, icv=None, names=None, ids=None):
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    return FeatureTable(
        subject_ids=ids or [f"s{i}" for i in range(n)],
        feature_names=names or [f"f{j}" for j in range(d)],
        values=values,
        qc=qc,
        icv=icv,
    )


class TestLoad:
    def test_basic(self, tmp_path):
        p = _write(tmp_path, "subject,qc,icv,lh_hippocampus,rh_hippocampus\na,0.8,1500000,4000,4100\nb,0.75,1400000,3900,3950\n")
        t = load_table(p)
        assert t.n_subjects == 2
        assert t.feature_names == ("lh_hippocampus", "rh_hippocampus")
        assert t.subject_ids == ("a", "b")
        np.testing.assert_array_equal(t.qc, [0.8, 0.75])
        np.testing.assert_array_equal(t.icv, [1.5e6, 1.4e6])
        np.testing.assert_array_equal(t.values, [[4000, 4100], [3900, 3950]])
        assert not t.normalized

    def test_tab_delimited(self, tmp_path):
        p = _write(tmp_path, "subject\tqc\tx\na\t0.9\t1.5\n", "t.tsv")
        t = load_table(p)
        assert t.feature_names == ("x",)
        assert t.values[0, 0] == 1.5

    def test_duplicate_subject(self, tmp_path):
        p = _write(tmp_path, "subject,x\na,1\nb,2\na,3\n")
        with pytest.raises(InputError, match="'a'"):
            load_table(p)

    def test_duplicate_subject_not_droppable(self, tmp_path):
        p = _write(tmp_path, "subject,x\na,1\na,3\n")
        with pytest.raises(InputError, match="duplicate subject"):
            load_table(p, drop_invalid_rows=True)

    def test_nan_cell_names_row_and_column(self, tmp_path):
        p = _write(tmp_path, "subject,x,y\na,1,2\nb,NaN,3\n")
        with pytest.raises(InputError, match=r"line 3.*'b'.*'x'"):
            load_table(p)

    def test_negative_volume(self, tmp_path):
        p = _write(tmp_path, "subject,x\na,1\nb,-2\n")
        with pytest.raises(InputError, match="negative volume"):
            load_table(p)
        assert load_table(p, volumes=False).values[1, 0] == -2

    def test_drop_invalid_rows(self, tmp_path):
        p = _write(tmp_path, "subject,x,y\na,1,2\nb,oops,3\nc,4,-1\nd,5,6\n")
        t, dropped = load_table_with_report(p, drop_invalid_rows=True)
        assert t.subject_ids == ("a", "d")
        assert [d.subject_id for d in dropped] == ["b", "c"]
        assert [d.column for d in dropped] == ["x", "y"]

    def test_duplicate_header(self, tmp_path):
        p = _write(tmp_path, "subject,x,x\na,1,2\n")
        with pytest.raises(InputError, match="duplicate header"):
            load_table(p)

    def test_empty_header_name(self, tmp_path):
        p = _write(tmp_path, "subject,,x\na,1,2\n")
        with pytest.raises(InputError, match="empty header"):
            load_table(p)

    def test_schema_roles(self, tmp_path):
        p = _write(tmp_path, "id,score,tiv,a,b,junk\ns1,0.9,1000,1,2,9\n")
        schema = TableSchema.from_dict({"subject": "id", "qc": "score", "icv": "tiv", "exclude": ["junk"]})
        t = load_table(p, schema)
        assert t.feature_names == ("a", "b")
        assert t.qc[0] == 0.9 and t.icv[0] == 1000

    def test_schema_missing_role_column(self, tmp_path):
        p = _write(tmp_path, "subject,x\na,1\n")
        with pytest.raises(InputError, match="qc column 'qc_score'"):
            load_table(p, TableSchema(qc="qc_score"))

    def test_qc_out_of_range(self, tmp_path):
        p = _write(tmp_path, "subject,qc,x\na,1.2,1\n")
        with pytest.raises(InputError, match="invalid qc"):
            load_table(p)

    def test_write_round_trip(self, tmp_path):
        t = _table([[1.0 / 3, 2.0], [4.0, 5e-7]], qc=[0.8, 0.9], icv=[1.1e6, 1.3e6])
        write_table(t, tmp_path / "out.csv")
        back = load_table(tmp_path / "out.csv")
        np.testing.assert_array_equal(back.values, t.values)
        np.testing.assert_array_equal(back.qc, t.qc)
        np.testing.assert_array_equal(back.icv, t.icv)


def test_table_is_immutable():
    t = _table([[1.0, 2.0]])
    with pytest.raises(ValueError):
        t.values[0, 0] = 5.0


class TestRegionMap:
    def test_pair_mean(self):
        t = _table([[2.0, 4.0]], names=["lh_X", "rh_X"])
        out = apply_region_map(t, RegionMap([RegionEntry("X", ("lh_X", "rh_X"))]))
        assert out.feature_names == ("X",)
        assert out.values[0, 0] == 3.0

    def test_midline_pass_through(self):
        t = _table([[7.5, 1.0]], names=["brainstem", "other"])
        out = apply_region_map(t, RegionMap([RegionEntry("brainstem", ("brainstem",))]))
        assert out.values[0, 0] == 7.5

    def test_default_map_100_to_52(self):
        m = default_region_map()
        assert len(m.entries) == 52
        assert len(m.input_columns) == 100
        names = list(m.input_columns)
        rng = np.random.default_rng(0)
        t = _table(rng.uniform(100, 5000, (5, 100)), names=names)
        out = apply_region_map(t, m)
        assert out.n_features == 52
        assert out.feature_names == m.output_names

    def test_missing_column_named(self):
        t = _table([[1.0]], names=["lh_X"])
        with pytest.raises(InputError, match="rh_X"):
            apply_region_map(t, RegionMap([RegionEntry("X", ("lh_X", "rh_X"))]))

    def test_entry_arity(self):
        with pytest.raises(InputError):
            RegionEntry("X", ("a", "b", "c"))

    def test_input_used_once(self):
        with pytest.raises(InputError, match="duplicate region input"):
            RegionMap([RegionEntry("X", ("a", "b")), RegionEntry("Y", ("b",))])

    def test_json_round_trip(self, tmp_path):
        m = default_region_map()
        (tmp_path / "m.json").write_text(json.dumps(m.to_dict()))
        assert RegionMap.from_json(tmp_path / "m.json") == m

    def test_rejects_normalized(self):
        t = normalize_by_icv(_table([[1.0]], icv=[2.0], names=["a"]))
        with pytest.raises(InputError):
            apply_region_map(t, RegionMap([RegionEntry("a", ("a",))]))

    @given(st.permutations(range(6)), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_column_order_commutes(self, perm, seed):
        rng = np.random.default_rng(seed)
        names = ["lh_a", "rh_a", "lh_b", "rh_b", "mid", "extra"]
        t = _table(rng.uniform(0, 100, (4, 6)), names=names)
        m = RegionMap([RegionEntry("a", ("lh_a", "rh_a")), RegionEntry("b", ("lh_b", "rh_b")), RegionEntry("mid", ("mid",))])
        shuffled = t.select([names[i] for i in perm])
        np.testing.assert_array_equal(apply_region_map(t, m).values, apply_region_map(shuffled, m).values)


class TestNormalize:
    def test_division(self):
        out = normalize_by_icv(_table([[100.0]], icv=[1000.0]))
        assert out.values[0, 0] == 0.1
        assert out.normalized
        np.testing.assert_array_equal(out.icv, [1000.0])

    def test_zero_icv_names_subject(self):
        t = _table([[1.0], [2.0]], icv=[1.0, 0.0], ids=["ok", "bad"])
        with pytest.raises(InputError, match="'bad'"):
            normalize_by_icv(t)

    def test_twice(self):
        t = normalize_by_icv(_table([[1.0]], icv=[2.0]))
        with pytest.raises(InputError, match="already"):
            normalize_by_icv(t)

    def test_missing_icv(self):
        with pytest.raises(InputError):
            normalize_by_icv(_table([[1.0]]))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_ratios_and_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.uniform(1, 1e4, (5, 4))
        icv = rng.uniform(1e5, 2e6, 5)
        out = normalize_by_icv(_table(vals, icv=icv))
        np.testing.assert_allclose(out.values[:, 0] / out.values[:, 1], vals[:, 0] / vals[:, 1], rtol=1e-12)
        np.testing.assert_allclose(out.values * icv[:, None], vals, rtol=1e-12)


class TestQC:
    def test_iqr_hand_value(self):
        # Q1 at position 1 + 7*0.25 = 2.75 -> 2.75; Q3 at 6.25 -> 6.25; IQR 3.5
        assert qc_iqr_threshold([1, 2, 3, 4, 5, 6, 7, 8]) == pytest.approx(2.75 - 1.5 * 3.5, abs=1e-12)
        assert qc_iqr_threshold([8, 3, 1, 7, 2, 6, 5, 4]) == pytest.approx(-2.5, abs=1e-12)

    def test_iqr_constant(self):
        assert qc_iqr_threshold([0.8, 0.8, 0.8, 0.8]) == pytest.approx(0.8, abs=1e-15)

    def test_iqr_too_few(self):
        with pytest.raises(InputError):
            qc_iqr_threshold([0.1, 0.2, 0.3])

    def test_threshold_07_filters_strictly_below(self):
        # n=9: Q1 is the 3rd order statistic (0.76), Q3 the 7th (0.80)
        qc = [0.81, 0.60, 0.78, 0.69, 0.90, 0.76, 0.80, 0.79, 0.77]
        thr = qc_iqr_threshold(qc)
        assert thr == pytest.approx(0.76 - 1.5 * 0.04, abs=1e-12)
        t = _table(np.ones((9, 1)), qc=qc)
        kept, removed = filter_by_qc(t, thr)
        assert removed == ["s1", "s3"]
        assert all(q >= 0.7 for q in kept.qc)

    def test_filter_example(self):
        t = _table(np.ones((3, 1)), qc=[0.9, 0.69, 0.71])
        kept, removed = filter_by_qc(t, 0.7)
        assert kept.subject_ids == ("s0", "s2")
        assert removed == ["s1"]

    def test_filter_noop(self):
        t = _table(np.ones((3, 1)), qc=[0.9, 0.69, 0.71])
        kept, removed = filter_by_qc(t, 0.1)
        assert kept.subject_ids == t.subject_ids
        np.testing.assert_array_equal(kept.values, t.values)
        assert removed == []

    def test_boundary_kept(self):
        t = _table(np.ones((1, 1)), qc=[0.7])
        kept, removed = filter_by_qc(t, 0.7)
        assert len(kept) == 1 and removed == []

    def test_no_qc_column(self):
        with pytest.raises(InputError):
            filter_by_qc(_table(np.ones((2, 1))), 0.7)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_partition(self, qc, thr):
        t = _table(np.ones((len(qc), 1)), qc=qc)
        kept, removed = filter_by_qc(t, thr)
        assert set(kept.subject_ids) | set(removed) == set(t.subject_ids)
        assert not set(kept.subject_ids) & set(removed)
