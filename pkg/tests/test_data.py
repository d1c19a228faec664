"""Dataset loading, schema handling, imputation, and round-trip output."""

import numpy as np
import pytest

from glassforest import (DataError, Dataset, SchemaConfig, impute_median,
                         load_csv, parse_schema_file, summarize, write_csv)
from glassforest.data import format_value


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def small_dataset(x, w=None, y=None):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    w = np.asarray(w, dtype=np.float64) if w is not None else np.zeros(n)
    y = np.asarray(y, dtype=np.float64) if y is not None else np.zeros(n)
    mask = ~np.isfinite(x)
    names = [f"x{j + 1}" for j in range(x.shape[1])]
    return Dataset(x=x, w=w, y=y, feature_names=names, missing_mask=mask)


class TestLoadCsv:
    """CSV parsing against a schema."""

    def test_basic_parse(self, tmp_path):
        """Three rows with explicit roles land in the right arrays."""
        path = tmp_path / "d.csv"
        write_lines(path, ["a,b,w,y", "1,2,0,10", "3,4,1,20", "5,6,0,30"])
        d = load_csv(str(path), SchemaConfig("w", "y"))
        assert d.feature_names == ["a", "b"]
        assert np.array_equal(d.x, [[1, 2], [3, 4], [5, 6]])
        assert np.array_equal(d.w, [0, 1, 0])
        assert np.array_equal(d.y, [10, 20, 30])
        assert not d.missing_mask.any()

    def test_row_order_preserved(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y", "9,0,1", "7,1,2", "8,0,3"])
        d = load_csv(str(path), SchemaConfig("w", "y"))
        assert np.array_equal(d.x[:, 0], [9, 7, 8])

    def test_missing_cell_masked_as_nan(self, tmp_path):
        """An empty feature cell becomes NaN with the mask bit set."""
        path = tmp_path / "d.csv"
        write_lines(path, ["a,b,w,y", "1,2,0,1", "3,,1,2", "5,6,0,3"])
        d = load_csv(str(path), SchemaConfig("w", "y"))
        assert d.missing_mask[1, 1]
        assert np.isnan(d.x[1, 1])
        assert d.missing_mask.sum() == 1

    def test_custom_missing_token(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y", "NA,0,1", "2,1,2"])
        d = load_csv(str(path), SchemaConfig("w", "y", missing_token="NA"))
        assert d.missing_mask[0, 0]

    def test_schema_column_absent(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y", "1,0,1"])
        with pytest.raises(DataError, match="'treated'"):
            load_csv(str(path), SchemaConfig("treated", "y"))

    def test_duplicate_header(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,a,w,y", "1,2,0,1"])
        with pytest.raises(DataError, match="duplicate column names"):
            load_csv(str(path), SchemaConfig("w", "y"))

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y", "1,0,1", "2,1"])
        with pytest.raises(DataError, match="row 3"):
            load_csv(str(path), SchemaConfig("w", "y"))

    def test_unparseable_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y", "1,0,1", "oops,1,2"])
        with pytest.raises(DataError, match=r"row 3.*'a'"):
            load_csv(str(path), SchemaConfig("w", "y"))

    def test_missing_treatment_cell_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y", "1,,1"])
        with pytest.raises(DataError, match="treatment value is missing"):
            load_csv(str(path), SchemaConfig("w", "y"))

    def test_no_data_rows(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y"])
        with pytest.raises(DataError, match="no data rows"):
            load_csv(str(path), SchemaConfig("w", "y"))

    def test_excluded_column_dropped(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,id,w,y", "1,99,0,1", "2,98,1,2"])
        d = load_csv(str(path), SchemaConfig("w", "y", excluded_columns=["id"]))
        assert d.feature_names == ["a"]

    def test_nuisance_feature_indices_resolved(self, tmp_path):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,b,w,y", "1,2,0,1", "3,4,1,2"])
        schema = SchemaConfig("w", "y", nuisance_feature_columns=["b"])
        d = load_csv(str(path), schema)
        assert np.array_equal(d.nuisance_feature_idx, [1])

    @pytest.mark.parametrize("w_col,expected", [
        (["0", "1", "1"], True),
        (["0", "0.5", "1"], False),
    ])
    def test_binary_treatment_detection(self, tmp_path, w_col, expected):
        path = tmp_path / "d.csv"
        write_lines(path, ["a,w,y"] + [f"{i},{w},{i}" for i, w in enumerate(w_col)])
        d = load_csv(str(path), SchemaConfig("w", "y"))
        assert d.treatment_is_binary is expected


class TestSchemaFile:
    """Plain-text schema parsing."""

    def test_parse_all_keys(self, tmp_path):
        path = tmp_path / "schema.txt"
        write_lines(path, [
            "# roles",
            "treatment = w",
            "outcome = y",
            "features = a, b",
            "nuisance_features = a",
            "exclude = id",
            "missing_token = NA",
        ])
        s = parse_schema_file(str(path))
        assert s.treatment_column == "w"
        assert s.outcome_column == "y"
        assert s.feature_columns == ["a", "b"]
        assert s.nuisance_feature_columns == ["a"]
        assert s.excluded_columns == ["id"]
        assert s.missing_token == "NA"

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "schema.txt"
        write_lines(path, ["treatment = w", "outcome = y", "wat = 1"])
        with pytest.raises(DataError, match="unknown schema key"):
            parse_schema_file(str(path))

    def test_roles_required(self, tmp_path):
        path = tmp_path / "schema.txt"
        write_lines(path, ["treatment = w"])
        with pytest.raises(DataError, match="must set treatment and outcome"):
            parse_schema_file(str(path))

    def test_role_column_cannot_be_feature(self):
        with pytest.raises(DataError, match="cannot be both"):
            SchemaConfig("w", "y", feature_columns=["w"])

    def test_same_treatment_and_outcome_rejected(self):
        with pytest.raises(DataError, match="must differ"):
            SchemaConfig("y", "y")


class TestImputeMedian:
    """Median imputation of masked feature cells."""

    def test_even_count_case(self):
        """[1, 2, missing, 4] imputes the even-count median 2 exactly."""
        d = small_dataset([[1], [2], [np.nan], [4]])
        out = impute_median(d)
        assert out.x[2, 0] == 2.0
        assert np.array_equal(out.x[:, 0], [1, 2, 2, 4])

    def test_odd_count_case(self):
        """[1, missing, 3, 7] imputes the middle observed value 3."""
        d = small_dataset([[1], [np.nan], [3], [7]])
        out = impute_median(d)
        assert out.x[1, 0] == 3.0

    def test_observed_cells_untouched(self):
        d = small_dataset([[1, 10], [np.nan, 20], [3, 30]])
        out = impute_median(d)
        assert np.array_equal(out.x[:, 1], d.x[:, 1])
        assert np.array_equal(out.x[[0, 2], 0], [1, 3])

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(40, 3))
        x[rng.random((40, 3)) < 0.2] = np.nan
        d = small_dataset(x)
        once = impute_median(d)
        twice = impute_median(once)
        assert np.array_equal(once.x, twice.x)
        assert np.array_equal(once.missing_mask, twice.missing_mask)

    def test_mask_survives(self):
        d = small_dataset([[1], [np.nan], [3]])
        out = impute_median(d)
        assert out.missing_mask[1, 0]
        assert np.isfinite(out.x).all()

    def test_all_missing_column_rejected(self):
        d = small_dataset([[np.nan, 1], [np.nan, 2]])
        with pytest.raises(DataError, match="no observed values"):
            impute_median(d)


class TestWriteCsv:
    """Round-trip output."""

    def test_value_exact_round_trip(self, tmp_path):
        """Written decimals parse back to the identical floats."""
        rng = np.random.default_rng(9)
        x = rng.normal(size=(25, 3)) * np.array([1e-7, 1.0, 1e9])
        x[3, 1] = 1 / 3
        x[4, 2] = np.pi
        d = small_dataset(x, w=rng.integers(0, 2, 25), y=rng.normal(size=25))
        path = tmp_path / "out.csv"
        write_csv(d, str(path))
        back = load_csv(str(path), SchemaConfig("w", "y"))
        assert np.array_equal(back.x, d.x)
        assert np.array_equal(back.w, d.w)
        assert np.array_equal(back.y, d.y)

    def test_missing_cells_reemit_token(self, tmp_path):
        d = small_dataset([[1], [np.nan], [3]], w=[0, 1, 0], y=[1, 2, 3])
        path = tmp_path / "out.csv"
        write_csv(d, str(path), missing_token="NA")
        text = path.read_text(encoding="utf-8")
        assert "NA" in text
        back = load_csv(str(path), SchemaConfig("w", "y", missing_token="NA"))
        assert back.missing_mask[1, 0]

    def test_column_order_features_then_roles(self, tmp_path):
        d = small_dataset([[1, 2]], w=[0], y=[5])
        path = tmp_path / "out.csv"
        write_csv(d, str(path))
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == "x1,x2,w,y"

    def test_format_value_shortest_exact(self):
        for v in [0.1, 1 / 3, 1e-17, 123456789.123456789, -2.5]:
            assert float(format_value(v)) == v


class TestSummarize:
    def test_counts_and_missing_fraction(self):
        x = np.array([[1.0], [np.nan], [3.0], [np.nan], [5.0],
                      [6.0], [7.0], [8.0], [9.0], [10.0]])
        d = small_dataset(x, w=np.zeros(10), y=np.arange(10.0))
        s = summarize(d)
        col = s.columns[0]
        assert col.role == "feature"
        assert col.missing_fraction == pytest.approx(0.2)
        assert s.n == 10

    def test_treatment_flag(self):
        d = small_dataset([[1.0], [2.0]], w=[0, 1], y=[0, 0])
        assert summarize(d).treatment_is_binary
        d2 = small_dataset([[1.0], [2.0]], w=[0.2, 0.9], y=[0, 0])
        assert not summarize(d2).treatment_is_binary
