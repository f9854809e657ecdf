"""Config parsing and CSV round-trip fidelity."""
import numpy as np
import pytest

from gpds.config import RunConfig, parse_config, parse_float_list, parse_grid_spec
from gpds.io_utils import fmt_float, read_csv, read_data_csv, write_csv


class TestConfigParsing:
    def test_missing_file_gives_defaults(self):
        cfg = parse_config(None)
        assert cfg.sampler == "latent-history"
        assert cfg.total_iters == 6000
        assert cfg.burn_in == 1000

    def test_parse_overrides(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "# comment\n"
            "sampler = exchange\n"
            "total_iters = 100\n"
            "burn_in = 10\n"
            "seed = 42\n"
            "crankshaft_eps = 0.25\n"
            "record_predictive = false\n"
            "\n"
        )
        cfg = parse_config(p)
        assert cfg.sampler == "exchange"
        assert cfg.total_iters == 100
        assert cfg.seed == 42
        assert cfg.crankshaft_eps == 0.25
        assert cfg.record_predictive is False

    def test_unknown_key_is_error(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("sampelr = exchange\n")
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config(p)

    def test_bad_value_is_error(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("total_iters = soon\n")
        with pytest.raises(ValueError, match="bad value"):
            parse_config(p)

    def test_hyphen_keys_accepted(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("hmc-steps = 5\n")
        assert parse_config(p).hmc_steps == 5

    def test_validation(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("total_iters = 10\nburn_in = 10\n")
        with pytest.raises(ValueError):
            parse_config(p)

    def test_hash_tracks_content(self):
        a, b = RunConfig(), RunConfig()
        assert a.hash() == b.hash()
        b.seed = 1
        assert a.hash() != b.hash()

    def test_parse_float_list(self):
        assert parse_float_list("0.5", 3, "x") == [0.5, 0.5, 0.5]
        assert parse_float_list("1, 2", 2, "x") == [1.0, 2.0]
        with pytest.raises(ValueError):
            parse_float_list("1, 2", 3, "x")

    def test_parse_grid_spec(self):
        assert parse_grid_spec("0:1:11") == [(0.0, 1.0, 11)]
        assert parse_grid_spec("-2:2:5; 0:1:3") == [(-2.0, 2.0, 5), (0.0, 1.0, 3)]
        with pytest.raises(ValueError):
            parse_grid_spec("0:1")
        with pytest.raises(ValueError):
            parse_grid_spec("1:0:5")


class TestCsvRoundTrip:
    def test_floats_survive_bit_exactly(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = np.column_stack([
            rng.standard_normal(50) * 10.0**rng.integers(-12, 12, 50),
            rng.standard_normal(50),
        ])
        rows[0, 0] = 0.1 + 0.2  # classic non-representable decimal
        rows[1, 0] = 1e-308
        rows[2, 0] = -1.7976931348623157e308
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b"], rows)
        names, back = read_csv(path)
        assert names == ["a", "b"]
        assert np.array_equal(back, rows)

    def test_fmt_float_17g(self):
        x = 0.1 + 0.2
        assert float(fmt_float(x)) == x

    def test_empty_table(self, tmp_path):
        path = tmp_path / "e.csv"
        write_csv(path, ["x1"], np.empty((0, 1)))
        names, back = read_csv(path)
        assert names == ["x1"]
        assert back.shape == (0, 1)

    def test_data_csv_header_enforced(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="expected header"):
            read_data_csv(path)
        path.write_text("x1,x2\n1,2\n")
        assert read_data_csv(path).shape == (1, 2)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("x1,x2\n1,2\n3\n")
        with pytest.raises(ValueError, match="expected 2 fields"):
            read_data_csv(path)
