import numpy as np
import pytest

from parhawkes import HawkesParams, TrainConfig, fit, validate_sequence
from parhawkes.fileio import (
    FileFormatError,
    read_events,
    read_params,
    write_events,
    write_fit_report,
    write_params,
)
from conftest import random_instance


@pytest.fixture
def sample_seq(rng):
    times = np.sort(rng.uniform(0, 100, 500))
    times[7] = np.pi * 13.7  # exercise full-precision round-tripping
    times = np.sort(times)
    marks = rng.integers(0, 5, 500)
    return validate_sequence(times, marks, 101.5, 5)


class TestEventsRoundTrip:
    def test_lossless(self, tmp_path, sample_seq):
        path = tmp_path / "events.csv"
        write_events(path, sample_seq)
        back = read_events(path)
        assert back.equals(sample_seq)

    def test_horizon_comment(self, tmp_path, sample_seq):
        path = tmp_path / "events.csv"
        write_events(path, sample_seq)
        first = path.read_text().splitlines()[0]
        assert first.startswith("# T=")
        assert read_events(path).horizon == 101.5

    def test_horizon_argument_overrides(self, tmp_path, sample_seq):
        path = tmp_path / "events.csv"
        write_events(path, sample_seq)
        assert read_events(path, horizon=200.0).horizon == 200.0

    def test_horizon_defaults_to_last_time(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("time,mark\n1.0,0\n2.5,0\n")
        assert read_events(path).horizon == 2.5

    def test_num_nodes_inferred(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("time,mark\n1.0,0\n2.0,3\n")
        assert read_events(path).num_nodes == 4

    def test_unsorted_rows_named_line(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("# T=10\ntime,mark\n1.0,0\n3.0,0\n2.0,0\n")
        with pytest.raises(FileFormatError, match=r"events\.csv:5"):
            read_events(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("when,who\n1.0,0\n")
        with pytest.raises(FileFormatError, match="header"):
            read_events(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileFormatError, match="no such file"):
            read_events(tmp_path / "nope.csv")

    def test_malformed_rows(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("time,mark\n1.0,zero\n")
        with pytest.raises(FileFormatError, match="malformed"):
            read_events(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("")
        with pytest.raises(FileFormatError, match="empty"):
            read_events(path)


class TestEventCache:
    def test_cache_round_trip(self, tmp_path, sample_seq):
        path = tmp_path / "events.csv"
        write_events(path, sample_seq)
        first = read_events(path, use_cache=True)
        assert (tmp_path / "events.csv.cache.npz").exists()
        second = read_events(path, use_cache=True)
        assert second.equals(first)

    def test_cache_invalidated_by_source_change(self, tmp_path, sample_seq):
        path = tmp_path / "events.csv"
        write_events(path, sample_seq)
        read_events(path, use_cache=True)
        with open(path, "a") as f:
            f.write("1000.0,0\n")
        back = read_events(path, use_cache=True)
        assert len(back) == len(sample_seq) + 1


class TestParamsRoundTrip:
    def test_lossless(self, tmp_path, rng):
        _, params = random_instance(rng, 10, 4, 2)
        path = tmp_path / "params.json"
        write_params(path, params)
        back = read_params(path)
        assert np.array_equal(back.mu, params.mu)
        assert np.array_equal(back.alpha, params.alpha)
        assert np.array_equal(back.gamma, params.gamma)

    def test_negative_alpha_names_index(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text(
            '{"M": 2, "K": 1, "mu": [0.1, 0.1], "gamma": [1.0],'
            ' "alpha": [[[0.1, 0.2], [-0.3, 0.1]]]}'
        )
        with pytest.raises(FileFormatError, match=r"alpha\[0,1,0\]"):
            read_params(path)

    def test_flat_alpha_accepted(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text('{"M": 2, "K": 1, "mu": [0.1, 0.1], "gamma": [1.0], "alpha": [0.1, 0.2, 0.3, 0.4]}')
        params = read_params(path)
        assert params.alpha.shape == (1, 2, 2)
        assert params.alpha[0, 1, 0] == 0.3  # row-major

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text("{not json")
        with pytest.raises(FileFormatError, match="invalid JSON"):
            read_params(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text('{"M": 1}')
        with pytest.raises(FileFormatError, match="missing"):
            read_params(path)


class TestFitReport:
    def test_csv_columns(self, tmp_path, rng):
        seq, params = random_instance(rng, 50, 2, 1)
        report = fit(seq, params, TrainConfig(epochs=3))
        path = tmp_path / "report.csv"
        write_fit_report(path, report)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,nll,loglik_per_event,grad_norm,seconds"
        assert len(lines) == 4
