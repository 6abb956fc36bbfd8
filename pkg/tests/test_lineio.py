import io
import json

import numpy as np
import pytest

from databalance.core import BalanceSpec, Dataset
from databalance.errors import EmptyStream, MalformedLine, UnreadableSource
from databalance.lineio import (
    IngestStats,
    ingest,
    measured_pi,
    parse_config,
    parse_record,
    read_dataset,
    write_records,
    write_weights,
)


@pytest.fixture
def spec():
    return BalanceSpec(m=2, c=1, pi=[0.5, 0.5])


class TestParse:
    def test_happy_path(self):
        e = parse_record('{"id": "a", "s": [1, 0], "y": [1], "u": 2.0}', 1)
        assert e.id == "a"
        np.testing.assert_array_equal(e.s, [1.0, 0.0])
        np.testing.assert_array_equal(e.y, [1.0])
        assert e.u == 2.0

    def test_default_utility(self):
        assert parse_record('{"id": "a", "s": [1], "y": []}', 1).u == 1.0

    def test_unknown_fields_counted(self):
        stats = IngestStats()
        parse_record('{"id": "a", "s": [1], "y": [], "note": 1, "x": 2}', 1, stats)
        assert stats.unknown_fields == 2

    def test_malformed(self):
        for line in ('{"id": "a"', '[1, 2]', '{"s": [1], "y": []}',
                     '{"id": "a", "s": [2], "y": []}',
                     '{"id": "a", "s": [1], "y": [], "u": 0}'):
            with pytest.raises(MalformedLine):
                parse_record(line, 3)


class TestIngest:
    def test_skips_and_counts_by_default(self, spec):
        src = io.StringIO(
            '{"id": "a", "s": [1, 0], "y": [1]}\n'
            '{"id": "bad", "s": [2, 0], "y": [1]}\n'
            "\n"
            "garbage\n"
            '{"id": "b", "s": [0, 1], "y": [0], "u": 3.0}\n'
        )
        stats = IngestStats()
        out = list(ingest(src, spec, stats=stats))
        assert [e.id for e in out] == ["a", "b"]
        assert stats.read == 4
        assert stats.accepted == 2
        assert stats.skipped == 2

    def test_strict_mode_raises(self, spec):
        src = io.StringIO('{"id": "a", "s": [9, 0], "y": [1]}\n')
        with pytest.raises(MalformedLine):
            list(ingest(src, spec, strict=True))

    def test_validates_against_spec(self, spec):
        src = io.StringIO('{"id": "a", "s": [1], "y": [1]}\n')
        stats = IngestStats()
        assert list(ingest(src, spec, stats=stats)) == []
        assert stats.skipped == 1
        assert "DimensionMismatch" in stats.reasons

    def test_unreadable_source(self, spec):
        with pytest.raises(UnreadableSource):
            list(ingest("/nonexistent/path.jsonl", spec))

    def test_kept_only_filter(self):
        src = io.StringIO(
            '{"id": "a", "s": [1], "y": [], "kept": true}\n'
            '{"id": "b", "s": [0], "y": [], "kept": false}\n'
            '{"id": "c", "s": [1], "y": []}\n'
        )
        out = list(ingest(src, kept_only=True))
        assert [e.id for e in out] == ["a"]

    def test_empty_dataset_raises(self, spec):
        with pytest.raises(EmptyStream):
            read_dataset(io.StringIO(""), spec)


class TestWriters:
    def test_records_round_trip(self, spec):
        ds = Dataset(["a", "b"], np.array([[1.0, 0.0], [0.0, 1.0]]),
                     np.array([[1.0], [0.0]]), np.array([1.0, 2.5]))
        buf = io.StringIO()
        assert write_records(iter(ds), buf) == 2
        back = read_dataset(io.StringIO(buf.getvalue()), spec)
        np.testing.assert_array_equal(back.S, ds.S)
        np.testing.assert_array_equal(back.Y, ds.Y)
        np.testing.assert_array_equal(back.U, ds.U)
        assert back.ids == ds.ids

    def test_weights_format(self):
        buf = io.StringIO()
        write_weights(["a", "b"], np.array([0.25, 1.0]), buf)
        lines = [json.loads(l) for l in buf.getvalue().splitlines()]
        assert lines == [{"id": "a", "q": 0.25}, {"id": "b", "q": 1.0}]


class TestMeasuredPi:
    def test_median_across_categories(self):
        S = np.zeros((10, 3))
        S[:2, 0] = 1.0  # 0.2
        S[:5, 1] = 1.0  # 0.5
        S[:8, 2] = 1.0  # 0.8
        ds = Dataset([f"e{i}" for i in range(10)], S, np.zeros((10, 0)),
                     np.ones(10))
        np.testing.assert_allclose(measured_pi(ds), [0.5, 0.5, 0.5])


class TestConfig:
    def test_parse_types(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# training configuration\n"
            "eta = 0.9\n"
            "epochs = 3\n"
            "pi = 0.12, 0.12\n"
            "schedule = inverse_sqrt\n"
            "no_shuffle = true\n"
        )
        opts = parse_config(cfg)
        assert opts == {
            "eta": 0.9,
            "epochs": 3,
            "pi": [0.12, 0.12],
            "schedule": "inverse_sqrt",
            "no_shuffle": True,
        }

    def test_rejects_bad_lines(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just some words\n")
        with pytest.raises(ValueError):
            parse_config(cfg)
