import numpy as np
import pytest

from kdvf.errors import ConfigurationError
from kdvf.grid import Grid
from kdvf.series import TimeSeries, format_float


def _sample_series(snapshots=False):
    g = Grid(1.5, 4)
    cols = {
        "t": np.array([0.0, 0.1, 0.2]),
        "E": np.array([1.0, 0.5, 0.25]),
        "wall_clock": np.array([0.01, 0.02, 0.03]),
    }
    snaps = [np.arange(5.0) * k for k in range(3)] if snapshots else None
    return TimeSeries(columns=cols, snapshots=snaps, grid=g,
                      metadata={"L": repr(1.5), "model": "linear"})


def test_csv_round_trip(tmp_path):
    ser = _sample_series()
    path = tmp_path / "run.csv"
    ser.to_csv(path)
    back = TimeSeries.from_csv(path)
    assert np.array_equal(back.t, ser.t)
    assert np.array_equal(back.column("E"), ser.column("E"))
    assert back.metadata["model"] == "linear"


def test_csv_round_trip_with_snapshots(tmp_path):
    ser = _sample_series(snapshots=True)
    path = tmp_path / "run.csv"
    ser.to_csv(path, include_snapshots=True)
    back = TimeSeries.from_csv(path)
    assert back.snapshots is not None
    assert np.array_equal(back.snapshots[2], ser.snapshots[2])
    assert back.grid == ser.grid


def test_truncated_flag_survives(tmp_path):
    ser = _sample_series()
    ser.truncated = True
    path = tmp_path / "run.csv"
    ser.to_csv(path)
    assert TimeSeries.from_csv(path).truncated


def test_wall_clock_is_last_column(tmp_path):
    ser = _sample_series(snapshots=True)
    path = tmp_path / "run.csv"
    ser.to_csv(path, include_snapshots=True)
    header = [l for l in path.read_text().splitlines() if not l.startswith("#")][0]
    assert header.split(",")[-1] == "wall_clock"


def test_format_float_17_digits():
    v = 1.0 / 3.0
    assert float(format_float(v)) == v


def test_missing_column_raises():
    ser = _sample_series()
    with pytest.raises(ConfigurationError):
        ser.column("nope")
