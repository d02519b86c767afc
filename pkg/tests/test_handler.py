"""Test the handler classes.

The record handler is tested on the arithmetic graph; the HDF5 handler on
a small graph that takes an iteration state.
"""

from parzpo.graph import ProtocolGraph
from parzpo.handler import H5Data, H5Handler, ProtocolError, RecordHandler
from parzpo.stage import Stage
from dataclasses import dataclass
from textwrap import dedent
import h5py
import numpy as np
import pickle
import pytest


@dataclass
class State:
    t: int
    theta: np.ndarray

    def to_archive(self):
        return self.theta


def scale(state, factor):
    """Scale the parameters."""
    return state.theta * factor


def total(scaled):
    return float(np.sum(scaled))


@pytest.fixture
def state_G():
    """Graph ``scale -> total`` with the inputs state and factor."""

    G = ProtocolGraph(name="state")
    G.add_edge("scale", "total")
    G.set_stages_from(
        [Stage("scale", scale, output="scaled"), Stage("total", total, output="total")]
    )
    return G


class TestRecordHandler:
    """Test the in-memory handler."""

    @pytest.fixture
    def handler(self, arith_G):
        return RecordHandler(arith_G, ["k", "m"])

    def test_signature(self, handler, arith_signature):
        """Test the handler signature."""

        assert handler.__signature__ == arith_signature

    def test_order(self, handler):
        """Test the execution order."""

        assert [node for node, _ in handler.order] == [
            "add",
            "log",
            "power",
            "subtract",
            "multiply",
        ]

    def test_call(self, handler):
        """Test the returns."""

        assert handler(a=0, b=2, d=1, f=2) == (4, 1)

    def test_returns(self, arith_G):
        """No returns give None, a single return is passed through."""

        assert RecordHandler(arith_G, [])(a=0, b=2, d=1, f=2) is None
        assert RecordHandler(arith_G, ["m"])(a=0, b=2, d=1, f=2) == 1

    def test_exception(self, handler):
        """Test the formatted exception of a failing stage."""

        with pytest.raises(ProtocolError) as excinfo:
            handler(a=0, b=1, d=1, f=2)

        message = str(excinfo.value)
        header, details = message.split("--- stage info ---\n")
        assert header.startswith(
            "An exception occurred when executing stage 'log':\n"
            "--- exception info ---\n"
            "ZeroDivisionError: "
        )

        details_s = """\
        log

        logarithm(c, b)
        return: m
        functype: function

        Logarithm operation.
        --- input info ---
        c = 2
        b = 1
        """

        assert details == dedent(details_s)


class TestProtocolError:
    """Test the ProtocolError exception."""

    def test_pickle(self):
        """The error survives a round trip through a worker process."""

        err = ProtocolError("query", "An exception occurred")
        copy = pickle.loads(pickle.dumps(err))
        assert copy.stage == "query"
        assert str(copy) == "An exception occurred"


class TestH5Data:
    """Test the H5Data class."""

    @pytest.fixture
    def h5_filename(self, tmp_path):
        return tmp_path / "archive.h5"

    @pytest.fixture
    def data(self, h5_filename):
        """H5Data of iteration 3; closed afterward."""

        data = H5Data(
            {"state": State(3, np.array([1.0, 2.0])), "config": object()},
            fname=h5_filename,
            gname="seed0",
        )
        yield data
        data.close()

    def test_gname(self, data):
        """The group is named after the iteration."""

        assert data.gname == "seed0/t000003"

    def test_initial_values(self, data, h5_filename):
        """Initial values are archived; the configuration is skipped."""

        data.close()
        with h5py.File(h5_filename, "r") as f:
            group = f["seed0/t000003"]
            assert np.array_equal(group["state"][()], [1.0, 2.0])
            assert "config" not in group
            assert "config" not in group.attrs

    @pytest.mark.parametrize(
        "key, value",
        [("scalar", 1.14), ("list", [1.11, 2.22, 3.33]), ("array", np.arange(3.0))],
    )
    def test_write_dataset(self, key, value, data, h5_filename):
        """Test values written as datasets."""

        data[key] = value
        assert np.array_equal(data[key], value)
        data.close()
        with h5py.File(h5_filename, "r") as f:
            assert np.array_equal(f["seed0/t000003"][key][()], value)

    def test_write_archivable_list(self, data, h5_filename):
        """A list of archivable objects is stacked into one dataset."""

        data["states"] = [State(1, np.zeros(2)), State(1, np.ones(2))]
        data.close()
        with h5py.File(h5_filename, "r") as f:
            assert f["seed0/t000003"]["states"].shape == (2, 2)

    def test_write_object(self, data, h5_filename):
        """Objects HDF5 cannot store are written as string attributes."""

        data["function"] = total
        data.close()
        with h5py.File(h5_filename, "r") as f:
            assert f["seed0/t000003"].attrs["function"] == str(total)

    def test_replace_group(self, data, h5_filename):
        """Writing the same iteration again replaces the group."""

        data["extra"] = 1.0
        data.close()

        second = H5Data({"state": State(3, np.array([5.0, 6.0]))}, h5_filename, "seed0")
        second.close()
        with h5py.File(h5_filename, "r") as f:
            group = f["seed0/t000003"]
            assert "extra" not in group
            assert np.array_equal(group["state"][()], [5.0, 6.0])


class TestH5Handler:
    """Test the HDF5 handler as a whole."""

    def test_call(self, state_G, tmp_path):
        """Test the returns and the archived intermediate values."""

        fname = tmp_path / "archive.h5"
        handler = H5Handler(state_G, ["total"], fname=str(fname), gname="run")
        state = State(1, np.array([1.0, 2.0, 3.0]))

        assert handler(state=state, factor=2.0) == 12.0

        with h5py.File(fname, "r") as f:
            group = f["run/t000001"]
            assert np.array_equal(group["scaled"][()], [2.0, 4.0, 6.0])
            assert group["total"][()] == 12.0
            assert group["factor"][()] == 2.0

    def test_iterations(self, state_G, tmp_path):
        """Every iteration gets its own group."""

        fname = tmp_path / "archive.h5"
        handler = H5Handler(state_G, ["total"], fname=str(fname))
        for t in (1, 2):
            handler(state=State(t, np.ones(2)), factor=float(t))

        with h5py.File(fname, "r") as f:
            assert list(f["run"]) == ["t000001", "t000002"]
            assert f["run/t000002/total"][()] == 4.0

    def test_exception_closes_file(self, state_G, tmp_path):
        """A failing stage closes the file and raises ProtocolError."""

        fname = tmp_path / "archive.h5"
        handler = H5Handler(state_G, ["total"], fname=str(fname))

        with pytest.raises(ProtocolError, match="stage 'scale'"):
            handler(state=State(1, np.ones(2)), factor="x")

        with h5py.File(fname, "r") as f:
            assert "run/t000001" in f
