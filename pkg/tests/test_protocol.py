"""Test the Protocol class with the arithmetic graph."""

from parzpo.graph import ProtocolGraph
from parzpo.handler import ProtocolError, RecordHandler
from parzpo.protocol import Protocol
from parzpo.stage import Stage
from inspect import signature
from textwrap import dedent
import networkx as nx
import pytest


@pytest.fixture
def protocol(arith_G):
    """Arithmetic protocol with the record handler."""

    return Protocol("arith_protocol", arith_G, RecordHandler, doc="Arithmetic protocol.")


class TestProtocol:
    """Test construction and execution."""

    def test_signature(self, protocol, arith_signature):
        """The signature collects the inputs that no stage produces."""

        assert protocol.signature == arith_signature
        assert signature(protocol) == arith_signature

    def test_default_returns(self, protocol):
        """The default returns are the terminal outputs, sorted."""

        assert protocol.returns == ["k", "m"]

    def test_order(self, protocol):
        """Ties in the topological order are broken by name."""

        assert protocol.order == ("add", "log", "power", "subtract", "multiply")

    def test_call(self, protocol):
        """Test the protocol output for positional and keyword arguments.

        k = (a + 2 - d)(a + 2)^f = (2 - 1) * 2^2 = 4
        m = log(a + 2, b) = log(2, 2) = 1
        """

        assert protocol(0, 2, 1, 2) == (4, 1)
        assert protocol(a=0, b=2, d=1, f=2) == (4, 1)

    def test_single_return_with_modifier(self, arith_G, value_modifier):
        """A single return is passed through; modifiers wrap the protocol."""

        protocol = Protocol(
            "arith_k", arith_G, RecordHandler, modifiers=[value_modifier(1)], returns=["k"]
        )
        assert protocol(a=0, b=2, d=1, f=2) == 5
        assert protocol.modifiers[0].__qualname__.endswith("add_value.<locals>.mod")

    def test_intermediate_returns(self, arith_G):
        """An explicit returns list selects the intermediate values."""

        protocol = Protocol("arith_c", arith_G, RecordHandler, returns=["c", "e"])
        assert protocol(a=1, b=2, d=1, f=2) == (3, 2)

    def test_frozen_graph(self, protocol):
        """The protocol keeps a frozen copy; the graph property is a new copy."""

        graph = protocol.graph
        graph.add_edge("log", "extra")
        assert "extra" not in protocol.graph

        with pytest.raises(nx.NetworkXError):
            protocol._graph.add_edge("log", "extra")

    def test_get_stage(self, protocol):
        """Test get_stage returns the stage object."""

        assert protocol.get_stage("add").output == "c"

    def test_str(self, protocol):
        """Test the string representation."""

        protocol_s = """\
        arith_protocol(a, b, d, f)
        returns: (k, m)
        graph: arith
        handler: RecordHandler

        Arithmetic protocol."""

        assert str(protocol) == dedent(protocol_s)

    def test_visualize(self, protocol):
        """The drawing labels stages with their metadata."""

        source = protocol.visualize().source
        assert "arith_protocol" in source
        assert "return: k" in source


class TestProtocolErrors:
    """Test invalid graphs and failing stages."""

    def test_stage_exception(self, protocol):
        """A failing stage raises ProtocolError naming the stage."""

        with pytest.raises(ProtocolError) as excinfo:
            protocol(a=0, b=1, d=1, f=2)

        err = excinfo.value
        assert err.stage == "log"
        assert str(err).startswith("An exception occurred when executing stage 'log':")
        assert "ZeroDivisionError" in str(err)
        assert "--- input info ---" in str(err)
        assert isinstance(err.__cause__, ZeroDivisionError)

    def test_cycle(self):
        """Test that graphs with cycles are rejected."""

        def forward(x):
            return x

        def backward(y):
            return y

        G = ProtocolGraph(name="cycle")
        G.add_grouped_edges_from([("forward", "backward"), ("backward", "forward")])
        G.set_stages_from([Stage("forward", forward, output="y"), Stage("backward", backward, output="x")])

        with pytest.raises(AssertionError, match="graph contains cycles"):
            Protocol("cycle", G, RecordHandler)

    def test_missing_stage(self, arith_G):
        """Test that every node needs a stage."""

        arith_G.add_edge("log", "orphan")
        with pytest.raises(Exception, match="'stage' is not defined for node"):
            Protocol("arith", arith_G, RecordHandler)
