import inspect
from inspect import Parameter
import networkx as nx
import numpy as np
import pytest
import random
import parzpo.utility as util


@pytest.fixture
def func():
    def example_func(a, c, b=2, *args, d, e=10, **kwargs):
        return

    return example_func


@pytest.mark.parametrize(
    "parameter, result",
    [
        ("a", (1, False, "a")),
        ("b", (1, True, "b")),
        ("args", (2, False, "args")),
        ("d", (3, False, "d")),
        ("e", (3, True, "e")),
        ("kwargs", (4, False, "kwargs")),
    ],
)
def test_param_sorter(parameter, result, func):
    """Test param_sorter result."""

    params = inspect.signature(func).parameters
    assert util.param_sorter(params[parameter]) == result


def test_param_sorter_order(func):
    """Parameters sort by kind, then defaults last, then name."""

    params = list(inspect.signature(func).parameters.values())
    random.Random(0).shuffle(params)

    assert [p.name for p in sorted(params, key=util.param_sorter)] == [
        "a",
        "c",
        "b",
        "args",
        "d",
        "e",
        "kwargs",
    ]


class TestGraphProperties:
    """Test the helpers that read the protocol graph."""

    def test_protocol_signature(self, arith_G, arith_signature):
        """Stage outputs are not protocol parameters."""

        assert util.protocol_signature(arith_G) == arith_signature

    def test_protocol_returns(self, arith_G):
        """Terminal outputs, sorted."""

        assert util.protocol_returns(arith_G) == ["k", "m"]

    def test_topological_sort(self, arith_G):
        """Ties are broken by node name."""

        order = util.graph_topological_sort(arith_G)
        assert [node for node, _ in order] == ["add", "log", "power", "subtract", "multiply"]
        assert order[0][1]["output"] == "c"

    def test_node_attr_defined(self, arith_G):
        """Test the node attribute check."""

        assert util.is_node_attr_defined(arith_G, "stage")

        arith_G.add_node("extra")
        with pytest.raises(
            Exception,
            match=r"invalid graph \(arith\): attribute 'stage' is not defined "
            r"for node\(s\) \['extra'\]",
        ):
            util.is_node_attr_defined(arith_G, "stage")

    def test_edge_attr_defined(self, arith_G):
        """Test the edge attribute check."""

        assert util.is_edge_attr_defined(arith_G, "output")

        arith_G.add_edge("log", "extra")
        with pytest.raises(Exception, match=r"for edge\(s\) \[\('log', 'extra'\)\]"):
            util.is_edge_attr_defined(arith_G, "output")

    def test_unnamed_graph(self):
        """Unnamed graphs are reported as 'graph'."""

        G = nx.DiGraph()
        G.add_node("a")
        with pytest.raises(Exception, match=r"^invalid graph: attribute 'x'"):
            util.is_node_attr_defined(G, "x")


def test_modify_func(value_modifier):
    """Modifiers apply in order."""

    def base(a):
        return a

    func = util.modify_func(base, [value_modifier(1), value_modifier(10)])
    assert func(a=0) == 11
    assert util.modify_func(base, []) is base


@pytest.mark.parametrize(
    "func, functype",
    [
        (test_modify_func, "function"),
        (np.add, "numpy.ufunc"),
        (len, "builtin_function_or_method"),
    ],
)
def test_parse_functype(func, functype):
    """Test the function type names."""

    assert util.parse_functype(func) == functype
