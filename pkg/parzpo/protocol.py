from inspect import signature
import networkx as nx
from parzpo.metadata import describe_protocol
from parzpo.utility import (
    modify_func,
    is_node_attr_defined,
    is_edge_attr_defined,
    protocol_returns,
)
from parzpo.visualizer import visualizer


class Protocol:
    """Callable built from a protocol graph.

    :param str name: protocol name
    :param ProtocolGraph graph: stage graph; a frozen copy is kept
    :param class handler: handler class executing the stages
    :param dict handler_kwargs: keyword arguments for the handler class
    :param list modifiers: modifiers wrapping the whole protocol
    :param list returns: returned values in order; defaults to the outputs
        of the terminal stages
    :param str doc: protocol docstring
    """

    def __init__(
        self,
        name,
        graph,
        handler,
        handler_kwargs: dict = None,
        modifiers: list = None,
        returns: list = None,
        doc: str = "",
    ):
        assert self._is_valid_graph(graph)
        self.name = self.__name__ = name
        self._graph = nx.freeze(graph.deepcopy())
        self._returns = returns or protocol_returns(graph)
        self._modifiers = modifiers or list()
        self.handler = handler
        self._handler_kwargs = handler_kwargs or {}
        self.doc = self.__doc__ = doc

        self._runner = handler(self._graph, self._returns, **self._handler_kwargs)
        self._runner.__name__ = self.name
        self.protocol_func = modify_func(self._runner, self._modifiers)

    @property
    def order(self):
        """Stage execution order."""
        return list(zip(*self._runner.order))[0]

    @property
    def signature(self):
        """Protocol signature for inspection."""
        return self.__signature__

    @property
    def __signature__(self):
        return signature(self.protocol_func)

    @property
    def graph(self):
        """A copy of the graph."""
        return self._graph.deepcopy()

    @property
    def returns(self):
        return self._returns.copy()

    @property
    def modifiers(self):
        return self._modifiers.copy()

    @property
    def handler_kwargs(self):
        return self._handler_kwargs.copy()

    def __call__(self, *args, **kwargs):
        """Execute the protocol with bound arguments."""

        bound = self.signature.bind(*args, **kwargs)
        return self.protocol_func(**bound.arguments)

    def __str__(self):
        return describe_protocol(self)

    @staticmethod
    def _is_valid_graph(G):
        """Check that the graph can be executed.

        Cycles are not allowed, and every stage and edge must be fully
        defined.
        """

        assert nx.is_directed(G), f"invalid graph ({G.name}): undirected graph."
        assert nx.is_directed_acyclic_graph(
            G
        ), f"invalid graph ({G.name}): graph contains cycles."

        assert is_node_attr_defined(G, "stage")
        assert is_node_attr_defined(G, "output")
        assert is_node_attr_defined(G, "signature")
        assert is_edge_attr_defined(G, "output")
        return True

    def get_stage(self, node):
        """Stage object of a node."""

        return self._graph.nodes[node]["stage"]

    def visualize(self, outfile=None):
        """Draw the protocol with the stage metadata.

        :param str outfile: filename to save the graph as. The file extension
            is needed.
        """

        return visualizer(self._graph, str(self), outfile)
