"""Graphviz drawings of protocol graphs.

Stages that run once per agent (those wrapped by ``agent_loop``) are drawn
as stacked boxes. Edges carry the name of the value passed downstream.
"""

import graphviz
import re

from parzpo.metadata import describe_stage, modifier_metadata

GRAPH_ATTR = {"labelloc": "t", "labeljust": "l", "splines": "ortho", "ordering": "out"}
AGENT_SHAPE = "box3d"


def format_label(label):
    r"""Format label for graphviz.

    Newlines become the graphviz left-aligned line break; an escaped "\n"
    becomes "\\\\n".
    """
    return re.sub(r"(?<!\\)\n", r"\\l", label).replace("\\n", "\\\\n") + r"\l"


def is_agent_stage(ndict):
    """Whether the stage of a node is looped over the agents."""

    stage = ndict.get("stage")
    if stage is None:
        return False
    return any(modifier_metadata(m).startswith("agent_loop") for m in stage.modifiers)


class Visualizer:
    """Draw a protocol graph.

    :param callable stage_text: ``(node, ndict) -> str`` text of a node
    :param bool show_outputs: label the edges with the value they carry
    """

    def __init__(self, stage_text, show_outputs=True):
        self.stage_text = stage_text
        self.show_outputs = show_outputs

    def node_attrs(self, node, ndict):
        attrs = {"label": format_label(self.stage_text(node, ndict))}
        if is_agent_stage(ndict):
            attrs["shape"] = AGENT_SHAPE
        return attrs

    def edge_label(self, edict):
        return format_label(edict.get("output", "") if self.show_outputs else "")

    def __call__(self, G, label=None, outfile=None):
        """Draw the graph; ``outfile`` renders it to a file."""

        dot_graph = graphviz.Digraph(
            name=G.name,
            graph_attr={**GRAPH_ATTR, "label": format_label(label or "")},
            node_attr={"shape": "box"},
        )
        for node, ndict in G.nodes(data=True):
            dot_graph.node(node, **self.node_attrs(node, ndict))
        for u, v, edict in G.edges(data=True):
            dot_graph.edge(u, v, xlabel=self.edge_label(edict))

        if outfile:
            dot_graph.render(outfile=outfile)
        return dot_graph


plain_visualizer = Visualizer(lambda node, ndict: node, show_outputs=False)
visualizer = Visualizer(lambda node, ndict: describe_stage(ndict["stage"]))
