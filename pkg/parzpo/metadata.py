"""Plain-text descriptions of stages, protocols and check reports.

The stage description labels the protocol drawing and the stage section
of a ``ProtocolError``; the report description is the printed form of a
``CheckReport``.
"""

import inspect
from textwrap import TextWrapper, shorten

WIDTH = 80

_wrapper = TextWrapper(width=WIDTH, replace_whitespace=False, expand_tabs=True, tabsize=0)


def call_signature(func):
    """``name(args)`` of a callable."""

    return f"{func.__name__}{inspect.signature(func)}"


def short_doc(doc):
    """First docstring line that reads like a sentence, or None."""

    for line in (doc or "").splitlines():
        line = line.strip()
        if line and line[0].isupper() and line.endswith("."):
            return line
    return None


def modifier_metadata(closure):
    """Name and arguments of a modifier closure.

    The "metadata" attribute wins; otherwise the closure name, with its
    nonlocal arguments when it has any.
    """

    if hasattr(closure, "metadata"):
        return closure.metadata

    nonlocals = inspect.getclosurevars(closure).nonlocals
    if not nonlocals:
        return closure.__name__
    name = closure.__qualname__.rsplit(".<locals>.")[-2]
    arguments = ", ".join(f"{k}={v!r}" for k, v in nonlocals.items())
    return f"{name}({arguments})"


def bullet_list(key, items, shortened=False):
    """``key:`` followed by one ``- item`` line per item; nothing if empty."""

    if not items:
        return []
    lines = [f"- {item}" for item in items]
    if shortened:
        lines = [shorten(line, width=WIDTH) for line in lines]
    return [f"{key}:", *lines]


def returns_line(returns):
    """``returns:`` None, a single name, or a tuple of names."""

    if not returns:
        return "returns: None"
    if len(returns) == 1:
        return f"returns: {returns[0]}"
    return f"returns: ({', '.join(returns)})"


def render(lines):
    """Wrap the non-empty lines at ``WIDTH``; empty lines separate blocks."""

    wrapped = []
    for line in lines:
        wrapped.extend(_wrapper.wrap(line) if line else [""])
    return "\n".join(wrapped).strip()


def describe_stage(stage):
    """Stage name, call, output, function type, modifiers and summary."""

    lines = [
        stage.name,
        "",
        call_signature(stage.stage_func),
        f"return: {stage.output}",
        f"functype: {stage.functype}",
    ]
    lines += bullet_list("modifiers", [modifier_metadata(m) for m in stage.modifiers])
    lines += ["", short_doc(stage.doc) or ""]
    return render(lines)


def describe_protocol(protocol):
    """Protocol call, returns, graph, handler, modifiers and docstring."""

    lines = [
        call_signature(protocol),
        returns_line(protocol.returns),
        f"graph: {protocol.graph.name}",
        f"handler: {protocol.handler.__name__}",
    ]
    handler_kwargs = [f"{k}: {v}" for k, v in protocol.handler_kwargs.items()]
    lines += bullet_list("handler_kwargs", handler_kwargs, shortened=True)
    modifiers = [modifier_metadata(m) for m in protocol.modifiers]
    lines += bullet_list("modifiers", modifiers, shortened=True)
    lines += ["", protocol.doc or ""]
    return render(lines)


def describe_report(report):
    """Check name, PASS or FAIL, the measured numbers and the details."""

    lines = [report.name, report.status.upper()]
    for key in ("statistic", "bound", "tolerance", "samples", "seed"):
        value = getattr(report, key)
        if value is not None:
            lines.append(f"{key}: {value:g}")
    details = [f"{k}: {v}" for k, v in report.details.items()]
    lines += bullet_list("details", details, shortened=True)
    return render(lines)
