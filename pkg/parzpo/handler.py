from collections import UserDict
from parzpo.utility import graph_topological_sort, protocol_signature
import h5py
import numpy as np
from textwrap import dedent, shorten
import sys


class ProtocolError(Exception):
    """Failure of one protocol stage.

    :param str stage: name of the failing stage
    :param str message: formatted diagnostic
    """

    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage

    def __reduce__(self):
        return self.__class__, (self.stage, str(self))


class TopologicalHandler:
    """Base class for executing protocol stages in topological order.

    "returns" specifies the output order. A single return is passed
    through, several returns are output as a tuple.

    :param networkx.DiGraph graph: protocol graph
    :param list returns: handler returns order
    """

    DataClass: type = dict

    def __init__(self, graph, returns: list, **datacls_kwargs):
        self.__signature__ = protocol_signature(graph)
        self.returns = returns
        self.order = graph_topological_sort(graph)
        self.graph = graph
        self.datacls_kwargs = datacls_kwargs

    def __call__(self, **kwargs):
        """Execute the stages one at a time."""

        data = self.DataClass(kwargs, **self.datacls_kwargs)

        for stage, stage_attr in self.order:
            self.run_stage(data, stage, stage_attr)

        return self.finish(data, self.returns)

    def stage_exception(self, stage_data, stage, stage_attr):
        """Re-raise the active exception as a ``ProtocolError``."""

        exception_format = dedent(
            """\
        An exception occurred when executing stage '{stage}':
        --- exception info ---
        {exc_str}
        --- stage info ---
        {stage_str}
        --- input info ---
        {input_str}
        """
        )
        input_str = "\n".join(
            shorten(f"{key} = {value!r}", width=80) for key, value in stage_data.items()
        )
        exc_type, exc_value, _ = sys.exc_info()
        exc_str = f"{exc_type.__name__}: {exc_value}"
        msg = exception_format.format(
            stage=stage,
            exc_str=exc_str,
            stage_str=str(stage_attr["stage"]),
            input_str=input_str,
        )
        raise ProtocolError(stage, msg) from exc_value

    def run_stage(self, data, stage, stage_attr):
        """Run a single stage and store its output."""

        kwargs = {key: data[key] for key in stage_attr["signature"].parameters}
        stage_object = stage_attr["stage"]

        try:
            result = stage_object.stage_func(**kwargs)
            output = stage_attr["output"]
            if output:
                data[output] = result

        except Exception:
            if hasattr(data, "close"):
                data.close()

            self.stage_exception(kwargs, stage, stage_attr)

    def finish(self, data, returns):
        """Collect the returns and close the data object."""

        if len(returns) == 0:
            result = None
        elif len(returns) == 1:
            result = data[returns[0]]
        else:
            result = tuple(data[rt] for rt in returns)

        if hasattr(data, "close"):
            data.close()

        return result


class H5Data(UserDict):
    """Dictionary that also writes every value to an HDF5 group.

    Values are kept in memory for the following stages. The group is
    ``"<gname>/t<iteration>"``, the iteration read from the "state" input.
    Objects with ``to_archive()`` and lists of them are written as
    datasets; values HDF5 cannot store are written as string attributes.

    :param str fname: h5 file name
    :param str gname: group name of the run
    :param tuple skip: keys that are not archived
    """

    def __init__(self, data, fname, gname, skip=("config",)):
        self.fname = fname
        self.skip = tuple(skip)
        self.f = h5py.File(self.fname, "a")
        self.gname = f"{gname}/t{data['state'].t:06d}"
        if self.gname in self.f:
            del self.f[self.gname]
        self.group = self.f.create_group(self.gname)
        super().__init__(data)

    def __setitem__(self, key, value):
        super().__setitem__(key, value)
        if key not in self.skip:
            self.archive(key, value)

    def archive(self, key, value):
        """Write one value to the group."""

        if hasattr(value, "to_archive"):
            value = value.to_archive()
        elif isinstance(value, (list, tuple)) and all(
            hasattr(v, "to_archive") for v in value
        ):
            value = np.array([v.to_archive() for v in value])

        try:
            self.group.create_dataset(key, data=value)
        except TypeError:
            # object dtype has no native HDF5 equivalent
            self.group.attrs[key] = str(value)

    def close(self):
        """Close the file."""
        if self.f:
            self.f.close()


class RecordHandler(TopologicalHandler):
    """Keep every intermediate value in a dictionary."""

    DataClass = dict


class H5Handler(TopologicalHandler):
    """Archive every intermediate value of an iteration to an HDF5 file.

    :param str fname: h5 file name
    :param str gname: group name of the run
    """

    DataClass = H5Data

    def __init__(self, graph, returns, fname: str, gname: str = "run"):
        super().__init__(graph, returns, fname=fname, gname=gname)
