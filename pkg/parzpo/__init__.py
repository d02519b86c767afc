__version__ = "0.1.0"

from parzpo.core import Partition, RngStream, Role, block_sum_norm, make_partition
from parzpo.federate import RunConfig, RunTrace, run, fedavg_protocol, par_protocol
from parzpo.graph import ProtocolGraph
from parzpo.handler import H5Handler, ProtocolError, RecordHandler
from parzpo.protocol import Protocol
from parzpo.stage import Stage
