"""Federated sign-based zeroth-order policy optimization.

One iteration is a protocol graph. The partitioned algorithm ("par")
runs::

    perturb -> split -> query -> aggregate -> update

The server samples one perturbation, each of the K agents tests its own
block of it through its preference panel, and the signed blocks are
summed into the update direction. The FedAvg baseline ("fedavg") runs::

    perturb_agents -> query -> aggregate -> update

where each agent perturbs all d coordinates and the server averages the K
signed perturbations.

Randomness is drawn from streams ``(seed, role, t, k)``. The server
perturbation of the partitioned algorithm and the perturbation of FedAvg
agent 0 share a stream, so both algorithms coincide at K = 1.
"""

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
import csv
import json
import logging
import math
import numpy as np

import parzpo
from parzpo.core import (
    GENERATOR,
    Role,
    RngStream,
    block_sum_norm,
    make_partition,
    param_vector,
)
from parzpo.env import EnvSpec, evaluate_policy, true_gradient
from parzpo.graph import ProtocolGraph
from parzpo.handler import H5Handler, ProtocolError, RecordHandler
from parzpo.modifier import agent_loop, log_time
from parzpo.perturb import (
    KINDS,
    feedback_bits,
    mask_perturbation,
    payload_bits,
    sample_perturbation,
)
from parzpo.policy import Policy, PolicySpec, initial_params, param_count, params_to_base64
from parzpo.preference import PanelSpec, preference_oracle
from parzpo.protocol import Protocol
from parzpo.stage import Stage

logger = logging.getLogger(__name__)

ALGORITHMS = ("par", "fedavg")
PARTITION_MODES = ("contiguous", "shuffled")
SCHEDULES = ("theory", "constant")
UPDATE_MODES = ("plain-sgd", "accept-reject-adam")

TRACE_COLUMNS = (
    "t",
    "value_mean",
    "value_stderr",
    "accepted",
    "alpha",
    "mu",
    "bits",
    "traj_optimizer",
    "traj_eval",
    "grad_l2",
    "grad_blocksum",
)


@dataclass(frozen=True)
class AdamSettings:
    """Adam moments and the L2 clip of the Adam step."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.eps <= 0 or self.clip_norm <= 0:
            raise ValueError("Adam eps and clip_norm must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Configuration of one optimization run.

    :param EnvSpec env: environment
    :param PolicySpec policy: policy architecture, d = ``param_count(policy)``
    :param int K: agents
    :param int T: iterations
    :param str algorithm: "par" or "fedavg"
    :param str partition: "contiguous" or "shuffled"
    :param bool reshuffle: draw a fresh shuffled partition every iteration
    :param str perturbation: "binary" or "gaussian"
    :param float mu: perturbation distance (initial value when halving)
    :param str schedule: "theory" (``c sqrt(H / (d t))``) or "constant"
    :param float alpha: constant step size (initial value when halving)
    :param float c: constant of the theory schedule
    :param str update: "plain-sgd" or "accept-reject-adam"
    :param AdamSettings adam: Adam settings of the accept-reject mode
    :param int patience: consecutive rejections before halving
    :param PanelSpec panel: panel shared by agents and server
    :param int eval_episodes: evaluation episodes per iteration
    :param int checkpoint_every: checkpoint period, 0 disables
    :param int seed: run seed
    """

    env: EnvSpec
    policy: PolicySpec
    K: int = 1
    T: int = 100
    algorithm: str = "par"
    partition: str = "contiguous"
    reshuffle: bool = False
    perturbation: str = "binary"
    mu: float = 0.05
    schedule: str = "constant"
    alpha: float = 0.01
    c: float = 1.0
    update: str = "accept-reject-adam"
    adam: AdamSettings = field(default_factory=AdamSettings)
    patience: int = 3
    panel: PanelSpec = field(default_factory=PanelSpec)
    eval_episodes: int = 20
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        choices = {
            "algorithm": ALGORITHMS,
            "partition": PARTITION_MODES,
            "perturbation": KINDS,
            "schedule": SCHEDULES,
            "update": UPDATE_MODES,
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.reshuffle and self.partition != "shuffled":
            raise ValueError("reshuffle requires partition='shuffled'")

        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.K > self.d:
            raise ValueError(f"K must be <= d={self.d}, got {self.K}")
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        for name in ("eval_episodes", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        for name in ("mu", "alpha", "c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

        if (self.env.state_dim, self.env.action_dim) != (
            self.policy.input_dim,
            self.policy.output_dim,
        ):
            raise ValueError("policy input/output dims must match the environment")
        if self.env.kind == "analytic-quadratic" and len(self.env.optimum) != self.d:
            raise ValueError(
                f"analytic optimum has dimension {len(self.env.optimum)}, policy d={self.d}"
            )

    @property
    def d(self):
        """Policy parameter dimension."""
        return param_count(self.policy)

    def to_dict(self):
        return asdict(self)


def lr_theory(t, H, d, c=1.0):
    """Theory step size ``c sqrt(H / (d t))``."""

    if t < 1:
        raise ValueError(f"iteration t must be >= 1, got {t}")
    return c * math.sqrt(H / (d * t))


def step_size(config, t, alpha_scale=1.0):
    """Step size of iteration t under the configured schedule."""

    if config.schedule == "theory":
        base = lr_theory(t, config.env.horizon, config.d, config.c)
    else:
        base = config.alpha
    return base * alpha_scale


@dataclass(frozen=True, eq=False)
class IterationState:
    """Server state at the start of iteration t.

    ``alpha_scale`` and ``mu`` carry the halving of the accept-reject
    mode; the Adam moments are kept across rejections.
    """

    t: int
    theta: np.ndarray
    mu: float
    partition: object
    alpha_scale: float = 1.0
    adam_m: np.ndarray = None
    adam_v: np.ndarray = None
    adam_steps: int = 0
    rejections: int = 0

    def to_archive(self):
        return self.theta


@dataclass(frozen=True, eq=False)
class AgentDirection:
    """Perturbation held by one agent and the number of coordinates it spans."""

    agent: int
    values: np.ndarray
    size: int

    def to_archive(self):
        return self.values


@dataclass(frozen=True, eq=False)
class UpdateOutcome:
    """Result of the update stage."""

    state: IterationState
    accepted: bool
    server_feedback: int
    alpha: float
    mu: float
    traj_server: int

    def to_archive(self):
        return self.state.theta


def partition_at(config, t):
    """Partition used in iteration t."""

    if config.partition == "contiguous":
        return make_partition(config.d, config.K)
    label = t if config.reshuffle else 0
    rng = RngStream(config.seed, (Role.PARTITION, label))
    return make_partition(config.d, config.K, "shuffled", rng)


def initial_state(config):
    """Initial parameters theta_1, partition, and zero Adam moments."""

    theta = initial_params(config.policy, RngStream(config.seed, (Role.INIT, 0)))
    return IterationState(
        t=1,
        theta=theta,
        mu=config.mu,
        partition=partition_at(config, 1),
        adam_m=np.zeros(config.d),
        adam_v=np.zeros(config.d),
    )


# stage functions


def perturb(state, config, seed):
    """Sample the server perturbation v_t."""

    rng = RngStream(seed, (Role.PERTURB, state.t, 0))
    return sample_perturbation(config.perturbation, config.d, rng)


def split(direction, state):
    """Mask the server perturbation to the agent blocks."""

    partition = state.partition
    return [
        AgentDirection(k, mask_perturbation(direction, partition, k), partition.sizes[k])
        for k in range(partition.K)
    ]


def perturb_agents(state, config, seed):
    """Each agent samples its own full-dimension perturbation."""

    agent_directions = []
    for k in range(config.K):
        rng = RngStream(seed, (Role.PERTURB, state.t, k))
        v = sample_perturbation(config.perturbation, config.d, rng)
        agent_directions.append(AgentDirection(k, np.array(v.values), config.d))
    return agent_directions


def query(agent_direction, state, config, seed):
    """Agent preference query: theta_t against theta_t + mu v."""

    policy = Policy(config.policy, state.theta)
    perturbed = policy.with_params(state.theta + state.mu * agent_direction.values)
    rng = RngStream(seed, (Role.AGENT, state.t, agent_direction.agent))
    return preference_oracle(config.panel, policy, perturbed, config.env, rng)


def aggregate_par(agent_directions, feedback, config):
    """Sum of the signed blocks.

    For binary perturbations the squared norm equals the total size of the
    blocks with non-zero feedback.
    """

    direction = np.zeros(config.d)
    for agent_direction, result in zip(agent_directions, feedback):
        direction += result.feedback * agent_direction.values

    if config.perturbation == "binary":
        expected = sum(p.size for p, r in zip(agent_directions, feedback) if r.feedback != 0)
        sq_norm = float(direction @ direction)
        assert sq_norm == expected, (
            f"aggregated direction has squared norm {sq_norm}, expected {expected}"
        )
    return direction


def aggregate_fedavg(agent_directions, feedback, config):
    """Average of the signed agent perturbations."""

    direction = np.zeros(config.d)
    for agent_direction, result in zip(agent_directions, feedback):
        direction += result.feedback * agent_direction.values
    return direction / len(agent_directions)


def _check_finite(theta, t):
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError(f"non-finite parameters after iteration {t}")


def update(state, direction_hat, config, seed):
    """Move the parameters along the aggregated direction.

    "plain-sgd" takes ``theta + alpha_t g``. "accept-reject-adam" feeds g
    to Adam, clips the step, and keeps the candidate only if the server
    panel prefers it; ``patience`` consecutive rejections halve the step
    size and mu.
    """

    alpha = step_size(config, state.t, state.alpha_scale)

    if config.update == "plain-sgd":
        theta = state.theta + alpha * direction_hat
        _check_finite(theta, state.t)
        new_state = replace(state, t=state.t + 1, theta=param_vector(theta))
        return UpdateOutcome(new_state, True, None, alpha, state.mu, 0)

    adam = config.adam
    steps = state.adam_steps + 1
    m = adam.beta1 * state.adam_m + (1 - adam.beta1) * direction_hat
    v = adam.beta2 * state.adam_v + (1 - adam.beta2) * direction_hat**2
    m_hat = m / (1 - adam.beta1**steps)
    v_hat = v / (1 - adam.beta2**steps)
    step = alpha * m_hat / (np.sqrt(v_hat) + adam.eps)
    norm = np.linalg.norm(step)
    if norm > adam.clip_norm:
        step = step * (adam.clip_norm / norm)

    candidate = state.theta + step
    _check_finite(candidate, state.t)

    policy = Policy(config.policy, state.theta)
    rng = RngStream(seed, (Role.SERVER, state.t))
    result = preference_oracle(
        config.panel, policy, policy.with_params(candidate), config.env, rng
    )
    accepted = result.feedback == 1

    theta = state.theta
    alpha_scale = state.alpha_scale
    mu = state.mu
    rejections = 0
    if accepted:
        theta = param_vector(candidate)
    else:
        rejections = state.rejections + 1
        if rejections >= config.patience:
            alpha_scale /= 2
            mu /= 2
            rejections = 0
            logger.debug("t=%d: %d rejections, halving alpha and mu", state.t, config.patience)

    new_state = replace(
        state,
        t=state.t + 1,
        theta=theta,
        mu=mu,
        alpha_scale=alpha_scale,
        adam_m=m,
        adam_v=v,
        adam_steps=steps,
        rejections=rejections,
    )
    return UpdateOutcome(
        new_state, accepted, result.feedback, alpha, state.mu, result.trajectories
    )


# protocols


def par_protocol(jobs=1, handler=RecordHandler, handler_kwargs=None):
    """Protocol of one partitioned iteration.

    Returns ``(outcome, agent_directions, feedback, direction_hat)``.
    """

    G = ProtocolGraph(name="par")
    G.add_grouped_edges_from(
        [
            ("perturb", "split"),
            ("split", ["query", "aggregate"]),
            ("query", "aggregate"),
            ("aggregate", "update"),
        ]
    )
    G.set_stages_from(
        [
            Stage("perturb", perturb, output="direction"),
            Stage("split", split, output="agent_directions"),
            Stage(
                "query",
                query,
                inputs=["agent_directions", "state", "config", "seed"],
                output="feedback",
                modifiers=[agent_loop(["agent_directions"], jobs), log_time()],
            ),
            Stage("aggregate", aggregate_par, output="direction_hat"),
            Stage("update", update, output="outcome", modifiers=[log_time()]),
        ]
    )
    return Protocol(
        "par_iteration",
        G,
        handler,
        handler_kwargs,
        returns=["outcome", "agent_directions", "feedback", "direction_hat"],
        doc="Partitioned federated iteration.",
    )


def fedavg_protocol(jobs=1, handler=RecordHandler, handler_kwargs=None):
    """Protocol of one FedAvg iteration, same returns as ``par_protocol``."""

    G = ProtocolGraph(name="fedavg")
    G.add_grouped_edges_from(
        [
            ("perturb_agents", ["query", "aggregate"]),
            ("query", "aggregate"),
            ("aggregate", "update"),
        ]
    )
    G.set_stages_from(
        [
            Stage("perturb_agents", perturb_agents, output="agent_directions"),
            Stage(
                "query",
                query,
                inputs=["agent_directions", "state", "config", "seed"],
                output="feedback",
                modifiers=[agent_loop(["agent_directions"], jobs), log_time()],
            ),
            Stage("aggregate", aggregate_fedavg, output="direction_hat"),
            Stage("update", update, output="outcome", modifiers=[log_time()]),
        ]
    )
    return Protocol(
        "fedavg_iteration",
        G,
        handler,
        handler_kwargs,
        returns=["outcome", "agent_directions", "feedback", "direction_hat"],
        doc="FedAvg baseline iteration.",
    )


# ledgers


def iteration_bits(config):
    """Bits exchanged per iteration: perturbation payload plus feedback."""

    payload = payload_bits(config.perturbation, config.d)
    if config.algorithm == "fedavg":
        payload *= config.K
    return payload + config.K * feedback_bits(config.panel.N)


def agent_memory(config):
    """Scalars stored by each agent.

    A partitioned agent keeps the d current parameters and its block of the
    perturbation; a FedAvg agent keeps two full vectors.
    """

    d = config.d
    if config.algorithm == "fedavg":
        return (2 * d,) * config.K
    return tuple(d + size for size in make_partition(d, config.K).sizes)


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration record; trajectory counts are for this iteration only."""

    t: int
    value_mean: float
    value_stderr: float
    feedback: tuple
    server_feedback: int
    accepted: bool
    alpha: float
    mu: float
    bits: int
    traj_optimizer: int
    traj_eval: int
    traj_server: int
    grad_l2: float
    grad_blocksum: float
    direction_sq_norm: float


@dataclass
class Ledger:
    """Run totals. ``traj_optimizer`` is the sample complexity M."""

    bits_total: int = 0
    traj_optimizer: int = 0
    traj_eval: int = 0
    traj_server: int = 0
    memory_per_agent: tuple = ()

    @property
    def traj_total(self):
        return self.traj_optimizer + self.traj_eval + self.traj_server

    def to_dict(self):
        return {
            "bits_total": self.bits_total,
            "traj_optimizer": self.traj_optimizer,
            "traj_eval": self.traj_eval,
            "traj_server": self.traj_server,
            "traj_total": self.traj_total,
            "memory_per_agent": list(self.memory_per_agent),
        }


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunTrace:
    """Header, iteration records, ledger, and final evaluation of a run.

    ``final`` is the ``(mean, stderr)`` evaluation of theta_{T+1}.
    ``checkpoints`` maps an iteration t to the base64 blob of theta_{t+1}.
    """

    header: dict
    records: list = field(default_factory=list)
    ledger: Ledger = field(default_factory=Ledger)
    final: tuple = None
    checkpoints: dict = field(default_factory=dict)
    failure: str = None

    def append(self, record):
        """Add a record and update the ledger."""

        self.records.append(record)
        self.ledger.bits_total += record.bits
        self.ledger.traj_optimizer += record.traj_optimizer
        self.ledger.traj_eval += record.traj_eval
        self.ledger.traj_server += record.traj_server

    def rows(self):
        """Rows of ``trace.csv``; trajectory columns are cumulative."""

        rows = []
        traj_optimizer = 0
        traj_eval = 0
        for r in self.records:
            traj_optimizer += r.traj_optimizer
            traj_eval += r.traj_eval
            values = (
                r.t,
                r.value_mean,
                r.value_stderr,
                r.accepted,
                r.alpha,
                r.mu,
                r.bits,
                traj_optimizer,
                traj_eval,
                r.grad_l2,
                r.grad_blocksum,
            )
            rows.append([_cell(v) for v in values])
        return rows

    def summary(self):
        final_mean, final_stderr = self.final if self.final else (None, None)
        return {
            "final_value_mean": final_mean,
            "final_value_stderr": final_stderr,
            "iterations": len(self.records),
            "traj_total": self.ledger.traj_total,
            "bits_total": self.ledger.bits_total,
        }

    def to_dict(self):
        return {
            "header": self.header,
            "records": [
                {
                    "t": r.t,
                    "feedback": list(r.feedback),
                    "server_feedback": r.server_feedback,
                    "direction_sq_norm": r.direction_sq_norm,
                }
                for r in self.records
            ],
            "ledger": self.ledger.to_dict(),
            "summary": self.summary(),
            "checkpoints": {str(t): blob for t, blob in self.checkpoints.items()},
            "failure": self.failure,
        }

    def write(self, directory):
        """Write ``trace.csv`` and ``run.json`` into the directory."""

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "trace.csv", "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            writer.writerows(self.rows())
        with open(directory / "run.json", "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")


def run_header(config):
    return {
        "config": config.to_dict(),
        "generator": GENERATOR,
        "version": parzpo.__version__,
        "seed": config.seed,
    }


def iterate(protocol, state, config):
    """Evaluate theta_t, run one protocol iteration, and build its record."""

    seed = config.seed
    policy = Policy(config.policy, state.theta)
    value_mean, value_stderr = evaluate_policy(
        config.env, policy, config.eval_episodes, RngStream(seed, (Role.EVAL, state.t))
    )

    grad_l2 = grad_blocksum = None
    if config.env.kind == "analytic-quadratic":
        grad = true_gradient(config.env, state.theta)
        grad_l2 = float(np.linalg.norm(grad))
        grad_blocksum = block_sum_norm(grad, state.partition)

    outcome, agent_directions, feedback, direction_hat = protocol(
        state=state, config=config, seed=seed
    )
    record = IterationRecord(
        t=state.t,
        value_mean=value_mean,
        value_stderr=value_stderr,
        feedback=tuple(r.feedback for r in feedback),
        server_feedback=outcome.server_feedback,
        accepted=outcome.accepted,
        alpha=outcome.alpha,
        mu=outcome.mu,
        bits=iteration_bits(config),
        traj_optimizer=sum(r.trajectories for r in feedback),
        traj_eval=config.eval_episodes,
        traj_server=outcome.traj_server,
        grad_l2=grad_l2,
        grad_blocksum=grad_blocksum,
        direction_sq_norm=float(direction_hat @ direction_hat),
    )
    return outcome.state, record


def build_protocol(config, jobs=1, archive=None):
    """Iteration protocol of the configured algorithm.

    With an archive file name every intermediate value is written to HDF5
    under the group ``seed<seed>``.
    """

    handler, handler_kwargs = RecordHandler, None
    if archive:
        handler = H5Handler
        handler_kwargs = {"fname": str(archive), "gname": f"seed{config.seed}"}
    builder = par_protocol if config.algorithm == "par" else fedavg_protocol
    return builder(jobs, handler, handler_kwargs)


def par_iteration(state, config, protocol=None):
    """One partitioned iteration, ``(new_state, record)``."""

    return iterate(protocol or par_protocol(), state, config)


def fedavg_iteration(state, config, protocol=None):
    """One FedAvg iteration, ``(new_state, record)``."""

    return iterate(protocol or fedavg_protocol(), state, config)


def empty_trace(config):
    """Header-only trace of a run before its first iteration."""

    return RunTrace(run_header(config), ledger=Ledger(memory_per_agent=agent_memory(config)))


def run(config, jobs=1, archive=None):
    """Run T iterations and return the trace.

    A failing stage raises ``ProtocolError``. Any failure after the start
    carries the partial trace as ``err.trace``.
    """

    protocol = build_protocol(config, jobs, archive)
    trace = empty_trace(config)
    logger.info(
        "run start: algorithm=%s d=%d K=%d T=%d seed=%d",
        config.algorithm,
        config.d,
        config.K,
        config.T,
        config.seed,
    )

    state = initial_state(config)
    try:
        for t in range(1, config.T + 1):
            if config.reshuffle and t > 1:
                state = replace(state, partition=partition_at(config, t))
            state, record = iterate(protocol, state, config)
            trace.append(record)
            if config.checkpoint_every and t % config.checkpoint_every == 0:
                trace.checkpoints[t] = params_to_base64(state.theta)
            logger.debug(
                "t=%d value=%.4f accepted=%s feedback=%s",
                t,
                record.value_mean,
                record.accepted,
                record.feedback,
            )
        if config.T > 0:
            policy = Policy(config.policy, state.theta)
            trace.final = evaluate_policy(
                config.env,
                policy,
                config.eval_episodes,
                RngStream(config.seed, (Role.EVAL, config.T + 1)),
            )
            trace.ledger.traj_eval += config.eval_episodes
    except ProtocolError as err:
        trace.failure = str(err)
        err.trace = trace
        logger.warning("run seed=%d failed in stage %r", config.seed, err.stage)
        raise
    except Exception as err:
        trace.failure = f"{type(err).__name__}: {err}"
        err.trace = trace
        raise

    if trace.final:
        logger.info("run finished: final value %.4f", trace.final[0])
    return trace


def sample_theta_R(trace, rng, T=None):
    """Draw an iteration index with probability proportional to alpha_t.

    With T only the first T iterations are candidates.
    """

    records = trace.records if T is None else trace.records[:T]
    if not records:
        raise ValueError("cannot sample from an empty trace")
    weights = np.array([r.alpha for r in records])
    index = rng.generator.choice(len(weights), p=weights / weights.sum())
    return records[index].t
