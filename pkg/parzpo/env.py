"""Episodic environments with trajectory-level rewards in ``[0, H]``.

Three kinds are built in:

- "analytic-quadratic": the reward depends on the policy parameters
  only, through ``V(theta) = H / (1 + |theta - theta*|^2 / w)``. Its
  trajectory is a dummy H-step record and ``true_value``/``true_gradient``
  give the exact value and gradient.
- "linear-control": linear dynamics with a quadratic cost; the reward is
  ``H - cost / cost_scale``.
- "gridworld": the policy output is read as logits over
  (up, down, left, right); the reward is ``H`` minus the first-arrival
  step at the goal, 0 if the goal is never reached.

All kinds add ``N(0, noise^2)`` to the trajectory reward and clip the
result into ``[0, H]``.
"""

from dataclasses import dataclass
import numpy as np
from parzpo.core import Role, RngStream, param_vector
from parzpo.policy import param_count

ENV_KINDS = ("analytic-quadratic", "linear-control", "gridworld")

# (row, col) offsets of up, down, left, right
GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class Trajectory:
    """H (state, action) pairs and the trajectory reward."""

    steps: tuple
    reward: float

    def __post_init__(self):
        if not 0.0 <= self.reward <= len(self.steps):
            raise ValueError(
                f"reward {self.reward} outside [0, {len(self.steps)}]"
            )

    @property
    def horizon(self):
        return len(self.steps)


@dataclass(frozen=True)
class EnvSpec:
    """Environment description; kind-specific fields are ignored elsewhere.

    :param str kind: one of ``ENV_KINDS``
    :param int horizon: H
    :param int state_dim: state dimension
    :param int action_dim: action dimension
    :param float noise: reward noise standard deviation
    :param tuple optimum: theta* (analytic)
    :param float width: w (analytic)
    :param tuple dynamics: A as a tuple of rows (linear-control)
    :param tuple control: B as a tuple of rows (linear-control)
    :param float control_cost: action cost weight r (linear-control)
    :param float init_scale: initial state standard deviation (linear-control)
    :param tuple init_mean: initial state mean, empty for zeros (linear-control)
    :param float cost_scale: cost-to-reward divisor (linear-control)
    :param float state_bound: state saturation (linear-control)
    :param float action_bound: action saturation (linear-control)
    :param tuple grid: (rows, cols) (gridworld)
    :param tuple start: 1-based start cell (gridworld)
    :param tuple goal: 1-based goal cell (gridworld)
    """

    kind: str
    horizon: int = 10
    state_dim: int = 1
    action_dim: int = 1
    noise: float = 0.0
    optimum: tuple = ()
    width: float = 1.0
    dynamics: tuple = ()
    control: tuple = ()
    control_cost: float = 0.1
    init_scale: float = 1.0
    init_mean: tuple = ()
    cost_scale: float = 8.0
    state_bound: float = 10.0
    action_bound: float = 5.0
    grid: tuple = (5, 5)
    start: tuple = (1, 1)
    goal: tuple = (5, 5)

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.noise < 0:
            raise ValueError(f"noise must be non-negative, got {self.noise}")
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state and action dimensions must be positive")

        if self.kind == "analytic-quadratic":
            if not self.optimum:
                raise ValueError("analytic environment requires an optimum")
            if self.width <= 0:
                raise ValueError("analytic width must be positive")
        elif self.kind == "linear-control":
            A = np.asarray(self.dynamics, dtype=float)
            B = np.asarray(self.control, dtype=float)
            if A.shape != (self.state_dim, self.state_dim):
                raise ValueError("dynamics must be a state_dim x state_dim matrix")
            if B.shape != (self.state_dim, self.action_dim):
                raise ValueError("control must be a state_dim x action_dim matrix")
            if self.cost_scale <= 0:
                raise ValueError("cost_scale must be positive")
            if self.init_mean and len(self.init_mean) != self.state_dim:
                raise ValueError("init_mean must have state_dim entries")
        else:
            rows, cols = self.grid
            if rows < 1 or cols < 1:
                raise ValueError("grid dimensions must be positive")
            for name, (r, c) in (("start", self.start), ("goal", self.goal)):
                if not (1 <= r <= rows and 1 <= c <= cols):
                    raise ValueError(f"{name} cell {(r, c)} is outside the grid")
            if self.state_dim != 2 or self.action_dim != len(GRID_MOVES):
                raise ValueError("gridworld uses state_dim=2 and action_dim=4")


def analytic_env(policy_spec, horizon=10, noise=0.0, width=None, scale=1.0, seed=0):
    """Analytic environment matched to a policy architecture.

    The optimum theta* is drawn from ``N(0, scale^2)`` with a stream of the
    given seed; the width defaults to the parameter dimension d.
    """

    d = param_count(policy_spec)
    rng = RngStream(seed, (Role.INIT, 1))
    optimum = scale * rng.generator.standard_normal(d)
    return EnvSpec(
        "analytic-quadratic",
        horizon=horizon,
        state_dim=policy_spec.input_dim,
        action_dim=policy_spec.output_dim,
        noise=noise,
        optimum=tuple(float(x) for x in optimum),
        width=float(d if width is None else width),
    )


def linear_control_env(horizon=20, noise=0.0, dt=0.1, axes=2, **kwargs):
    """Decoupled double integrators, one per control axis."""

    n = 2 * axes
    A = np.eye(n)
    B = np.zeros((n, axes))
    for i in range(axes):
        A[2 * i, 2 * i + 1] = dt
        B[2 * i + 1, i] = dt
    return EnvSpec(
        "linear-control",
        horizon=horizon,
        state_dim=n,
        action_dim=axes,
        noise=noise,
        dynamics=tuple(tuple(row) for row in A.tolist()),
        control=tuple(tuple(row) for row in B.tolist()),
        **kwargs,
    )


def gridworld_env(horizon=12, grid=(5, 5), start=(1, 1), goal=(5, 5), noise=0.0):
    """Grid navigation toward a goal cell."""

    return EnvSpec(
        "gridworld",
        horizon=horizon,
        state_dim=2,
        action_dim=len(GRID_MOVES),
        noise=noise,
        grid=tuple(grid),
        start=tuple(start),
        goal=tuple(goal),
    )


def check_compatible(env, policy):
    """Raise ValueError if the policy does not fit the environment."""

    spec = policy.spec
    if spec.input_dim != env.state_dim or spec.output_dim != env.action_dim:
        raise ValueError(
            f"policy dims ({spec.input_dim}, {spec.output_dim}) do not match "
            f"environment dims ({env.state_dim}, {env.action_dim})"
        )
    if env.kind == "analytic-quadratic" and policy.d != len(env.optimum):
        raise ValueError(
            f"policy dimension {policy.d} does not match analytic optimum "
            f"dimension {len(env.optimum)}"
        )


def _finish(env, steps, raw_reward, rng):
    if env.noise > 0:
        raw_reward += env.noise * rng.generator.standard_normal()
    reward = float(np.clip(raw_reward, 0.0, env.horizon))
    return Trajectory(tuple(steps), reward)


def _analytic_rollout(env, policy, rng):
    state = np.zeros(env.state_dim)
    steps = [(state, policy.act(h, state, rng)) for h in range(1, env.horizon + 1)]
    return _finish(env, steps, true_value(env, policy.get_params()), rng)


def _linear_control_rollout(env, policy, rng):
    A = np.asarray(env.dynamics)
    B = np.asarray(env.control)
    state = env.init_scale * rng.generator.standard_normal(env.state_dim)
    if env.init_mean:
        state = state + np.asarray(env.init_mean)
    cost = 0.0
    steps = []
    for h in range(1, env.horizon + 1):
        action = np.clip(policy.act(h, state, rng), -env.action_bound, env.action_bound)
        steps.append((state, action))
        cost += state @ state + env.control_cost * (action @ action)
        state = np.clip(A @ state + B @ action, -env.state_bound, env.state_bound)
    return _finish(env, steps, env.horizon - cost / env.cost_scale, rng)


def _grid_state(env, cell):
    rows, cols = env.grid
    return np.array(
        [
            (cell[0] - env.goal[0]) / max(rows - 1, 1),
            (cell[1] - env.goal[1]) / max(cols - 1, 1),
        ]
    )


def _gridworld_rollout(env, policy, rng):
    rows, cols = env.grid
    cell = tuple(env.start)
    arrival = 0 if cell == tuple(env.goal) else None
    steps = []
    for h in range(1, env.horizon + 1):
        state = _grid_state(env, cell)
        logits = policy.act(h, state, rng)
        steps.append((state, logits))
        if arrival is not None:
            continue  # the goal is absorbing
        dr, dc = GRID_MOVES[int(np.argmax(logits))]
        cell = (min(max(cell[0] + dr, 1), rows), min(max(cell[1] + dc, 1), cols))
        if cell == tuple(env.goal):
            arrival = h
    raw = 0.0 if arrival is None else float(env.horizon - arrival)
    return _finish(env, steps, raw, rng)


_ROLLOUTS = {
    "analytic-quadratic": _analytic_rollout,
    "linear-control": _linear_control_rollout,
    "gridworld": _gridworld_rollout,
}


def rollout(env, policy, rng):
    """Sample one trajectory of the policy in the environment."""

    check_compatible(env, policy)
    return _ROLLOUTS[env.kind](env, policy, rng)


def sample_batch(env, policy, D, rng):
    """Sample a batch of D independent trajectories."""

    if D < 1:
        raise ValueError(f"batch size D must be >= 1, got {D}")
    return [rollout(env, policy, rng) for _ in range(D)]


def batch_mean_reward(batch):
    """Arithmetic mean of the trajectory rewards of a batch."""

    if len(batch) == 0:
        raise ValueError("cannot average an empty batch")
    return float(np.mean([traj.reward for traj in batch]))


def evaluate_policy(env, policy, episodes, rng):
    """Mean reward and its standard error over fresh episodes."""

    rewards = np.array([rollout(env, policy, rng).reward for _ in range(episodes)])
    stderr = rewards.std(ddof=1) / np.sqrt(episodes) if episodes > 1 else 0.0
    return float(rewards.mean()), float(stderr)


def _require_analytic(env, name):
    if env.kind != "analytic-quadratic":
        raise NotImplementedError(
            f"{name} is only available for the analytic-quadratic environment, "
            f"not {env.kind!r}"
        )


def true_value(env, theta):
    """Exact value ``H / (1 + |theta - theta*|^2 / w)``.

    theta may be a single vector or an (n, d) stack of vectors.
    """

    _require_analytic(env, "true_value")
    offset = np.asarray(theta, dtype=float) - np.asarray(env.optimum)
    distance = np.sum(offset**2, axis=-1)
    value = env.horizon / (1.0 + distance / env.width)
    return float(value) if np.ndim(value) == 0 else value


def true_gradient(env, theta):
    """Closed-form gradient of ``true_value``."""

    _require_analytic(env, "true_gradient")
    offset = np.asarray(theta, dtype=float) - np.asarray(env.optimum)
    ratio = 1.0 + np.sum(offset**2) / env.width
    return param_vector(-2.0 * env.horizon * offset / (env.width * ratio**2))


def smoothness_constant(env):
    """Smoothness bound L of the analytic value: ``2H / w``.

    The Hessian eigenvalues of ``1 / (1 + u)``, ``u = |x|^2 / w``, lie in
    ``[-2 / w, 1 / (2w)]``.
    """

    _require_analytic(env, "smoothness_constant")
    return 2.0 * env.horizon / env.width
