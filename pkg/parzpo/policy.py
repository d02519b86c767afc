"""Forward-only parameterized policies with a flat parameter layout.

Parameter layout is layer-major; within a layer all weights come first,
then the bias. Weight matrices have shape (fan_out, fan_in) and are stored
row-major, so row j of a linear policy occupies coordinates
``j * fan_in .. (j + 1) * fan_in - 1``.
"""

from dataclasses import dataclass
import base64
import numpy as np
from parzpo.core import param_vector

POLICY_KINDS = ("linear", "mlp")


@dataclass(frozen=True)
class PolicySpec:
    """Policy architecture.

    :param str kind: "linear" or "mlp"
    :param int input_dim: state dimension
    :param int output_dim: action dimension
    :param tuple hidden: hidden layer widths (mlp only)
    :param float action_noise: standard deviation of the Gaussian exploration
        noise added to each action coordinate; 0 is deterministic
    """

    kind: str = "linear"
    input_dim: int = 1
    output_dim: int = 1
    hidden: tuple = (64, 64)
    action_noise: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("policy input and output dimensions must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind == "mlp" and (
            not self.hidden or any(h < 1 for h in self.hidden)
        ):
            raise ValueError("mlp hidden widths must be positive")
        if self.action_noise < 0:
            raise ValueError("action_noise must be non-negative")

    @property
    def layers(self):
        """List of (fan_in, fan_out) per layer."""

        if self.kind == "linear":
            widths = [self.input_dim, self.output_dim]
        else:
            widths = [self.input_dim, *self.hidden, self.output_dim]
        return list(zip(widths[:-1], widths[1:]))


def param_count(spec):
    """Flat parameter dimension d, biases included."""

    return sum((fan_in + 1) * fan_out for fan_in, fan_out in spec.layers)


class Policy:
    """Policy instance: a spec and a flat parameter vector.

    The instance is immutable; ``with_params`` returns a new policy.
    """

    def __init__(self, spec, params):
        self.spec = spec
        self._params = param_vector(params, param_count(spec))
        self._layers = self._unflatten(self._params)

    def _unflatten(self, params):
        layers = []
        start = 0
        for fan_in, fan_out in self.spec.layers:
            weight = params[start : start + fan_in * fan_out].reshape(fan_out, fan_in)
            start += fan_in * fan_out
            bias = params[start : start + fan_out]
            start += fan_out
            layers.append((weight, bias))
        return layers

    @property
    def d(self):
        return self._params.size

    def get_params(self):
        """Return the flat (read-only) parameter vector."""
        return self._params

    def with_params(self, params):
        """Return a policy with the same spec and new parameters."""
        return self.__class__(self.spec, params)

    def forward(self, s):
        """Network output for state s: tanh hidden layers, identity output."""

        x = np.asarray(s, dtype=float)
        if x.shape != (self.spec.input_dim,):
            raise ValueError(
                f"state dimension {x.size} does not match policy input "
                f"dimension {self.spec.input_dim}"
            )
        last = len(self._layers) - 1
        for i, (weight, bias) in enumerate(self._layers):
            x = weight @ x + bias
            if i < last:
                x = np.tanh(x)
        return x

    def act(self, h, s, rng=None):
        """Action at step h (1-based) in state s.

        The policy is stationary; h is validated but does not enter the
        computation.
        """

        if h < 1:
            raise ValueError(f"step index h must be >= 1, got {h}")
        action = self.forward(s)
        if self.spec.action_noise > 0:
            if rng is None:
                raise ValueError("an rng stream is required for exploration noise")
            action = action + self.spec.action_noise * rng.generator.standard_normal(
                action.size
            )
        return action

    def __repr__(self):
        return f"Policy(kind={self.spec.kind!r}, d={self.d})"


def set_params(policy, params):
    """Functional form of ``Policy.with_params``."""
    return policy.with_params(params)


def get_params(policy):
    """Functional form of ``Policy.get_params``."""
    return policy.get_params()


def initial_params(spec, rng, scale=1.0):
    """Scaled Gaussian weights (std ``scale / sqrt(fan_in)``), zero biases."""

    blocks = []
    for fan_in, fan_out in spec.layers:
        weight = rng.generator.standard_normal(fan_in * fan_out)
        blocks.append(weight * scale / np.sqrt(fan_in))
        blocks.append(np.zeros(fan_out))
    return param_vector(np.concatenate(blocks))


def params_to_base64(params):
    """Encode parameters as base64 of IEEE-754 little-endian doubles."""

    data = np.asarray(params, dtype="<f8").tobytes()
    return base64.b64encode(data).decode("ascii")


def params_from_base64(blob):
    """Decode a base64 parameter blob."""

    return param_vector(np.frombuffer(base64.b64decode(blob), dtype="<f8"))
