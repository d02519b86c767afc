"""Configuration for testing.

Graph fixtures exercise the protocol framework with small arithmetic
stages; the algorithm fixtures build small configurations on the analytic
environment.

1. `arith_G` - arithmetic protocol graph built with ProtocolGraph
2. `policy_spec`, `analytic`, `sign_panel`, `small_config` - algorithm inputs
3. `manifest_data`, `manifest_file` - study manifest
"""

import json
import math
from functools import wraps
from inspect import Parameter, Signature

import pytest

from parzpo.env import analytic_env
from parzpo.federate import RunConfig
from parzpo.graph import ProtocolGraph
from parzpo.policy import PolicySpec
from parzpo.preference import LinkFunction, PanelSpec
from parzpo.stage import Stage


def addition(a, constant=2):
    """Add a constant to the value a."""
    return a + constant


def subtract(x, y):
    return x - y


def power(base, exponent):
    return base**exponent


def multiply(x, y):
    return x * y


def logarithm(c, b):
    """Logarithm operation."""
    return math.log(c, b)


add_stage = Stage("add", addition, output="c")
sub_stage = Stage("subtract", subtract, ["c", "d"], "e")
power_stage = Stage("power", power, ["c", "f"], "g")
multi_stage = Stage("multiply", multiply, ["e", "g"], "k")
log_stage = Stage("log", logarithm, output="m")


@pytest.fixture()
def arith_G():
    """Arithmetic protocol graph.

    The inputs are a, b, d, f and the results are:
    k = (a + 2 - d)(a + 2)^f
    m = log(a + 2, b)
    """

    G = ProtocolGraph(name="arith")
    G.add_grouped_edges_from(
        [
            ("add", ["subtract", "power", "log"]),
            (["subtract", "power"], "multiply"),
        ]
    )
    G.set_stages_from([add_stage, sub_stage, power_stage, multi_stage, log_stage])
    return G


@pytest.fixture(scope="module")
def arith_signature():
    """Signature of protocols built from arith_G."""

    return Signature([Parameter(name, 1) for name in ("a", "b", "d", "f")])


@pytest.fixture
def value_modifier():
    """Return a modifier that adds a value to the result."""

    def add_value(value):
        def mod(func):
            @wraps(func)
            def wrapped(*args, **kwargs):
                return func(*args, **kwargs) + value

            return wrapped

        return mod

    return add_value


@pytest.fixture(scope="session")
def policy_spec():
    """Linear 7 -> 8 policy, d = 64."""
    return PolicySpec("linear", 7, 8)


@pytest.fixture(scope="session")
def analytic(policy_spec):
    """Noiseless analytic environment, H = 10."""
    return analytic_env(policy_spec, horizon=10, seed=3)


@pytest.fixture(scope="session")
def sign_panel():
    """Exact sign feedback: one panelist with the step link."""
    return PanelSpec(P=1, N=1, D=1, link=LinkFunction("step"))


@pytest.fixture
def small_config(analytic, policy_spec, sign_panel):
    """Plain-SGD partitioned run with four agents."""

    return RunConfig(
        analytic,
        policy_spec,
        K=4,
        T=6,
        schedule="theory",
        update="plain-sgd",
        panel=sign_panel,
        eval_episodes=3,
        seed=11,
    )


@pytest.fixture
def manifest_data():
    """Small k-study manifest on the noiseless analytic environment."""

    return {
        "study": "k-study",
        "name": "kstudy",
        "seeds": [0, 1],
        "sweep": [1, 2],
        "env": {"kind": "analytic-quadratic", "horizon": 10, "seed": 3},
        "policy": {"kind": "linear"},
        "T": 3,
        "schedule": "theory",
        "update": "plain-sgd",
        "panel": {"P": 1, "N": 1, "D": 1, "link": {"kind": "step"}},
        "eval_episodes": 2,
    }


@pytest.fixture
def manifest_file(tmp_path, manifest_data):
    """The manifest written to a JSON file."""

    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest_data))
    return path
