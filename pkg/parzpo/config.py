"""JSON experiment manifests.

A manifest is one JSON object. The manifest keys (``study``, ``name``,
``seeds``, ``sweep``, ``budget``, ``output``, ``checks``) sit next to the
run keys (``env``, ``policy``, ``K``, ``T``, ...). ``env`` and ``T`` are
required, everything else has a default. Unknown keys are errors, and
every error message starts with the dotted key path.
"""

from dataclasses import dataclass, replace
import json
import logging
from parzpo.env import analytic_env, gridworld_env, linear_control_env
from parzpo.federate import (
    ALGORITHMS,
    PARTITION_MODES,
    SCHEDULES,
    UPDATE_MODES,
    AdamSettings,
    RunConfig,
)
from parzpo.perturb import KINDS
from parzpo.policy import POLICY_KINDS, PolicySpec, param_count
from parzpo.preference import LINK_KINDS, LinkFunction, PanelSpec

logger = logging.getLogger(__name__)

STUDY_KINDS = (
    "single-run",
    "k-study",
    "d-study",
    "perturbation-compare",
    "baseline-compare",
    "verify-all",
)

# sweep defaults of the comparison studies
DEFAULT_SWEEPS = {
    "perturbation-compare": KINDS,
    "baseline-compare": ALGORITHMS,
}

MANIFEST_KEYS = ("study", "name", "seeds", "sweep", "budget", "output", "checks")
RUN_KEYS = (
    "env",
    "policy",
    "K",
    "T",
    "algorithm",
    "partition",
    "reshuffle",
    "perturbation",
    "mu",
    "schedule",
    "alpha",
    "c",
    "update",
    "adam",
    "patience",
    "panel",
    "eval_episodes",
    "checkpoint_every",
)

ENV_KEYS = {
    "analytic-quadratic": ("horizon", "noise", "width", "scale", "seed", "optimum"),
    "linear-control": (
        "horizon",
        "noise",
        "dt",
        "axes",
        "control_cost",
        "init_scale",
        "init_mean",
        "cost_scale",
        "state_bound",
        "action_bound",
    ),
    "gridworld": ("horizon", "noise", "grid", "start", "goal"),
}

DEFAULT_HORIZONS = {"analytic-quadratic": 10, "linear-control": 20, "gridworld": 12}


class ConfigError(ValueError):
    """Invalid manifest; the message starts with the key path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _check_keys(data, allowed, path):
    if not isinstance(data, dict):
        raise ConfigError(path or "config", "expected an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(_join(path, key), "unknown key")


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _real(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(path, f"must be positive, got {value}")
    if not positive and value < 0:
        raise ConfigError(path, f"must be non-negative, got {value}")
    return float(value)


def _boolean(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true or false, got {value!r}")
    return value


def _choice(value, path, choices):
    if value not in choices:
        raise ConfigError(path, f"must be one of {list(choices)}, got {value!r}")
    return value


def _int_list(value, path, length=None, minimum=None):
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {value!r}")
    if length is not None and len(value) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(value)}")
    return tuple(_integer(v, f"{path}[{i}]", minimum) for i, v in enumerate(value))


def _number_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {value!r}")
    for i, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{path}[{i}]", f"expected a number, got {x!r}")
    return tuple(float(x) for x in value)


def _build(path, cls, **kwargs):
    """Construct a config type, reporting its ValueError under the path."""

    try:
        return cls(**kwargs)
    except ValueError as err:
        raise ConfigError(path, str(err)) from err


def parse_policy(data, env_kind, env_data):
    """Policy spec; the dimensions follow from the environment kind."""

    data = {} if data is None else data
    _check_keys(data, ("kind", "input_dim", "output_dim", "hidden", "action_noise"), "policy")

    if env_kind == "linear-control":
        axes = _integer(env_data.get("axes", 2), "env.axes", 1)
        dims = (2 * axes, axes)
    elif env_kind == "gridworld":
        dims = (2, 4)
    else:
        dims = (7, 8)

    input_dim = _integer(data.get("input_dim", dims[0]), "policy.input_dim", 1)
    output_dim = _integer(data.get("output_dim", dims[1]), "policy.output_dim", 1)
    if env_kind != "analytic-quadratic" and (input_dim, output_dim) != dims:
        raise ConfigError(
            "policy.input_dim", f"{env_kind} requires (input_dim, output_dim) = {dims}"
        )

    noise_default = 1.0 if env_kind == "gridworld" else 0.0
    return _build(
        "policy",
        PolicySpec,
        kind=_choice(data.get("kind", "linear"), "policy.kind", POLICY_KINDS),
        input_dim=input_dim,
        output_dim=output_dim,
        hidden=_int_list(data.get("hidden", [64, 64]), "policy.hidden", minimum=1),
        action_noise=_real(data.get("action_noise", noise_default), "policy.action_noise"),
    )


def parse_env(data, policy):
    """Environment spec; the analytic optimum is generated here."""

    kind = _choice(data.get("kind"), "env.kind", ENV_KEYS)
    _check_keys(data, ("kind", *ENV_KEYS[kind]), "env")

    def number(key, default, positive=False):
        return _real(data.get(key, default), f"env.{key}", positive)

    horizon = _integer(data.get("horizon", DEFAULT_HORIZONS[kind]), "env.horizon", 1)
    noise = number("noise", 0.0)

    if kind == "analytic-quadratic":
        width = data.get("width")
        env = _build(
            "env",
            analytic_env,
            policy_spec=policy,
            horizon=horizon,
            noise=noise,
            width=None if width is None else _real(width, "env.width", True),
            scale=number("scale", 1.0, True),
            seed=_integer(data.get("seed", 0), "env.seed", 0),
        )
        if "optimum" in data:
            optimum = data["optimum"]
            d = param_count(policy)
            if not isinstance(optimum, list) or len(optimum) != d:
                raise ConfigError("env.optimum", f"expected a list of {d} numbers")
            env = replace(env, optimum=_number_list(optimum, "env.optimum"))
        return env

    if kind == "linear-control":
        return _build(
            "env",
            linear_control_env,
            horizon=horizon,
            noise=noise,
            dt=number("dt", 0.1, True),
            axes=_integer(data.get("axes", 2), "env.axes", 1),
            control_cost=number("control_cost", 0.1),
            init_scale=number("init_scale", 1.0),
            init_mean=_number_list(data.get("init_mean", []), "env.init_mean"),
            cost_scale=number("cost_scale", 8.0, True),
            state_bound=number("state_bound", 10.0, True),
            action_bound=number("action_bound", 5.0, True),
        )

    return _build(
        "env",
        gridworld_env,
        horizon=horizon,
        grid=_int_list(data.get("grid", [5, 5]), "env.grid", 2, 1),
        start=_int_list(data.get("start", [1, 1]), "env.start", 2, 1),
        goal=_int_list(data.get("goal", [5, 5]), "env.goal", 2, 1),
        noise=noise,
    )


def parse_panel(data):
    data = {} if data is None else data
    _check_keys(data, ("P", "N", "D", "link"), "panel")
    link = data.get("link", {})
    _check_keys(link, ("kind", "a", "beta"), "panel.link")

    N = _integer(data.get("N", 1), "panel.N", 1)
    if N % 2 == 0:
        logger.warning("panel.N=%d is even; agent feedback may be 0", N)

    return _build(
        "panel",
        PanelSpec,
        P=_integer(data.get("P", 100), "panel.P", 1),
        N=N,
        D=_integer(data.get("D", 1), "panel.D", 1),
        link=_build(
            "panel.link",
            LinkFunction,
            kind=_choice(link.get("kind", "linear"), "panel.link.kind", LINK_KINDS),
            a=_real(link.get("a", 0.01), "panel.link.a", True),
            beta=_real(link.get("beta", 1.0), "panel.link.beta", True),
        ),
    )


def parse_adam(data):
    data = {} if data is None else data
    _check_keys(data, ("beta1", "beta2", "eps", "clip_norm"), "adam")
    return _build(
        "adam",
        AdamSettings,
        beta1=_real(data.get("beta1", 0.9), "adam.beta1"),
        beta2=_real(data.get("beta2", 0.999), "adam.beta2"),
        eps=_real(data.get("eps", 1e-8), "adam.eps", True),
        clip_norm=_real(data.get("clip_norm", 1.0), "adam.clip_norm", True),
    )


def parse_run(data, seed=0):
    """Build a ``RunConfig`` from the run keys of a manifest."""

    if "env" not in data:
        raise ConfigError("env", "missing required key")
    if "T" not in data:
        raise ConfigError("T", "missing required key")

    env_data = data["env"]
    _check_keys(env_data, ("kind", *{k for keys in ENV_KEYS.values() for k in keys}), "env")
    env_kind = _choice(env_data.get("kind"), "env.kind", ENV_KEYS)
    policy = parse_policy(data.get("policy"), env_kind, env_data)
    env = parse_env(env_data, policy)

    d = param_count(policy)
    K = _integer(data.get("K", 1), "K", 1)
    if K > d:
        raise ConfigError("K", f"must be <= d={d}, got {K}")

    return _build(
        "config",
        RunConfig,
        env=env,
        policy=policy,
        K=K,
        T=_integer(data["T"], "T", 0),
        algorithm=_choice(data.get("algorithm", "par"), "algorithm", ALGORITHMS),
        partition=_choice(data.get("partition", "contiguous"), "partition", PARTITION_MODES),
        reshuffle=_boolean(data.get("reshuffle", False), "reshuffle"),
        perturbation=_choice(data.get("perturbation", "binary"), "perturbation", KINDS),
        mu=_real(data.get("mu", 0.05), "mu", True),
        schedule=_choice(data.get("schedule", "constant"), "schedule", SCHEDULES),
        alpha=_real(data.get("alpha", 0.01), "alpha", True),
        c=_real(data.get("c", 1.0), "c", True),
        update=_choice(data.get("update", "accept-reject-adam"), "update", UPDATE_MODES),
        adam=parse_adam(data.get("adam")),
        patience=_integer(data.get("patience", 3), "patience", 1),
        panel=parse_panel(data.get("panel")),
        eval_episodes=_integer(data.get("eval_episodes", 20), "eval_episodes", 1),
        checkpoint_every=_integer(data.get("checkpoint_every", 0), "checkpoint_every", 0),
        seed=seed,
    )


@dataclass(frozen=True)
class ExperimentManifest:
    """Validated experiment manifest.

    :param str study: one of ``STUDY_KINDS``
    :param str name: study directory name
    :param RunConfig base: base run configuration (seed of the first seed)
    :param tuple sweep: sweep values of the study kind
    :param tuple seeds: run seeds
    :param int budget: fixed optimizer trajectory budget M, or None
    :param str output: output directory, or None
    :param tuple checks: check names of a verify-all study
    """

    study: str
    name: str
    base: RunConfig
    sweep: tuple = ()
    seeds: tuple = (0,)
    budget: int = None
    output: str = None
    checks: tuple = ()

    def to_dict(self):
        """Resolved manifest, generated constants included."""

        return {
            "study": self.study,
            "name": self.name,
            "seeds": list(self.seeds),
            "sweep": list(self.sweep),
            "budget": self.budget,
            "output": self.output,
            "checks": list(self.checks),
            "run": self.base.to_dict(),
        }


def _parse_sweep(study, values, base):
    if values is None:
        values = list(DEFAULT_SWEEPS.get(study, ()))
    if not isinstance(values, list):
        raise ConfigError("sweep", "expected a list")

    if study in ("single-run", "verify-all"):
        if values:
            raise ConfigError("sweep", f"{study} takes no sweep values")
        return ()
    if not values:
        raise ConfigError("sweep", f"{study} needs sweep values")

    sweep = []
    for i, value in enumerate(values):
        path = f"sweep[{i}]"
        if study == "k-study":
            value = _integer(value, path, 1)
            if value > base.d:
                raise ConfigError(path, f"K must be <= d={base.d}, got {value}")
        elif study == "d-study":
            value = _integer(value, path, 1)
        elif study == "perturbation-compare":
            value = _choice(value, path, KINDS)
        else:
            value = _choice(value, path, ALGORITHMS)
        if value in sweep:
            raise ConfigError(path, f"duplicate sweep value {value!r}")
        sweep.append(value)
    return tuple(sweep)


def parse_manifest(data, seed=None):
    """Validate a manifest dictionary.

    :param dict data: decoded JSON object
    :param int seed: replaces the seed list when given
    """

    _check_keys(data, MANIFEST_KEYS + RUN_KEYS, "")

    study = _choice(data.get("study", "single-run"), "study", STUDY_KINDS)
    name = data.get("name", study)
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError("name", f"expected a non-empty name without '/', got {name!r}")

    if seed is not None:
        seeds = (_integer(seed, "seeds[0]", 0),)
    else:
        raw = data.get("seeds", [0])
        seeds = _int_list(raw, "seeds", minimum=0)
        if not seeds:
            raise ConfigError("seeds", "seed list must not be empty")
        for i, s in enumerate(seeds):
            if s in seeds[:i]:
                raise ConfigError(f"seeds[{i}]", f"duplicate seed {s}")

    base = parse_run({k: v for k, v in data.items() if k in RUN_KEYS}, seeds[0])

    budget = data.get("budget")
    if budget is not None:
        budget = _integer(budget, "budget", 1)

    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", f"expected a path string, got {output!r}")

    checks = data.get("checks", [])
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise ConfigError("checks", "expected a list of check names")

    manifest = ExperimentManifest(
        study=study,
        name=name,
        base=base,
        sweep=_parse_sweep(study, data.get("sweep"), base),
        seeds=seeds,
        budget=budget,
        output=output,
        checks=tuple(checks),
    )
    # budget divisibility is checked for every variant up front
    for variant, config in variants(manifest):
        variant_config(manifest, config, variant)
    return manifest


def load_config(path, seed=None):
    """Read and validate a JSON manifest file."""

    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"cannot parse {path}: {err}") from err
    except OSError as err:
        raise ConfigError("config", f"cannot read {path}: {err}") from err
    return parse_manifest(data, seed)


def variants(manifest):
    """``(variant name, config)`` pairs of the study sweep."""

    base = manifest.base
    study = manifest.study
    if study in ("single-run", "verify-all"):
        return [("base", base)]

    pairs = []
    for value in manifest.sweep:
        if study == "k-study":
            pairs.append((f"K={value}", replace(base, K=value)))
        elif study == "d-study":
            pairs.append((f"D={value}", replace(base, panel=replace(base.panel, D=value))))
        elif study == "perturbation-compare":
            pairs.append((f"perturbation={value}", replace(base, perturbation=value)))
        else:
            pairs.append((f"algorithm={value}", replace(base, algorithm=value)))
    return pairs


def variant_config(manifest, config, variant, seed=None):
    """Apply the budget and the seed to a variant configuration.

    With a budget M the iteration count is ``M / (2 N D K)``, which must be
    a whole number.
    """

    if manifest.budget is not None:
        per_iteration = config.panel.trajectories_per_query * config.K
        if manifest.budget % per_iteration:
            raise ConfigError(
                "budget",
                f"{manifest.budget} is not a multiple of 2NDK={per_iteration} "
                f"for variant {variant}",
            )
        config = replace(config, T=manifest.budget // per_iteration)
    if seed is not None:
        config = replace(config, seed=seed)
    return config
