"""Verification checks of the optimizer's mathematical and empirical properties.

Every check is a function ``check_<name>(seed=0, quick=False, jobs=1)``
returning a ``CheckReport``; the report is reproducible from the check
name and the seed. ``quick`` shrinks the sample sizes.

Tolerances are fixed: Monte-Carlo bounds allow 4 standard errors,
equality claims allow twice the pooled standard error, and dominance
claims use a one-sided t-test at 95%, paired when both samples run the
same seeds.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import itertools
import json
import logging
import math
from pathlib import Path
import numpy as np
from scipy import stats

from parzpo.core import Role, RngStream, block_sum_norm, make_partition
from parzpo.env import (
    analytic_env,
    gridworld_env,
    linear_control_env,
    smoothness_constant,
    true_gradient,
    true_value,
)
from parzpo.federate import RunConfig, iteration_bits, run, sample_theta_R
from parzpo.metadata import describe_report
from parzpo.perturb import (
    khintchine_exact,
    feedback_bits,
    khintchine_monte_carlo,
    sign_patterns,
)
from parzpo.policy import Policy, PolicySpec
from parzpo.preference import (
    LinkFunction,
    PanelSpec,
    hoeffding_bound,
    panel_link,
    separation_histogram,
)

logger = logging.getLogger(__name__)

SIGMA = 4.0
REL_TOL = 1e-9
EXACT_TOL = 1e-12


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check.

    :param str name: check name
    :param str status: "pass" or "fail"
    :param float statistic: measured statistic
    :param float bound: bound the statistic is compared against
    :param float tolerance: allowed slack
    :param int samples: sample count
    :param int seed: check seed
    :param dict details: check-specific measurements
    """

    name: str
    status: str
    statistic: float
    bound: float
    tolerance: float
    samples: int
    seed: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {
            "name": self.name,
            "status": self.status,
            "statistic": self.statistic,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "seed": self.seed,
            "details": self.details,
        }

    def __str__(self):
        return describe_report(self)


def _status(ok):
    return "pass" if ok else "fail"


def _analytic_setup(seed, noise=0.0, horizon=10):
    """Linear 7 -> 8 policy (d = 64) on the analytic environment."""

    policy = PolicySpec("linear", 7, 8)
    return analytic_env(policy, horizon=horizon, noise=noise, seed=seed), policy


SIGN_PANEL = PanelSpec(P=1, N=1, D=1, link=LinkFunction("step"))


def _traces(configs, jobs=1):
    """Run the configurations, in order."""

    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, configs))
    return [run(config) for config in configs]


def _seeded(config, seed, replicas):
    return [replace(config, seed=seed + i) for i in range(replicas)]


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def _overlap_ratio(first, second):
    """``|m1 - m2| / (2 sqrt(se1^2 + se2^2))``; at most 1 means overlap."""

    (m1, se1), (m2, se2) = _mean_se(first), _mean_se(second)
    pooled = math.sqrt(se1**2 + se2**2)
    if pooled == 0:
        return 0.0 if m1 == m2 else math.inf
    return abs(m1 - m2) / (2 * pooled)


def check_khintchine(seed=0, quick=False, jobs=1):
    """Khintchine bounds ``|a| / sqrt(3) <= E|<v, a>| <= |a|``.

    Dimensions up to 12 are enumerated exactly over random coefficient
    vectors; larger dimensions use Monte Carlo with 4-sigma slack.
    """

    rng = RngStream(seed, (Role.CHECK, 0))
    vectors = 100 if quick else 1000
    draws = 10_000 if quick else 100_000
    mc_dims = (64,) if quick else (64, 512)

    violations = 0
    min_ratio = math.inf
    for d in (2, 4, 8, 12):
        patterns = sign_patterns(d)
        a = rng.generator.standard_normal((vectors, d))
        norms = np.linalg.norm(a, axis=1)
        expected = khintchine_exact(a, patterns)
        violations += int(np.sum(expected < norms / math.sqrt(3) * (1 - EXACT_TOL)))
        violations += int(np.sum(expected > norms * (1 + EXACT_TOL)))
        min_ratio = min(min_ratio, float(np.min(expected / norms)))

    # tight upper bound at e_1, ratio 1/sqrt(2) at (1, 1)
    known = {
        "e1": float(khintchine_exact(np.array([1.0, 0.0, 0.0]))),
        "ones2": float(khintchine_exact(np.array([1.0, 1.0]))),
    }
    violations += sum(abs(v - 1.0) > EXACT_TOL for v in known.values())

    monte_carlo = {}
    for d in mc_dims:
        a = rng.generator.standard_normal(d)
        norm = float(np.linalg.norm(a))
        mean, se = khintchine_monte_carlo(a, draws, rng)
        ok = norm / math.sqrt(3) - SIGMA * se <= mean <= norm + SIGMA * se
        violations += int(not ok)
        monte_carlo[str(d)] = {"ratio": mean / norm, "stderr": se / norm, "ok": bool(ok)}

    return CheckReport(
        "khintchine",
        _status(violations == 0),
        statistic=min_ratio,
        bound=1 / math.sqrt(3),
        tolerance=EXACT_TOL,
        samples=4 * vectors + len(mc_dims) * draws,
        seed=seed,
        details={"violations": violations, "known": known, "monte_carlo": monte_carlo},
    )


def check_norm_axioms(seed=0, quick=False, jobs=1, trials=None, d=16):
    """Block-sum norm axioms and the ``|v| <= |v|_P <= sqrt(K)|v|`` sandwich.

    Random partitions of d coordinates; K = 1 must give the Euclidean norm
    and K = d the l1 norm.
    """

    rng = RngStream(seed, (Role.CHECK, 1))
    gen = rng.generator
    trials = trials or (1000 if quick else 10_000)
    failures = {"triangle": 0, "homogeneity": 0, "definiteness": 0, "sandwich": 0, "limits": 0}

    for _ in range(trials):
        K = int(gen.integers(1, d + 1))
        partition = make_partition(d, K, "shuffled", rng)
        u, v = gen.standard_normal(d), gen.standard_normal(d)
        c = float(gen.standard_normal())
        nu, nv = block_sum_norm(u, partition), block_sum_norm(v, partition)
        l2 = float(np.linalg.norm(u))

        if block_sum_norm(u + v, partition) > (nu + nv) * (1 + REL_TOL):
            failures["triangle"] += 1
        if abs(block_sum_norm(c * u, partition) - abs(c) * nu) > REL_TOL * abs(c) * nu:
            failures["homogeneity"] += 1
        if block_sum_norm(np.zeros(d), partition) != 0.0 or nu <= 0:
            failures["definiteness"] += 1
        if l2 > nu * (1 + REL_TOL) or nu > math.sqrt(K) * l2 * (1 + REL_TOL):
            failures["sandwich"] += 1

    for _ in range(max(trials // 100, 10)):
        u = gen.standard_normal(d)
        whole = block_sum_norm(u, make_partition(d, 1))
        singletons = block_sum_norm(u, make_partition(d, d))
        if abs(whole - np.linalg.norm(u)) > REL_TOL * whole:
            failures["limits"] += 1
        if abs(singletons - np.abs(u).sum()) > REL_TOL * singletons:
            failures["limits"] += 1

    total = sum(failures.values())
    return CheckReport(
        "norm_axioms",
        _status(total == 0),
        statistic=total,
        bound=0,
        tolerance=REL_TOL,
        samples=trials,
        seed=seed,
        details=failures,
    )


def alignment_estimate(env, theta, mu, partition, k, draws, rng, chunk=10_000):
    """Monte-Carlo mean and standard error of ``<g, sign[V(theta + mu v_k) - V(theta)] v_k>``.

    v_k is a Rademacher vector restricted to block k and g the exact
    gradient at theta.
    """

    grad = true_gradient(env, theta)
    block = partition.blocks[k]
    base = true_value(env, theta)
    total = total_sq = 0.0
    remaining = draws
    while remaining > 0:
        n = min(chunk, remaining)
        v = np.zeros((n, partition.d))
        v[:, block] = rng.generator.integers(0, 2, size=(n, block.size)) * 2.0 - 1.0
        signs = np.sign(true_value(env, theta + mu * v) - base)
        sample = signs * (v @ grad)
        total += sample.sum()
        total_sq += (sample**2).sum()
        remaining -= n

    mean = total / draws
    variance = max(total_sq / draws - mean**2, 0.0) * draws / max(draws - 1, 1)
    return mean, math.sqrt(variance / draws)


def check_block_alignment(seed=0, quick=False, jobs=1, K=4, block=0):
    """Sign-feedback alignment with the block gradient on a (theta, mu) grid.

    The estimate must exceed ``|g o e_k| / sqrt(3) - mu L |I_k|`` minus 4
    standard errors; grid points with a negative bound pass vacuously and
    are counted.
    """

    rng = RngStream(seed, (Role.CHECK, 2))
    env, policy = _analytic_setup(seed)
    optimum = np.asarray(env.optimum)
    d = optimum.size
    partition = make_partition(d, K)
    L = smoothness_constant(env)
    grid = 3 if quick else 5
    draws = 10_000 if quick else 100_000

    direction = rng.generator.standard_normal(d)
    direction /= np.linalg.norm(direction)
    radii = np.linspace(0.0, 2.0 * math.sqrt(env.width), grid)
    mus = np.geomspace(1e-3, 1.0, grid)

    margins = []
    vacuous = 0
    for r, mu in itertools.product(radii, mus):
        theta = optimum + r * direction
        grad = true_gradient(env, theta)
        block_norm = float(np.linalg.norm(grad[partition.blocks[block]]))
        bound = block_norm / math.sqrt(3) - mu * L * partition.sizes[block]
        mean, se = alignment_estimate(env, theta, mu, partition, block, draws, rng)
        vacuous += int(bound < 0)
        margins.append(mean - bound + SIGMA * se)

    statistic = float(min(margins))
    return CheckReport(
        "block_alignment",
        _status(statistic >= 0),
        statistic=statistic,
        bound=0.0,
        tolerance=SIGMA,
        samples=grid * grid * draws,
        seed=seed,
        details={"grid_points": grid * grid, "vacuous": vacuous, "L": L},
    )


def _budget_T(budget, panel, K):
    return budget // (panel.trajectories_per_query * K)


def check_k_independence(seed=0, quick=False, jobs=1, Ks=(1, 2, 4, 8)):
    """Final values at a fixed trajectory budget M agree across K.

    Every K spends ``M = 2NDKT`` on ``u = K T`` agent-steps. Under the
    theory schedule the first-order progress after T iterations scales
    with ``sqrt(K) sum_t alpha_t``, roughly ``sqrt(K T) = sqrt(u)``, so the
    final value depends on M alone. With ``c = 0.2`` no K reaches its
    equilibrium distance within the budget, and ``mu = 1e-4`` keeps the
    finite-difference bias out of the sign feedback.
    """

    replicas = 5 if quick else 20
    agent_steps = 400 if quick else 1000
    env, policy = _analytic_setup(seed)
    panel = SIGN_PANEL
    budget = panel.trajectories_per_query * agent_steps

    finals = {}
    iterations = {}
    ledger_ok = True
    configs = []
    for K in Ks:
        T = _budget_T(budget, panel, K)
        iterations[K] = T
        ledger_ok &= T * panel.trajectories_per_query * K == budget
        base = RunConfig(
            env, policy, K=K, T=T, schedule="theory", c=0.2, mu=1e-4,
            update="plain-sgd", panel=panel, eval_episodes=1,
        )
        configs.extend(_seeded(base, seed, replicas))

    traces = _traces(configs, jobs)
    for i, K in enumerate(Ks):
        group = traces[i * replicas : (i + 1) * replicas]
        finals[K] = [trace.final[0] for trace in group]
        ledger_ok &= all(trace.ledger.traj_optimizer == budget for trace in group)

    start = float(np.mean([trace.records[0].value_mean for trace in traces]))
    ratio = max(
        (_overlap_ratio(finals[a], finals[b]) for a, b in itertools.combinations(Ks, 2)),
        default=0.0,
    )
    return CheckReport(
        "k_independence",
        _status(ratio <= 1.0 and ledger_ok),
        statistic=ratio,
        bound=1.0,
        tolerance=2.0,
        samples=len(configs),
        seed=seed,
        details={
            "budget": budget,
            "ledger_ok": bool(ledger_ok),
            "iterations": {str(K): T for K, T in iterations.items()},
            "start": start,
            "means": {str(K): _mean_se(v)[0] for K, v in finals.items()},
        },
    )


def _comparison_configs(seed, K):
    """Plain-SGD runs of every environment in a regime where both algorithms improve.

    The analytic and linear-control runs get exact sign feedback; the
    linear-control start state is fixed so the return is deterministic.
    The gridworld is a three-cell corridor with a stochastic policy, and
    batches of 16 lift the agents' signals above the return noise. Step
    sizes keep both algorithms short of the optimum at T.
    """

    analytic, analytic_policy = _analytic_setup(seed)
    control = linear_control_env(init_scale=0.0, init_mean=(1.0, 0.0, -1.0, 0.0))
    corridor = gridworld_env(horizon=8, grid=(1, 3), start=(1, 1), goal=(1, 3))
    common = {"K": K, "schedule": "constant", "update": "plain-sgd"}
    return {
        "analytic": RunConfig(
            analytic, analytic_policy, T=150, alpha=0.02, mu=1e-4,
            panel=SIGN_PANEL, eval_episodes=1, **common,
        ),
        "linear-control": RunConfig(
            control, PolicySpec("linear", 4, 2), T=60, alpha=0.002, mu=1e-3,
            panel=SIGN_PANEL, eval_episodes=1, **common,
        ),
        "gridworld": RunConfig(
            corridor, PolicySpec("linear", 2, 4, action_noise=1.0), T=80, alpha=0.008,
            mu=1.0, panel=replace(SIGN_PANEL, D=16), eval_episodes=200, **common,
        ),
    }


def _dominates(first, second):
    """One-sided Welch test of ``mean(first) > mean(second)`` at 95%."""

    first, second = np.asarray(first), np.asarray(second)
    if first.std() == 0 and second.std() == 0:
        return bool(first.mean() >= second.mean()), 0.0
    result = stats.ttest_ind(first, second, equal_var=False, alternative="greater")
    return bool(result.pvalue < 0.05), float(result.pvalue)


def _dominates_paired(first, second):
    """One-sided paired t-test of ``mean(first - second) > 0`` at 95%.

    The samples are matched by seed.
    """

    diff = np.asarray(first) - np.asarray(second)
    if diff.std() == 0:
        return bool(diff.mean() > 0), 0.0 if diff.mean() > 0 else 1.0
    result = stats.ttest_rel(first, second, alternative="greater")
    return bool(result.pvalue < 0.05), float(result.pvalue)


def check_par_vs_fedavg(seed=0, quick=False, jobs=1, K=5):
    """The partitioned algorithm beats FedAvg at matched budgets on every env.

    Both algorithms run the same seeds, so the final values are compared
    pairwise. Also compares the perturbation traffic and confirms that
    both algorithms produce identical traces at K = 1.
    """

    replicas = 5 if quick else 20
    setups = _comparison_configs(seed, K)

    details = {}
    passed = True
    worst = 0.0
    for name, base in setups.items():
        par_traces = _traces(_seeded(base, seed, replicas), jobs)
        fedavg_traces = _traces(_seeded(replace(base, algorithm="fedavg"), seed, replicas), jobs)
        par = [t.final[0] for t in par_traces]
        fedavg = [t.final[0] for t in fedavg_traces]
        ok, pvalue = _dominates_paired(par, fedavg)
        passed &= ok
        worst = max(worst, pvalue)
        details[name] = {
            "start": float(np.mean([t.records[0].value_mean for t in par_traces])),
            "par": _mean_se(par)[0],
            "fedavg": _mean_se(fedavg)[0],
            "pvalue": pvalue,
        }

    matched = setups["analytic"]
    feedback = K * feedback_bits(matched.panel.N)
    details["traffic_ratio"] = (
        iteration_bits(replace(matched, algorithm="fedavg")) - feedback
    ) / (iteration_bits(matched) - feedback)

    single = replace(matched, K=1, T=5)
    par_rows = run(single).rows()
    fedavg_rows = run(replace(single, algorithm="fedavg")).rows()
    details["k1_identical"] = par_rows == fedavg_rows
    passed &= details["k1_identical"]

    return CheckReport(
        "par_vs_fedavg",
        _status(passed),
        statistic=worst,
        bound=0.05,
        tolerance=0.0,
        samples=2 * len(setups) * replicas,
        seed=seed,
        details=details,
    )


def check_binary_vs_gaussian(seed=0, quick=False, jobs=1):
    """Binary and Gaussian perturbations reach overlapping final values at K = 1."""

    replicas = 5 if quick else 20
    T = 20 if quick else 100
    env, policy = _analytic_setup(seed)
    base = RunConfig(
        env, policy, K=1, T=T, schedule="theory", update="plain-sgd",
        panel=SIGN_PANEL, eval_episodes=1,
    )
    binary = _traces(_seeded(base, seed, replicas), jobs)
    gaussian = _traces(_seeded(replace(base, perturbation="gaussian"), seed, replicas), jobs)

    d = base.d
    binary_norms_ok = all(
        r.direction_sq_norm == d for trace in binary for r in trace.records
    )
    sq_norms = np.array([r.direction_sq_norm for trace in gaussian for r in trace.records])
    # squared norm of a standard Gaussian vector: mean d, variance 2d
    gaussian_norm_ok = abs(sq_norms.mean() - d) <= SIGMA * math.sqrt(2 * d / sq_norms.size)
    bits_ok = (
        binary[0].records[0].bits == d + 1
        and gaussian[0].records[0].bits == 64 * d + 1
    )

    ratio = _overlap_ratio(
        [t.final[0] for t in binary], [t.final[0] for t in gaussian]
    )
    return CheckReport(
        "binary_vs_gaussian",
        _status(ratio <= 1.0 and binary_norms_ok and gaussian_norm_ok and bits_ok),
        statistic=ratio,
        bound=1.0,
        tolerance=2.0,
        samples=2 * replicas,
        seed=seed,
        details={
            "binary_norms_ok": bool(binary_norms_ok),
            "gaussian_mean_sq_norm": float(sq_norms.mean()),
            "bits_ok": bool(bits_ok),
        },
    )


def _small_analytic(seed, noise=0.0):
    """Linear 3 -> 2 policy (d = 8) on the analytic environment."""

    policy = PolicySpec("linear", 3, 2)
    return analytic_env(policy, noise=noise, seed=seed), policy


def check_d_tradeoff(seed=0, quick=False, jobs=1, Ds=(1, 2, 4, 8), K=2, noise=0.05):
    """Batch size D: histogram overlap and final value at a fixed budget.

    Plain SGD with a constant step runs long enough at every D to settle
    where the sign errors balance the step. On the noisy environment the
    sign error falls with D, so D = 4 must beat D = 1 and the best D must
    exceed 1; the overlap of batch-mean histograms of two nearby policies
    must not increase with D (slack 0.1). On the noiseless environment the
    signs are exact at every D, so D = 1 and D = 4 must agree within twice
    the pooled standard error.
    """

    replicas = 4 if quick else 20
    t_min = 30 if quick else 100
    batches = 100 if quick else 400
    slack = 0.1
    rng = RngStream(seed, (Role.CHECK, 6))
    narrow, wide = Ds[0], 4 if 4 in Ds else Ds[-1]

    noisy, policy = _small_analytic(seed, noise)
    optimum = np.asarray(noisy.optimum)
    direction = rng.generator.standard_normal(optimum.size)
    direction /= np.linalg.norm(direction)
    current = Policy(policy, optimum + direction)
    closer = current.with_params(optimum + 0.97 * direction)
    overlaps = [
        separation_histogram(noisy, current, closer, D, batches, rng).overlap for D in Ds
    ]
    monotone = all(b <= a + slack for a, b in zip(overlaps, overlaps[1:]))

    budget = SIGN_PANEL.trajectories_per_query * max(Ds) * K * t_min

    def finals(env):
        configs = []
        for D in Ds:
            panel = replace(SIGN_PANEL, D=D)
            base = RunConfig(
                env, policy, K=K, T=_budget_T(budget, panel, K), schedule="constant",
                alpha=0.1, mu=0.02, update="plain-sgd", panel=panel, eval_episodes=10,
            )
            configs.extend(_seeded(base, seed, replicas))
        traces = _traces(configs, jobs)
        return {
            D: [t.final[0] for t in traces[i * replicas : (i + 1) * replicas]]
            for i, D in enumerate(Ds)
        }

    noisy_finals = finals(noisy)
    means = {D: _mean_se(v)[0] for D, v in noisy_finals.items()}
    best_D = max(Ds, key=lambda D: means[D])
    wide_wins, pvalue = _dominates(noisy_finals[wide], noisy_finals[narrow])

    quiet, _ = _small_analytic(seed)
    quiet_finals = finals(quiet)
    low_noise_ratio = _overlap_ratio(quiet_finals[narrow], quiet_finals[wide])

    passed = monotone and best_D > 1 and wide_wins and low_noise_ratio <= 1.0
    return CheckReport(
        "d_tradeoff",
        _status(passed),
        statistic=overlaps[-1] - overlaps[0],
        bound=0.0,
        tolerance=slack,
        samples=len(Ds) * batches + 2 * len(Ds) * replicas,
        seed=seed,
        details={
            "overlap": {str(D): o for D, o in zip(Ds, overlaps)},
            "final_mean": {str(D): m for D, m in means.items()},
            "best_D": best_D,
            "compared": [narrow, wide],
            "wide_beats_narrow": wide_wins,
            "pvalue": pvalue,
            "low_noise_mean": {str(D): _mean_se(v)[0] for D, v in quiet_finals.items()},
            "low_noise_ratio": low_noise_ratio,
            "low_noise_match": low_noise_ratio <= 1.0,
            "iterations": {str(D): _budget_T(budget, replace(SIGN_PANEL, D=D), K) for D in Ds},
        },
    )


def check_panel_sharpening(seed=0, quick=False, jobs=1, Ps=(1, 9, 25, 100), delta=0.1):
    """Majority votes sharpen with the panel size.

    With ``sigma(x) = 1/2 + delta`` the empirical correct-vote rate must
    not decrease in P and the error must respect ``exp(-2 delta^2 P)``,
    both with 4-sigma slack. The exact panel link must match the binomial
    sum to 1e-12.
    """

    rng = RngStream(seed, (Role.CHECK, 7))
    trials = 2000 if quick else 10_000
    link = LinkFunction("linear", a=delta)
    p = link(1.0)

    rates, errors = [], []
    exact_diff = 0.0
    envelope_ok = True
    for P in Ps:
        votes = rng.generator.random((trials, P)) < p
        correct = 2 * votes.sum(axis=1) > P
        rate = float(correct.mean())
        se = math.sqrt(max(rate * (1 - rate), 1e-12) / trials)
        rates.append((rate, se))

        error = 1 - rate
        errors.append(error)
        envelope_ok &= error <= hoeffding_bound(delta, P) + SIGMA * se

        exact = float(panel_link(PanelSpec(P=P, link=link), 1.0))
        binomial = sum(
            math.comb(P, j) * p**j * (1 - p) ** (P - j) for j in range(P // 2 + 1, P + 1)
        )
        exact_diff = max(exact_diff, abs(exact - binomial))
        envelope_ok &= abs(rate - exact) <= SIGMA * se + EXACT_TOL

    monotone = all(
        b[0] >= a[0] - SIGMA * math.sqrt(a[1] ** 2 + b[1] ** 2)
        for a, b in zip(rates, rates[1:])
    )
    return CheckReport(
        "panel_sharpening",
        _status(monotone and envelope_ok and exact_diff <= EXACT_TOL),
        statistic=exact_diff,
        bound=EXACT_TOL,
        tolerance=SIGMA,
        samples=trials * len(Ps),
        seed=seed,
        details={
            "correct_rate": {str(P): r for P, (r, _) in zip(Ps, rates)},
            "hoeffding": {str(P): hoeffding_bound(delta, P) for P in Ps},
            "monotone": bool(monotone),
            "envelope_ok": bool(envelope_ok),
        },
    )


def weighted_gradient_average(trace, T):
    """Step-size weighted average of the block-sum gradient norm up to T."""

    records = trace.records[:T]
    alphas = np.array([r.alpha for r in records])
    norms = np.array([r.grad_blocksum for r in records])
    return float(alphas @ norms / alphas.sum())


def sampled_gradient_norm(traces, T, rng, draws=100):
    """Monte-Carlo ``(mean, stderr)`` of the block-sum gradient norm at theta_R.

    R is drawn ``draws`` times per trace among its first T iterations.
    """

    norms = [
        trace.records[sample_theta_R(trace, rng, T) - 1].grad_blocksum
        for trace in traces
        for _ in range(draws)
    ]
    return _mean_se(norms)


def check_convergence_trend(seed=0, quick=False, jobs=1, K=4):
    """The weighted gradient norm at T falls below half its value at T/16.

    The weighted average is the expectation over theta_R given the trace;
    the report adds its Monte-Carlo estimate from sampled theta_R.
    """

    replicas = 4 if quick else 20
    T = 400 if quick else 2000
    early = T // 16
    rng = RngStream(seed, (Role.CHECK, 8))
    env, policy = _analytic_setup(seed)
    base = RunConfig(
        env, policy, K=K, T=T, schedule="theory", update="plain-sgd",
        panel=SIGN_PANEL, eval_episodes=1,
    )
    traces = _traces(_seeded(base, seed, replicas), jobs)
    at_early = float(np.mean([weighted_gradient_average(t, early) for t in traces]))
    at_end = float(np.mean([weighted_gradient_average(t, T) for t in traces]))
    ratio = at_end / at_early
    sampled_early, _ = sampled_gradient_norm(traces, early, rng)
    sampled_end, sampled_se = sampled_gradient_norm(traces, T, rng)

    return CheckReport(
        "convergence_trend",
        _status(ratio < 0.5),
        statistic=ratio,
        bound=0.5,
        tolerance=0.0,
        samples=replicas,
        seed=seed,
        details={
            "early": early,
            "T": T,
            "at_early": at_early,
            "at_end": at_end,
            "theta_R_early": sampled_early,
            "theta_R_end": sampled_end,
            "theta_R_end_stderr": sampled_se,
        },
    )


def check_ledgers(seed=0, quick=False, jobs=1, K=5, T=3):
    """Communication, sample, and memory ledgers match their closed forms."""

    env, policy = _analytic_setup(seed)
    panel = PanelSpec(P=5, N=3, D=2, link=LinkFunction("step"))
    base = RunConfig(env, policy, K=K, T=T, panel=panel, eval_episodes=2, seed=seed)
    d = base.d
    M = panel.trajectories_per_query * K * T

    par = run(base)
    fedavg = run(replace(base, algorithm="fedavg"))
    mismatches = {
        "par_bits": par.ledger.bits_total != (d + K) * T,
        "fedavg_bits": fedavg.ledger.bits_total != (K * d + K) * T,
        "par_samples": par.ledger.traj_optimizer != M,
        "fedavg_samples": fedavg.ledger.traj_optimizer != M,
        "par_memory": par.ledger.memory_per_agent
        != tuple(d + s for s in make_partition(d, K).sizes),
        "fedavg_memory": fedavg.ledger.memory_per_agent != (2 * d,) * K,
        "server_samples": par.ledger.traj_server != panel.trajectories_per_query * T,
    }
    total = sum(mismatches.values())
    memory_ratio = max(par.ledger.memory_per_agent) / (2 * d)
    return CheckReport(
        "ledgers",
        _status(total == 0),
        statistic=total,
        bound=0,
        tolerance=0.0,
        samples=2 * T,
        seed=seed,
        details={
            **{k: not v for k, v in mismatches.items()},
            "memory_ratio": memory_ratio,
            "traffic_ratio": (fedavg.ledger.bits_total / T - K) / (par.ledger.bits_total / T - K),
        },
    )


CHECKS = {
    "khintchine": check_khintchine,
    "norm_axioms": check_norm_axioms,
    "block_alignment": check_block_alignment,
    "k_independence": check_k_independence,
    "par_vs_fedavg": check_par_vs_fedavg,
    "binary_vs_gaussian": check_binary_vs_gaussian,
    "d_tradeoff": check_d_tradeoff,
    "panel_sharpening": check_panel_sharpening,
    "convergence_trend": check_convergence_trend,
    "ledgers": check_ledgers,
}


def run_checks(seed=0, quick=False, jobs=1, names=None):
    """Run the named checks (all by default) in registry order."""

    names = list(CHECKS) if not names else list(names)
    for name in names:
        if name not in CHECKS:
            raise ValueError(f"unknown check {name!r}, expected one of {list(CHECKS)}")

    reports = []
    for name in [n for n in CHECKS if n in names]:
        logger.info("check %s: start", name)
        report = CHECKS[name](seed=seed, quick=quick, jobs=jobs)
        log = logger.info if report.passed else logger.warning
        log("check %s: %s (statistic %g)", name, report.status, report.statistic)
        reports.append(report)
    return reports


def summary_table(reports):
    """Plain-text table of check outcomes."""

    header = f"{'check':<20} {'status':<6} {'statistic':>12} {'bound':>12}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(f"{r.name:<20} {r.status.upper():<6} {r.statistic:>12.6g} {r.bound:>12.6g}")
    passed = sum(r.passed for r in reports)
    lines.append(f"{passed}/{len(reports)} checks passed")
    return "\n".join(lines)


def write_reports(reports, out):
    """Write ``checks/<name>.json`` per check and ``verify_report.json``."""

    out = Path(out)
    (out / "checks").mkdir(parents=True, exist_ok=True)
    for report in reports:
        with open(out / "checks" / f"{report.name}.json", "w") as f:
            json.dump(report.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")
    with open(out / "verify_report.json", "w") as f:
        json.dump(
            {
                "passed": all(r.passed for r in reports),
                "checks": [r.to_dict() for r in reports],
            },
            f,
            sort_keys=True,
            indent=2,
        )
        f.write("\n")
