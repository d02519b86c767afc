"""Simulated preference panels and the majority-vote preference oracle.

A panelist compares the mean rewards of two trajectory batches through a
link function; a panel of P panelists answers with the strict majority of
their votes; the oracle majority-votes N panel answers into a feedback
value in {-1, 0, +1}.
"""

from dataclasses import dataclass, field
import logging
import numpy as np
from scipy import stats
from parzpo.core import sign_scalar
from parzpo.env import batch_mean_reward, check_compatible, sample_batch

logger = logging.getLogger(__name__)

LINK_KINDS = ("linear", "logistic", "step")


@dataclass(frozen=True)
class LinkFunction:
    """Preference link function.

    :param str kind: "linear" (``clip(a x + 1/2, 0, 1)``),
        "logistic" (``1 / (1 + exp(-beta x))``), or "step"
    :param float a: slope of the linear link
    :param float beta: inverse temperature of the logistic link
    """

    kind: str = "linear"
    a: float = 0.01
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.a <= 0 or self.beta <= 0:
            raise ValueError("link parameters must be positive")

    def __call__(self, x):
        return link_eval(self, x)


def link_eval(link, x):
    """Probability that the second batch is preferred at reward gap x."""

    x = np.asarray(x, dtype=float)
    if link.kind == "linear":
        p = np.clip(link.a * x + 0.5, 0.0, 1.0)
    elif link.kind == "logistic":
        p = stats.logistic.cdf(link.beta * x)
    else:
        p = np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class PanelSpec:
    """Preference panel and query shape.

    :param int P: panelists
    :param int N: batch pairs per query
    :param int D: trajectories per batch
    :param LinkFunction link: shared panelist link
    """

    P: int = 100
    N: int = 1
    D: int = 1
    link: LinkFunction = field(default_factory=LinkFunction)

    def __post_init__(self):
        for name in ("P", "N", "D"):
            if getattr(self, name) < 1:
                raise ValueError(f"panel {name} must be >= 1")

    @property
    def trajectories_per_query(self):
        """Trajectories consumed by one oracle call: 2 N D."""
        return 2 * self.N * self.D


def panelist_vote(link, mean_perturbed, mean_current, rng):
    """One panelist's vote; 1 prefers the perturbed batch."""

    p = link_eval(link, mean_perturbed - mean_current)
    return int(rng.generator.random() < p)


def majority_vote(votes):
    """Strict majority ``1{sum(votes) > P/2}``; ties give 0."""

    votes = np.asarray(votes)
    return int(2 * votes.sum() > votes.size)


def panel_vote(panel, mean_perturbed, mean_current, rng):
    """Panel answer for one batch pair."""

    p = link_eval(panel.link, mean_perturbed - mean_current)
    votes = rng.generator.random(panel.P) < p
    return majority_vote(votes)


def panel_link(panel, x):
    """Exact induced panel link ``P(Binomial(P, sigma(x)) > P/2)``."""

    return stats.binom.sf(panel.P // 2, panel.P, link_eval(panel.link, x))


def hoeffding_bound(delta, P):
    """Majority-vote error bound ``exp(-2 delta^2 P)`` for ``sigma(x) = 1/2 + delta``."""

    return float(np.exp(-2.0 * delta**2 * P))


@dataclass(frozen=True)
class OracleResult:
    """Oracle feedback, panel answers, and trajectories consumed."""

    feedback: int
    votes: tuple
    trajectories: int

    def to_archive(self):
        return self.feedback


def preference_oracle(panel, policy, perturbed, env, rng):
    """Majority-voted preference between a policy and its perturbation.

    For each of the N batch pairs a batch of D trajectories is sampled from
    each policy and the panel answers; the feedback is
    ``sign(sum_n (o_n - 1/2))``.
    """

    if policy.spec != perturbed.spec:
        raise ValueError("compared policies must share the same spec")
    check_compatible(env, policy)

    votes = []
    for _ in range(panel.N):
        current = batch_mean_reward(sample_batch(env, policy, panel.D, rng))
        candidate = batch_mean_reward(sample_batch(env, perturbed, panel.D, rng))
        votes.append(panel_vote(panel, candidate, current, rng))

    feedback = sign_scalar(sum(votes) - panel.N / 2)
    return OracleResult(feedback, tuple(votes), panel.trajectories_per_query)


def overlap_coefficient(first, second, bins=30):
    """Shared-bin histogram intersection of two samples.

    Both samples are binned on ``bins`` equal bins spanning the pooled range;
    the overlap is ``sum_b min(p_b, q_b)`` of the normalized counts. Two
    identical constant samples overlap fully.
    """

    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if first.size == 0 or second.size == 0:
        raise ValueError("overlap needs two non-empty samples")

    low = min(first.min(), second.min())
    high = max(first.max(), second.max())
    if low == high:
        return 1.0
    edges = np.linspace(low, high, bins + 1)
    p, _ = np.histogram(first, bins=edges)
    q, _ = np.histogram(second, bins=edges)
    return float(np.minimum(p / first.size, q / second.size).sum())


@dataclass(frozen=True)
class Separation:
    """Batch means of two policies and their histogram overlap."""

    first: np.ndarray
    second: np.ndarray
    overlap: float
    D: int

    def rows(self):
        """CSV rows ``(policy, batch_index, batch_mean)``, 1-based batches."""

        rows = []
        for label, means in (("current", self.first), ("perturbed", self.second)):
            rows.extend((label, i + 1, float(m)) for i, m in enumerate(means))
        return rows


def separation_histogram(env, policy, perturbed, D, B, rng, bins=30):
    """Sample B batch means of size D from each policy."""

    if B < 1:
        raise ValueError(f"batch count B must be >= 1, got {B}")
    first = np.array(
        [batch_mean_reward(sample_batch(env, policy, D, rng)) for _ in range(B)]
    )
    second = np.array(
        [batch_mean_reward(sample_batch(env, perturbed, D, rng)) for _ in range(B)]
    )
    overlap = overlap_coefficient(first, second, bins)
    logger.debug("separation D=%d B=%d overlap=%.4f", D, B, overlap)
    return Separation(first, second, overlap, D)
