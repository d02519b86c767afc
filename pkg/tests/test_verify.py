"""Test the verification suite.

The fast checks run in quick mode; the slow statistical comparisons are
exercised through their setups and their deterministic parts.
"""

from parzpo.core import RngStream, Role, make_partition
from parzpo.env import smoothness_constant, true_gradient
from parzpo.federate import run
from parzpo import verify
from parzpo.verify import (
    CHECKS,
    SIGN_PANEL,
    CheckReport,
    _comparison_configs,
    _dominates_paired,
    alignment_estimate,
    check_binary_vs_gaussian,
    check_block_alignment,
    check_d_tradeoff,
    check_k_independence,
    check_khintchine,
    check_ledgers,
    check_norm_axioms,
    check_panel_sharpening,
    run_checks,
    sampled_gradient_norm,
    summary_table,
    weighted_gradient_average,
    write_reports,
)
from dataclasses import replace
from types import SimpleNamespace as SNs
import json
import math
import numpy as np
import pytest


def test_registry():
    """Every check is registered under its report name."""

    assert list(CHECKS) == [
        "khintchine",
        "norm_axioms",
        "block_alignment",
        "k_independence",
        "par_vs_fedavg",
        "binary_vs_gaussian",
        "d_tradeoff",
        "panel_sharpening",
        "convergence_trend",
        "ledgers",
    ]


class TestExactChecks:
    """Checks with exact or high-margin outcomes."""

    def test_khintchine(self):
        """Exact enumeration and Monte Carlo respect the bounds."""

        report = check_khintchine(seed=0, quick=True)
        assert report.passed
        assert report.details["violations"] == 0
        assert report.details["known"]["e1"] == pytest.approx(1.0)
        assert 1 / math.sqrt(3) <= report.statistic <= 1.0

    def test_norm_axioms(self):
        """No axiom violations on random partitions."""

        report = check_norm_axioms(seed=1, trials=200)
        assert report.passed
        assert report.samples == 200
        assert set(report.details) == {
            "triangle",
            "homogeneity",
            "definiteness",
            "sandwich",
            "limits",
        }

    def test_ledgers(self):
        """Ledgers match the closed forms."""

        report = check_ledgers(seed=0)
        assert report.passed
        assert report.statistic == 0
        # (K d) / d perturbation traffic
        assert report.details["traffic_ratio"] == pytest.approx(5.0)
        assert report.details["memory_ratio"] == pytest.approx((64 + 13) / 128)

    def test_panel_sharpening(self):
        """The exact panel link matches the binomial sum."""

        report = check_panel_sharpening(seed=0, quick=True)
        assert report.statistic <= 1e-12
        assert report.passed
        assert report.details["hoeffding"]["100"] == pytest.approx(math.exp(-2.0))

    def test_binary_vs_gaussian_norms(self):
        """Binary directions have squared norm d; bits follow the payload."""

        report = check_binary_vs_gaussian(seed=0, quick=True)
        assert report.details["binary_norms_ok"]
        assert report.details["bits_ok"]
        assert report.samples == 10

    def test_block_alignment(self):
        """Sign feedback aligns with the block gradient on the whole grid."""

        report = check_block_alignment(seed=0, quick=True)
        assert report.passed
        assert report.details["grid_points"] == 9
        assert report.details["L"] > 0

    def test_k_independence(self):
        """Every K spends the budget M and reaches the same final value."""

        report = check_k_independence(seed=0, quick=True, Ks=(1, 4))
        assert report.passed
        assert report.details["ledger_ok"]
        assert report.details["budget"] == SIGN_PANEL.trajectories_per_query * 400
        assert report.details["iterations"] == {"1": 400, "4": 100}
        assert report.samples == 10
        assert min(report.details["means"].values()) > report.details["start"]

    def test_reproducible(self):
        """Reports depend on the seed only."""

        first = check_norm_axioms(seed=3, trials=100)
        second = check_norm_axioms(seed=3, trials=100)
        assert first.to_dict() == second.to_dict()


def test_alignment_estimate(analytic):
    """With a small mu the alignment respects the Khintchine lower bound."""

    theta = np.asarray(analytic.optimum) + 1.0
    partition = make_partition(64, 4)
    grad = true_gradient(analytic, theta)
    mu = 1e-4

    mean, se = alignment_estimate(
        analytic, theta, mu, partition, 0, 4000, RngStream(0, (Role.CHECK, 2)), chunk=1500
    )
    block_norm = np.linalg.norm(grad[partition.blocks[0]])
    bound = block_norm / math.sqrt(3) - mu * smoothness_constant(analytic) * 16
    assert se > 0
    assert mean >= bound - 4 * se
    assert mean <= block_norm + 4 * se


def test_weighted_gradient_average():
    """Step-size weighted mean of the block-sum norms."""

    records = [SNs(alpha=1.0, grad_blocksum=3.0), SNs(alpha=1.0, grad_blocksum=1.0),
               SNs(alpha=2.0, grad_blocksum=2.0)]
    trace = SNs(records=records)
    assert weighted_gradient_average(trace, 2) == 2.0
    assert weighted_gradient_average(trace, 3) == 2.0
    assert weighted_gradient_average(trace, 1) == 3.0


class TestRunChecks:
    """Test run_checks and the report output."""

    @pytest.fixture
    def reports(self):
        return [
            CheckReport("alpha_check", "pass", 0.5, 1.0, 0.0, 10, 0),
            CheckReport("beta_check", "fail", 2.0, 1.0, 0.0, 10, 0, {"note": 1}),
        ]

    def test_unknown(self):
        """Unknown check names are rejected."""

        with pytest.raises(ValueError, match="unknown check 'bogus'"):
            run_checks(names=["bogus"])

    def test_registry_order(self):
        """Checks run in registry order."""

        reports = run_checks(seed=0, quick=True, names=["ledgers", "norm_axioms"])
        assert [r.name for r in reports] == ["norm_axioms", "ledgers"]
        assert all(r.passed for r in reports)

    def test_summary_table(self, reports):
        """One line per check and a pass count."""

        lines = summary_table(reports).split("\n")
        assert lines[0].startswith("check")
        assert set(lines[1]) == {"-"}
        assert lines[2].split()[:2] == ["alpha_check", "PASS"]
        assert lines[3].split()[:2] == ["beta_check", "FAIL"]
        assert lines[-1] == "1/2 checks passed"

    def test_write_reports(self, reports, tmp_path):
        """Per-check files and the combined report."""

        write_reports(reports, tmp_path / "out")
        check = json.loads((tmp_path / "out" / "checks" / "beta_check.json").read_text())
        assert check["details"] == {"note": 1}
        assert check["status"] == "fail"

        combined = json.loads((tmp_path / "out" / "verify_report.json").read_text())
        assert combined["passed"] is False
        assert [c["name"] for c in combined["checks"]] == ["alpha_check", "beta_check"]

    def test_report_dict(self, reports):
        """The dictionary holds every field."""

        data = reports[0].to_dict()
        assert data["name"] == "alpha_check"
        assert data["samples"] == 10
        assert reports[0].passed and not reports[1].passed


def test_sampled_gradient_norm():
    """theta_R is drawn among the first T records of every trace."""

    records = [
        SNs(t=1, alpha=1.0, grad_blocksum=5.0),
        SNs(t=2, alpha=1.0, grad_blocksum=1.0),
    ]
    traces = [SNs(records=records), SNs(records=records)]
    rng = RngStream(0, (Role.CHECK, 8))

    assert sampled_gradient_norm(traces, 1, rng, draws=20) == (5.0, 0.0)
    mean, se = sampled_gradient_norm(traces, 2, rng, draws=200)
    assert 1.0 < mean < 5.0
    assert se > 0


class TestComparison:
    """Test the matched-budget comparison setups."""

    def test_configs(self):
        """Plain SGD with a constant step on every environment."""

        configs = _comparison_configs(0, 5)
        assert list(configs) == ["analytic", "linear-control", "gridworld"]
        for config in configs.values():
            assert config.K == 5
            assert config.algorithm == "par"
            assert (config.schedule, config.update) == ("constant", "plain-sgd")
        assert configs["gridworld"].panel.D == 16

    def test_fixed_start(self):
        """The linear-control return is deterministic."""

        config = replace(_comparison_configs(0, 5)["linear-control"], T=1, eval_episodes=5)
        assert run(config).final[1] == 0.0

    def test_analytic_improves(self):
        """On the analytic setup both algorithms improve and the partitioned one leads."""

        config = _comparison_configs(0, 5)["analytic"]
        par = run(config)
        fedavg = run(replace(config, algorithm="fedavg"))
        start = par.records[0].value_mean

        assert fedavg.records[0].value_mean == start
        assert par.final[0] > fedavg.final[0] > start

    @pytest.mark.parametrize(
        "first, second, expected",
        [
            ([2.0, 3.0, 4.0], [1.0, 2.0, 3.0], (True, 0.0)),
            ([1.0, 1.0], [1.0, 1.0], (False, 1.0)),
        ],
    )
    def test_dominates_paired_constant(self, first, second, expected):
        """Constant differences decide without a test."""

        assert _dominates_paired(first, second) == expected

    def test_dominates_paired(self):
        """One-sided: only a positive mean difference passes."""

        first = [1.0, 2.1, 3.3, 4.0]
        second = [0.5, 1.0, 2.0, 3.5]
        ok, pvalue = _dominates_paired(first, second)
        assert ok and pvalue < 0.05
        ok, pvalue = _dominates_paired(second, first)
        assert not ok and pvalue > 0.95


class TestDTradeoff:
    """The d_tradeoff status needs the noisy win and the noiseless match."""

    def test_details(self):
        """The compared batch sizes and the budgeted iterations are reported."""

        report = check_d_tradeoff(seed=0, quick=True, Ds=(1, 4))
        assert report.details["compared"] == [1, 4]
        assert report.details["iterations"] == {"1": 120, "4": 30}
        assert set(report.details["low_noise_mean"]) == {"1", "4"}
        assert report.samples == 2 * 100 + 2 * 2 * 4

    def test_requires_noisy_win(self, monkeypatch):
        """A lost noisy comparison fails the check."""

        monkeypatch.setattr(verify, "_dominates", lambda first, second: (False, 0.9))
        report = check_d_tradeoff(seed=0, quick=True, Ds=(1, 4))
        assert not report.details["wide_beats_narrow"]
        assert report.status == "fail"

    def test_requires_low_noise_match(self, monkeypatch):
        """Separated noiseless finals fail the check."""

        monkeypatch.setattr(verify, "_overlap_ratio", lambda first, second: math.inf)
        report = check_d_tradeoff(seed=0, quick=True, Ds=(1, 4))
        assert not report.details["low_noise_match"]
        assert report.status == "fail"
