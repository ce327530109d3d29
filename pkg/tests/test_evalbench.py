import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bornvi.advkl import AdvConfig, read_log_csv
from bornvi.bayesnet import HmmModel
from bornvi.evalbench import (
    best_factorized,
    bootstrap_median_ci,
    histogram_rows,
    hmm_observations,
    next_latent_estimate,
    product_distribution,
    run_hmm,
    run_lungcancer,
    run_sprinkler,
    sprinkler_instances,
    top_k_overlap,
    write_histogram_csv,
)
from bornvi.bornmachine import ANGLE_ENCODING, AnsatzSpec, init_machine
from bornvi.ksd import KsdConfig
from bornvi.metrics import tvd


def brute_factorized(post, step):
    """Oracle: plain loop over the whole grid."""
    grid = np.arange(0, 1 + 1e-9, step)
    n = int(np.log2(post.size))
    best = np.inf
    for m in itertools.product(grid, repeat=n):
        best = min(best, tvd(post, product_distribution(m)))
    return best


class TestTvd:
    def test_identical(self):
        assert tvd([0.2, 0.8], [0.2, 0.8]) == 0.0

    def test_disjoint(self):
        assert tvd([1, 0], [0, 1]) == 1.0

    def test_not_normalised(self):
        with pytest.raises(ValueError):
            tvd([0.5, 0.6], [0.5, 0.5])

    @settings(max_examples=50)
    @given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4), st.lists(st.floats(0.01, 1), min_size=4, max_size=4))
    def test_symmetric_and_bounded(self, a, b):
        p, q = np.array(a) / sum(a), np.array(b) / sum(b)
        assert tvd(p, q) == pytest.approx(tvd(q, p))
        assert 0 <= tvd(p, q) <= 1


class TestBaseline:
    def test_product_distribution(self):
        np.testing.assert_allclose(product_distribution([0.2, 0.7]), [0.8 * 0.3, 0.8 * 0.7, 0.2 * 0.3, 0.2 * 0.7])

    def test_exact_product_recovered(self):
        post = product_distribution([0.3, 0.6, 0.9])
        marg, dist = best_factorized(post)
        np.testing.assert_allclose(marg, [0.3, 0.6, 0.9], atol=1e-12)
        assert dist < 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force_on_coarse_grid(self, seed):
        post = np.random.default_rng(seed).dirichlet(np.ones(8))
        assert best_factorized(post, grid_step=0.05)[1] == pytest.approx(brute_factorized(post, 0.05), abs=1e-12)

    def test_never_worse_than_uniform(self):
        for inst in sprinkler_instances(0, 10):
            assert best_factorized(inst.posterior)[1] <= tvd(inst.posterior, np.full(8, 1 / 8)) + 1e-12

    def test_size_cap(self):
        with pytest.raises(ValueError):
            best_factorized(np.full(64, 1 / 64))


class TestBootstrap:
    def test_same_seed_same_interval(self):
        vals = np.random.default_rng(0).uniform(size=30)
        assert bootstrap_median_ci(vals, 4) == bootstrap_median_ci(vals, 4)

    def test_contains_median(self):
        vals = np.random.default_rng(1).uniform(size=30)
        lo, hi = bootstrap_median_ci(vals, 0)
        assert lo <= np.median(vals) <= hi

    def test_constant_values(self):
        assert bootstrap_median_ci([0.2] * 5, 0) == (0.2, 0.2)


class TestHistogram:
    def test_order_and_ties(self):
        p = np.array([0.1, 0.3, 0.3, 0.3])
        rows = histogram_rows(p, np.full(4, 0.25))
        assert [r[0] for r in rows] == [1, 2, 3, 0]
        assert rows[0][1] == "01"

    def test_top(self):
        assert len(histogram_rows(np.full(8, 1 / 8), np.full(8, 1 / 8), top=3)) == 3

    def test_csv(self, tmp_path):
        path = tmp_path / "h.csv"
        write_histogram_csv(path, histogram_rows(np.array([0.25, 0.75]), np.array([0.5, 0.5])))
        assert path.read_text().splitlines() == ["basis_index,bitstring,p_true,q_learned", "1,1,0.75,0.5", "0,0,0.25,0.5"]

    def test_top_k_overlap(self):
        p = np.array([0.4, 0.3, 0.2, 0.1, 0.0])
        q = np.array([0.1, 0.3, 0.2, 0.0, 0.4])
        assert top_k_overlap(p, q, 4) == 3


class TestSprinkler:
    def test_instances_reproducible(self):
        a = sprinkler_instances(3, 2)
        b = sprinkler_instances(3, 2)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.posterior, y.posterior)
        assert not np.allclose(a[0].posterior, a[1].posterior)

    def test_cpt_range(self):
        for inst in sprinkler_instances(0, 5):
            for nd in inst.net.nodes:
                assert np.all((nd.cpt >= 0.01) & (nd.cpt <= 0.99))

    def test_untrained_machines_far_from_posterior(self):
        res = run_sprinkler("kl", 2, AdvConfig(epochs=0), n_instances=30, baseline=False)
        assert res.median_tvd_final > 0.1

    def test_outputs(self, tmp_path):
        res = run_sprinkler("ksd", 1, KsdConfig(epochs=2), n_instances=3, out=tmp_path)
        doc = json.loads((tmp_path / "summary.json").read_text())
        assert {"config", "median_tvd_final", "ci68", "baseline_median_tvd", "per_instance"} <= set(doc)
        assert len(doc["per_instance"]) == 3
        logs = read_log_csv(tmp_path / "instance_00.csv")
        assert len(logs) == 3 and logs[-1].ksd is not None
        assert res.median_tvd_final == pytest.approx(doc["median_tvd_final"])

    def test_bad_method(self):
        with pytest.raises(ValueError):
            run_sprinkler("mmd", 1, AdvConfig(epochs=0))


class TestHmm:
    def test_observations_fixed_by_seed(self):
        hmm = HmmModel()
        a, b = hmm_observations(hmm, 5), hmm_observations(hmm, 5)
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[0], a[1])

    def test_next_latent_estimate_in_unit_interval(self):
        hmm = HmmModel()
        x = hmm_observations(hmm, 0)[0]
        est = next_latent_estimate(hmm, init_machine(AnsatzSpec(8, 1, ANGLE_ENCODING), 0), x, 500, 0)
        assert 1 / 3 <= est <= 2 / 3

    def test_short_run_outputs(self, tmp_path):
        res = run_hmm(AdvConfig(epochs=2, hidden=24), layers=1, out=tmp_path)
        assert (tmp_path / "histogram_x1.csv").is_file() and (tmp_path / "histogram_x2.csv").is_file()
        lines = (tmp_path / "histogram_x1.csv").read_text().splitlines()
        assert len(lines) == 11
        probs = [float(r.split(",")[2]) for r in lines[1:]]
        assert probs == sorted(probs, reverse=True)
        for obs in res.extras["observations"]:
            assert 0.0 <= obs["next_latent_estimate"] <= 1.0
            assert len(obs["true_mode"]) == 8


class TestLungCancer:
    def test_short_run_outputs(self, tmp_path):
        res = run_lungcancer(AdvConfig(epochs=2, hidden=10, shots_born=64, samples_per_class=64), out=tmp_path)
        lines = (tmp_path / "histogram.csv").read_text().splitlines()
        assert len(lines) == 33
        p = np.array([float(r.split(",")[2]) for r in lines[1:]])
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert res.extras["latent_names"] == ["A", "S", "T", "L", "B"]
        assert 0 <= res.extras["top4_overlap"] <= 4
