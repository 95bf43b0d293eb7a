import math

import numpy as np
import pytest

from spdemc.model import InitKind, InitSpec, NoiseSpec, ProblemSpec, SpectrumSpec
from spdemc.noise import (
    LatticeBatchStream,
    NoiseLattice,
    aggregate_pair,
    coarsen,
    lattice_from_lambdas,
    ou_variance,
    sample_lattice,
)


def _problem(nu=4.0 / 3.0, scale=0.2, init=None):
    return ProblemSpec(
        spectrum=SpectrumSpec(scale=scale, exponent=nu),
        noise=NoiseSpec(mu_exponent=1.01, shift=1),
        init=init or InitSpec(InitKind.COEFFICIENT_LIST, (1.0,)),
    )


class TestOuVariance:
    def test_zero_rate_limit(self):
        assert ou_variance(0.0, 0.5) == 0.5

    def test_closed_form(self):
        assert ou_variance(1.0, 1.0) == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-15)

    def test_against_substepped_euler_oracle(self):
        # Monte Carlo oracle: Euler discretization of the convolution integral
        # with 64 substeps, one million draws.
        lam, tau = 3.2, 1.0 / 64.0
        substeps, draws = 64, 1_000_000
        h = tau / substeps
        s = np.arange(substeps) * h
        weights = np.exp(-lam * (tau - s))
        rng = np.random.default_rng(20240817)
        acc = 0.0
        chunk = 100_000
        for _ in range(draws // chunk):
            z = rng.standard_normal((chunk, substeps))
            integrals = z @ weights * math.sqrt(h)
            acc += float((integrals**2).sum())
        mc_variance = acc / draws
        assert ou_variance(lam, tau) == pytest.approx(mc_variance, rel=0.01)

    def test_aggregation_consistency(self):
        # var(2 tau) = e**(-2 lam tau) var(tau) + var(tau)
        rng = np.random.default_rng(11)
        for _ in range(50):
            lam = rng.uniform(0, 10)
            tau = rng.uniform(1e-4, 1.0)
            lhs = ou_variance(lam, 2 * tau)
            rhs = math.exp(-2 * lam * tau) * ou_variance(lam, tau) + ou_variance(lam, tau)
            assert lhs == pytest.approx(rhs, rel=1e-14)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            ou_variance(1.0, 0.0)
        with pytest.raises(ValueError):
            ou_variance(-1.0, 1.0)


class TestSampleLattice:
    def test_determinism(self):
        problem = _problem()
        a = sample_lattice(problem, 1, 1, (99, 0, 0, 0))
        b = sample_lattice(problem, 1, 1, (99, 0, 0, 0))
        assert a.integrals.shape == (1, 1)
        assert np.array_equal(a.integrals, b.integrals)

    def test_different_streams_differ(self):
        problem = _problem()
        a = sample_lattice(problem, 4, 8, (99, 0))
        b = sample_lattice(problem, 4, 8, (99, 1))
        assert not np.array_equal(a.integrals, b.integrals)

    def test_column_variances_over_streams(self):
        # empirical variance of each mode's entries across 10^5 streams
        problem = _problem()
        streams = 100_000
        k_modes, steps = 4, 8
        tau = problem.horizon / steps
        lambdas = problem.spectrum.lambdas(k_modes)
        sums = np.zeros(k_modes)
        sq_sums = np.zeros(k_modes)
        for i in range(streams):
            lat = sample_lattice(problem, k_modes, steps, (7, i))
            sums += lat.integrals.sum(axis=1)
            sq_sums += (lat.integrals**2).sum(axis=1)
        n = streams * steps
        var = sq_sums / n - (sums / n) ** 2
        for k in range(k_modes):
            target = ou_variance(float(lambdas[k]), tau)
            se = target * math.sqrt(2.0 / n)
            assert abs(var[k] - target) < 3 * se

    def test_streams_uncorrelated(self):
        # entrywise correlation of two lattices from different stream ids
        problem = _problem()
        k_modes, steps = 100, 1000
        a = sample_lattice(problem, k_modes, steps, (13, 0))
        b = sample_lattice(problem, k_modes, steps, (13, 1))
        from spdemc.noise import ou_variances

        std = np.sqrt(ou_variances(problem.spectrum.lambdas(k_modes),
                                   problem.horizon / steps))
        za = (a.integrals / std[:, None]).ravel()
        zb = (b.integrals / std[:, None]).ravel()
        n = za.size
        corr = float(np.mean(za * zb))  # standardized entries, so this is Pearson
        assert abs(corr) < 3.0 / math.sqrt(n)

    def test_entries_independent_within_lattice(self):
        # adjacent-entry and adjacent-mode correlations vanish statistically
        problem = _problem()
        lat = sample_lattice(problem, 64, 2048, (21,))
        from spdemc.noise import ou_variances

        std = np.sqrt(ou_variances(problem.spectrum.lambdas(64),
                                   problem.horizon / 2048))
        z = lat.integrals / std[:, None]
        across_steps = float(np.mean(z[:, :-1] * z[:, 1:]))
        across_modes = float(np.mean(z[:-1, :] * z[1:, :]))
        n = z[:, :-1].size
        assert abs(across_steps) < 3.0 / math.sqrt(n)
        assert abs(across_modes) < 3.0 / math.sqrt(n)

    def test_random_init_draws_live_in_lattice(self):
        problem = _problem(init=InitSpec(InitKind.DECAYING_GAUSSIAN, decay=2.0))
        lat = sample_lattice(problem, 8, 4, (5, 1))
        again = sample_lattice(problem, 8, 4, (5, 1))
        assert lat.init_coeffs is not None
        assert np.array_equal(lat.init_coeffs, again.init_coeffs)

    def test_size_limit(self):
        problem = _problem()
        with pytest.raises(ValueError):
            sample_lattice(problem, 1 << 14, 1 << 14, (0,))


class TestAggregatePair:
    def test_zero_rate_sums(self):
        assert aggregate_pair(0.0, 0.5, 1.25, -0.25) == 1.0

    def test_half_decay(self):
        assert aggregate_pair(math.log(2.0), 1.0, 1.0, 0.0) == pytest.approx(0.5, rel=1e-15)

    def test_fold_equals_tree(self):
        rng = np.random.default_rng(8)
        lam, h = 0.7, 1.0 / 8.0
        fine = rng.standard_normal(8)
        # left fold: extend the accumulated interval one fine step at a time
        acc = fine[0]
        for nxt in fine[1:]:
            acc = aggregate_pair(lam, h, acc, nxt)
        # balanced tree: pairwise rounds with doubling spans
        level = fine.copy()
        span = h
        while len(level) > 1:
            level = np.array([
                aggregate_pair(lam, span, level[2 * i], level[2 * i + 1])
                for i in range(len(level) // 2)
            ])
            span *= 2
        assert acc == pytest.approx(float(level[0]), rel=1e-12)


class TestCoarsen:
    def test_full_reduction_single_step(self):
        problem = _problem()
        lat = sample_lattice(problem, 3, 8, (17,))
        coarse = coarsen(lat, problem.spectrum, 8)
        assert coarse.fine_steps == 1
        assert coarse.tau_fine == pytest.approx(problem.horizon)

    def test_zero_rate_columns_sum(self):
        lambdas = np.array([0.0, 0.0])
        lat = lattice_from_lambdas(lambdas, 0.125, 8, (3,))
        manual = lat.integrals.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(_zero_rate_full_reduction(lat), manual, rtol=1e-13)

    def test_exact_recombination(self):
        problem = _problem()
        lat = sample_lattice(problem, 6, 16, (29,))
        two_then_two = coarsen(coarsen(lat, problem.spectrum, 2), problem.spectrum, 2)
        four = coarsen(lat, problem.spectrum, 4)
        np.testing.assert_allclose(two_then_two.integrals, four.integrals, rtol=1e-13)

    def test_coarse_variance_statistics(self):
        problem = _problem()
        streams = 20_000
        factor, steps = 4, 8
        k_modes = 2
        lambdas = problem.spectrum.lambdas(k_modes)
        tau = problem.horizon / steps
        sq = np.zeros(k_modes)
        count = streams * (steps // factor)
        for i in range(streams):
            lat = sample_lattice(problem, k_modes, steps, (31, i))
            reduced = coarsen(lat, problem.spectrum, factor)
            sq += (reduced.integrals**2).sum(axis=1)
        var = sq / count
        for k in range(k_modes):
            target = ou_variance(float(lambdas[k]), factor * tau)
            assert var[k] == pytest.approx(target, rel=0.03)

    def test_bad_factors(self):
        problem = _problem()
        lat = sample_lattice(problem, 2, 8, (1,))
        with pytest.raises(ValueError):
            coarsen(lat, problem.spectrum, 3)
        with pytest.raises(ValueError):
            coarsen(lat, problem.spectrum, 16)
        with pytest.raises(ValueError):
            coarsen(lat, problem.spectrum, 1)


def _zero_rate_full_reduction(lat: NoiseLattice) -> np.ndarray:
    out = lat.integrals
    h = lat.tau_fine
    while out.shape[-1] > 1:
        out = np.exp(-0.0 * h) * out[..., 0::2] + out[..., 1::2]
        h *= 2
    return out


class TestBatchStream:
    def test_chunking_is_invisible(self):
        problem = _problem()
        s1 = LatticeBatchStream(problem, 4, 8, (77, 0, 1, 2))
        a = np.concatenate([s1.next_batch(3)[0], s1.next_batch(2)[0]], axis=0)
        s2 = LatticeBatchStream(problem, 4, 8, (77, 0, 1, 2))
        b = s2.next_batch(5)[0]
        assert np.array_equal(a, b)

    def test_batch_with_random_init(self):
        problem = _problem(init=InitSpec(InitKind.DECAYING_GAUSSIAN, decay=2.0))
        stream = LatticeBatchStream(problem, 4, 8, (78,))
        integrals, init = stream.next_batch(6)
        assert integrals.shape == (6, 4, 8)
        assert init.shape == (6, 4)
        # distinct samples get distinct draws
        assert not np.allclose(init[0], init[1])


class TestDump:
    def test_binary_round_trip(self, tmp_path):
        problem = _problem(init=InitSpec(InitKind.DECAYING_GAUSSIAN, decay=2.0))
        lat = sample_lattice(problem, 5, 4, (9, 3))
        path = tmp_path / "lattice.bin"
        lat.dump(path)
        back = NoiseLattice.load(path)
        assert back.mode_count == lat.mode_count
        assert back.fine_steps == lat.fine_steps
        assert back.tau_fine == lat.tau_fine
        assert back.stream_id == lat.stream_id
        np.testing.assert_array_equal(back.integrals, lat.integrals)
        np.testing.assert_array_equal(back.init_coeffs, lat.init_coeffs)
