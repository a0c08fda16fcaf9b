from __future__ import annotations

import math

import numpy as np
import pytest

from gaussws.fp_emu import BF16, FpFormat, exponent_cutoff, small_w_threshold
from gaussws.lemmas import (
    CUTOFF_TABLE,
    ClaimResult,
    annealing_trial,
    check_fp_table,
    fp_table_rows,
    adversarial_underflow_hits,
    underflow_hits,
    floor_losses,
    run_all,
    sample_floor_blocks,
    uniform4_hits,
    uniform4_noise,
)
from oracles import binomial_z


class TestTable:
    def test_rows_match(self):
        assert fp_table_rows() == CUTOFF_TABLE
        assert check_fp_table().passed

    @pytest.mark.parametrize("row", CUTOFF_TABLE, ids=lambda r: f"bt{r[0]}")
    def test_each_row(self, row):
        b_t, e_w, e_what, m = row
        assert exponent_cutoff(b_t, 0) == (e_w, e_what)
        assert b_t - 2 == m

    def test_claim_line(self):
        assert ClaimResult("x", False, "d").line() == "[FAIL] x: d"


class TestFloorBlocks:
    def test_entries_above_floor(self):
        rng = np.random.default_rng(0)
        W = sample_floor_blocks(rng, 20, 8, 0, BF16)
        for i in range(20):
            blk = np.abs(W[32 * i : 32 * (i + 1)])
            assert blk.min() > small_w_threshold(blk.max(), 8, 0, BF16)


class TestNoiseSurvivesCast:
    @pytest.mark.parametrize("b_t", [4, 6, 8])
    def test_no_hits_below_bound(self, b_t):
        hits, nonzero = underflow_hits(BF16, b_t, 300, seed=b_t)
        assert hits == 0 and nonzero > 0

    @pytest.mark.parametrize("b_t", [10, 11])
    def test_adversarial_above_bound(self, b_t):
        assert adversarial_underflow_hits(BF16, b_t) > 0

    def test_adversarial_below_bound_is_clean(self):
        assert adversarial_underflow_hits(BF16, 8) == 0

    @pytest.mark.parametrize("fmt,b_t", [(FpFormat(5, 10), 11), (FpFormat(4, 3), 4)])
    def test_other_formats(self, fmt, b_t):
        assert underflow_hits(fmt, b_t, 100)[0] == 0
        assert adversarial_underflow_hits(fmt, b_t + 2) > 0

    def test_uniform_noise_flips_at_five(self):
        assert uniform4_hits(BF16, 4, 300) == 0
        assert uniform4_hits(BF16, 5, 300) > 0

    def test_uniform4_grid(self):
        u = uniform4_noise((100, 100))
        assert np.all(u * 16 == np.round(u * 16))
        assert u.min() >= -0.5 and u.max() < 0.5
        assert np.abs(u[u != 0]).min() == 2.0**-4


class TestSmallWeightFloor:
    @pytest.mark.parametrize("b_t", [6, 8])
    def test_floor(self, b_t):
        above, below = floor_losses(BF16, b_t, 100_000, seed=b_t)
        assert above == 0 and below > 0


class TestAnnealing:
    def test_frequency_matches_nonzero_mass(self):
        res = annealing_trial(200_000, seed=5)
        assert res.n == 200_000
        z = (res.frequency - res.expected) / res.sigma
        assert abs(z) < 4
        assert res.masked_where_zero == 0

    def test_masked_only_where_noise_drawn(self):
        res = annealing_trial(50_000, seed=6)
        # each element with R != 0 is masked, each with R = 0 is not
        assert res.masked == res.nonzero

    def test_nonzero_count_is_binomial(self):
        res = annealing_trial(100_000, seed=7)
        assert abs(binomial_z(res.nonzero, res.n, res.expected)) < 4

    def test_sigma(self):
        res = annealing_trial(10_000, seed=0)
        assert res.sigma == pytest.approx(math.sqrt(res.expected * (1 - res.expected) / res.n))


class TestRunAll:
    def test_all_claims_pass_bf16(self):
        results = run_all(BF16, 100)
        assert len(results) == 6
        assert all(r.passed for r in results), [r.line() for r in results]

    def test_minimum_trials(self):
        with pytest.raises(ValueError):
            run_all(BF16, 99)
