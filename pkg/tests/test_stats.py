import itertools

import numpy as np
import pytest

from bilopt.stats import RankTable, SampleSet, a12, scott_knott, wilcoxon_signed_rank


def wilcoxon_oracle(a, b):
    """Brute force over all 2^n sign assignments (n after dropping zeros)."""
    diffs = np.asarray(a, float) - np.asarray(b, float)
    diffs = diffs[diffs != 0]
    n = len(diffs)
    if n == 0:
        return 1.0
    mags = np.abs(diffs)
    order = np.argsort(mags, kind="stable")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and mags[order[j + 1]] == mags[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    w_obs = ranks[diffs > 0].sum()
    mu = ranks.sum() / 2
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for s, r in zip(signs, ranks) if s)
        if abs(w - mu) >= abs(w_obs - mu) - 1e-9:
            hits += 1
    return hits / 2**n


class TestWilcoxon:
    def test_identical_samples(self):
        assert wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_six_one_sided_extreme(self):
        # all six differences positive, no ties: p = 2/2^6 = 0.03125
        a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        b = [0.5, 1.0, 2.0, 2.5, 3.0, 4.0]
        assert wilcoxon_signed_rank(a, b) == pytest.approx(0.03125)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([1.0], [1.0, 2.0])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            n = int(rng.integers(2, 12))
            a = np.round(rng.normal(size=n), 1)
            b = np.round(rng.normal(size=n), 1)
            assert wilcoxon_signed_rank(a, b) == pytest.approx(
                wilcoxon_oracle(a, b), abs=1e-12
            )

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=15)
        b = rng.normal(size=15)
        assert wilcoxon_signed_rank(a, b) == pytest.approx(wilcoxon_signed_rank(b, a))

    def test_normal_approx_near_exact_at_boundary(self):
        # n = 21 takes the approximation path; compare against brute force
        # oracle restricted by the doubled-rank exact routine at n = 20 being
        # infeasible here, so check agreement with a large-sample reference
        rng = np.random.default_rng(7)
        a = rng.normal(0.3, 1.0, size=21)
        b = rng.normal(0.0, 1.0, size=21)
        from scipy.stats import wilcoxon as scipy_wilcoxon

        ref = scipy_wilcoxon(a, b, correction=True, mode="approx").pvalue
        assert wilcoxon_signed_rank(a, b) == pytest.approx(float(ref), abs=0.01)


class TestA12:
    def test_worked_examples(self):
        assert a12([1, 2, 3], [1, 2, 3]) == pytest.approx(0.5)
        assert a12([4, 5, 6], [1, 2, 3]) == 1.0
        # pairs: 1 loses to all three; 2 ties 2, loses to 3 and 4
        assert a12([1, 2], [2, 3, 4]) == pytest.approx(0.5 / 6)

    def test_complement_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a = rng.integers(0, 5, size=int(rng.integers(1, 8))).astype(float)
            b = rng.integers(0, 5, size=int(rng.integers(1, 8))).astype(float)
            assert a12(a, b) + a12(b, a) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(size=10)
        b = rng.uniform(size=12)
        assert a12(np.exp(a), np.exp(b)) == pytest.approx(a12(a, b))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            a12([], [1.0])


class TestScottKnott:
    def _noisy(self, center, seed, n=30, scale=0.001):
        rng = np.random.default_rng(seed)
        return tuple(center + rng.uniform(-scale, scale, size=n))

    def test_three_separated_techniques(self):
        samples = [
            SampleSet("low", self._noisy(0.5, 1)),
            SampleSet("high", self._noisy(0.9, 2)),
            SampleSet("mid", self._noisy(0.7, 3)),
        ]
        table = scott_knott(samples)
        assert table.ranks == {"high": 3, "mid": 2, "low": 1}
        assert table.clusters == [["low"], ["mid"], ["high"]]

    def test_identical_techniques_share_rank(self):
        vals = self._noisy(0.8, 9)
        table = scott_knott([SampleSet("a", vals), SampleSet("b", vals)])
        assert table.ranks == {"a": 1, "b": 1}

    def test_negligible_effect_blocks_split(self):
        # b is 0..19; a = b + tiny epsilon: p is minuscule (2/2^20) but
        # A12 = 0.525 < 0.56, so the effect gate must refuse the split
        b = tuple(float(i) for i in range(20))
        a = tuple(v + 1e-6 for v in b)
        table = scott_knott([SampleSet("a", a), SampleSet("b", b)])
        assert table.ranks["a"] == table.ranks["b"] == 1

    def test_permutation_invariance(self):
        samples = [
            SampleSet("x", self._noisy(0.3, 4)),
            SampleSet("y", self._noisy(0.6, 5)),
            SampleSet("z", self._noisy(0.9, 6)),
        ]
        base = scott_knott(samples).ranks
        for perm in itertools.permutations(samples):
            assert scott_knott(list(perm)).ranks == base

    def test_single_technique(self):
        table = scott_knott([SampleSet("only", (0.1, 0.2, 0.3))])
        assert table.ranks == {"only": 1}

    def test_requires_two_repeats(self):
        with pytest.raises(ValueError):
            scott_knott([SampleSet("a", (0.5,))])

    def test_requires_nonempty(self):
        with pytest.raises(ValueError):
            scott_knott([])
