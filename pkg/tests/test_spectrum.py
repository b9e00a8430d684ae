import numpy as np
import pytest

from oracles import brute_mobius, full_table, random_sparse_spectrum

from parityproxy import (
    FourierSpectrum,
    InvalidArgumentError,
    Mask,
    MaskDataset,
    MobiusSpectrum,
    exact_transform,
    fourier_to_mobius,
    load_spectrum,
    refine,
    save_spectrum,
    sparsify,
)
from parityproxy.errors import CapacityError
from parityproxy.spectrum import inverse_transform_table


def M(n, *idx):
    return Mask.from_indices(n, idx)


class TestExactTransform:
    def test_constant_function(self):
        table = {Mask(3, b): 4.5 for b in range(8)}
        spec = exact_transform(table)
        assert spec.coeffs == {Mask(3, 0): 4.5}

    def test_pure_parity(self):
        table = {Mask(2, b): (-1.0) ** (b & 1) for b in range(4)}
        spec = exact_transform(table)
        assert spec.coeffs == {M(2, 0): 1.0}

    def test_delta_gives_flat_spectrum(self):
        table = {Mask(2, b): 1.0 if b == 0 else 0.0 for b in range(4)}
        spec = exact_transform(table)
        assert len(spec) == 4
        for b in range(4):
            assert spec[Mask(2, b)] == pytest.approx(0.25, abs=0)

    def test_incomplete_table_rejected(self):
        with pytest.raises(InvalidArgumentError):
            exact_transform({Mask(2, 0): 1.0, Mask(2, 1): 2.0})

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            exact_transform(np.zeros(1 << 25), 25)

    def test_roundtrip_random_tables(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            vals = rng.normal(size=1 << 10)
            spec = exact_transform(vals, 10)
            back = inverse_transform_table(spec)
            assert np.max(np.abs(back - vals)) <= 1e-12

    def test_parseval(self):
        rng = np.random.default_rng(7)
        vals = rng.normal(size=1 << 8)
        spec = exact_transform(vals, 8)
        lhs = float(np.mean(vals**2))
        rhs = sum(c * c for c in spec.coeffs.values())
        assert abs(lhs - rhs) / abs(lhs) <= 1e-9


class TestEvaluate:
    def test_constant(self):
        spec = FourierSpectrum(4, {Mask(4, 0): 3.25})
        for b in (0, 5, 15):
            assert spec.evaluate(Mask(4, b)) == 3.25

    def test_sign_convention(self):
        spec = FourierSpectrum(2, {M(2, 0): 1.0})
        assert spec.evaluate(M(2, 0)) == -1.0
        assert spec.evaluate(Mask(2, 0)) == 1.0

    def test_width_mismatch(self):
        spec = FourierSpectrum(3, {Mask(3, 0): 1.0})
        with pytest.raises(InvalidArgumentError):
            spec.evaluate(Mask(4, 0))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(0)
        spec = random_sparse_spectrum(rng, 8, support=20, max_degree=4)
        masks = [Mask(8, int(b)) for b in rng.integers(0, 256, size=50)]
        batch = spec.evaluate_batch(masks)
        single = [spec.evaluate(m) for m in masks]
        np.testing.assert_allclose(batch, single, atol=1e-12)

    def test_zero_coefficients_dropped(self):
        spec = FourierSpectrum(3, {Mask(3, 1): 0.0, Mask(3, 2): 1.0})
        assert len(spec) == 1


class TestMobius:
    def test_constant_identity(self):
        spec = FourierSpectrum(3, {Mask(3, 0): 2.0})
        mob = fourier_to_mobius(spec)
        assert mob.coeffs == {Mask(3, 0): 2.0}

    def test_singleton_conversion(self):
        b = 4.0
        spec = FourierSpectrum(3, {M(3, 1): b})
        mob = fourier_to_mobius(spec)
        assert mob[Mask(3, 0)] == pytest.approx(b)
        assert mob[M(3, 1)] == pytest.approx(-2 * b)
        assert len(mob) == 2

    def test_against_brute_mobius(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            spec = random_sparse_spectrum(rng, 8, support=15, max_degree=4)
            f = full_table(spec)
            direct = brute_mobius(f, 8)
            mob = fourier_to_mobius(spec)
            for t in range(1 << 8):
                assert mob[Mask(8, t)] == pytest.approx(direct[t], abs=1e-9)

    def test_support_in_down_closure(self):
        rng = np.random.default_rng(6)
        spec = random_sparse_spectrum(rng, 10, support=12, max_degree=3)
        closure = set()
        for m in spec.coeffs:
            sub = m.bits
            while True:
                closure.add(sub)
                if sub == 0:
                    break
                sub = (sub - 1) & m.bits
        mob = fourier_to_mobius(spec)
        assert {m.bits for m in mob.coeffs} <= closure

    def test_mobius_polynomial_matches_fourier_evaluation(self):
        rng = np.random.default_rng(9)
        spec = random_sparse_spectrum(rng, 10, support=20, max_degree=4)
        mob = fourier_to_mobius(spec)
        for b in rng.integers(0, 1 << 10, size=40):
            m = Mask(10, int(b))
            assert mob.evaluate(m) == pytest.approx(spec.evaluate(m), abs=1e-9)


class TestSparsify:
    def test_identity_when_support_small(self):
        spec = FourierSpectrum(3, {Mask(3, 0): 1.0, M(3, 0): 2.0, M(3, 1): 3.0})
        assert sparsify(spec, 5) is spec

    def test_magnitude_order(self):
        spec = FourierSpectrum(2, {Mask(2, 0): 3.0, M(2, 0): -2.0, M(2, 1): 1.0})
        out = sparsify(spec, 2)
        assert set(out.coeffs) == {Mask(2, 0), M(2, 0)}

    def test_tie_breaks_toward_small_cardinality(self):
        spec = FourierSpectrum(2, {M(2, 0): 1.0, M(2, 0, 1): 1.0, Mask(2, 0): 1.0})
        out = sparsify(spec, 2)
        assert set(out.coeffs) == {Mask(2, 0), M(2, 0)}

    def test_lexicographic_tiebreak(self):
        spec = FourierSpectrum(3, {M(3, 2): 1.0, M(3, 1): 1.0, M(3, 0, 1): 5.0})
        out = sparsify(spec, 2)
        assert set(out.coeffs) == {M(3, 0, 1), M(3, 1)}

    def test_truncation_minimizes_dropped_energy(self):
        # among all size-k supports, top-k-by-magnitude drops the least energy
        rng = np.random.default_rng(13)
        spec = random_sparse_spectrum(rng, 10, support=30, max_degree=5)
        k = 10
        kept = sparsify(spec, k)
        kept_energy = sum(c * c for c in kept.coeffs.values())
        keys = list(spec.coeffs)
        for _ in range(100):
            pick = rng.choice(len(keys), size=k, replace=False)
            energy = sum(spec.coeffs[keys[i]] ** 2 for i in pick)
            assert energy <= kept_energy + 1e-12


class TestRefine:
    def _dataset_from_spec(self, spec, masks):
        vals = spec.evaluate_batch(masks)
        return MaskDataset(spec.n, list(zip(masks, map(float, vals))))

    def test_exact_fit_fixed_point(self):
        rng = np.random.default_rng(21)
        spec = random_sparse_spectrum(rng, 6, support=8, max_degree=3)
        masks = [Mask(6, int(b)) for b in rng.integers(0, 64, size=200)]
        data = self._dataset_from_spec(spec, masks)
        result = refine(spec, data, folds=4)
        for key, coef in spec.coeffs.items():
            assert result.spectrum[key] == pytest.approx(coef, abs=1e-9)

    def test_hand_solved_two_by_two(self):
        # full table over one feature: f(empty)=1, f({0})=3; starting from
        # far-off coefficients the CV gate accepts and the full-data OLS is
        # the hand solve F(empty)=2, F({0})=-1
        spec = FourierSpectrum(1, {Mask(1, 0): 10.0, M(1, 0): 10.0})
        data = MaskDataset(1, [(Mask(1, 0), 1.0), (M(1, 0), 3.0)])
        result = refine(spec, data, folds=2)
        assert result.accepted
        assert result.spectrum[Mask(1, 0)] == pytest.approx(2.0, abs=1e-12)
        assert result.spectrum[M(1, 0)] == pytest.approx(-1.0, abs=1e-12)

    def test_wrong_coefficient_gets_fixed_and_accepted(self):
        rng = np.random.default_rng(22)
        truth = random_sparse_spectrum(rng, 6, support=6, max_degree=2)
        masks = [Mask(6, int(b)) for b in rng.integers(0, 64, size=300)]
        data = self._dataset_from_spec(truth, masks)
        broken = dict(truth.coeffs)
        key = next(iter(broken))
        broken[key] = broken[key] + 1.5
        result = refine(FourierSpectrum(6, broken), data, folds=5)
        assert result.accepted
        assert result.cv_mse_refined < result.cv_mse_original
        assert result.spectrum[key] == pytest.approx(truth.coeffs[key], abs=1e-6)

    def test_support_larger_than_samples_rejected(self):
        rng = np.random.default_rng(23)
        spec = random_sparse_spectrum(rng, 6, support=10, max_degree=3)
        masks = [Mask(6, int(b)) for b in rng.integers(0, 64, size=5)]
        data = self._dataset_from_spec(spec, masks)
        with pytest.raises(InvalidArgumentError):
            refine(spec, data, folds=2)

    def test_result_records_branch(self):
        rng = np.random.default_rng(24)
        spec = random_sparse_spectrum(rng, 5, support=5, max_degree=2)
        masks = [Mask(5, int(b)) for b in rng.integers(0, 32, size=100)]
        data = self._dataset_from_spec(spec, masks)
        result = refine(spec, data, folds=4)
        assert result.accepted in (True, False)
        assert np.isfinite(result.cv_mse_refined)
        assert np.isfinite(result.cv_mse_original)

    def test_accepted_refit_never_hurts_training_r2(self):
        # the full-support OLS refit minimizes training SSE, so when the CV
        # gate accepts it the training fit cannot get worse
        from parityproxy import r2

        rng = np.random.default_rng(25)
        for trial in range(5):
            truth = random_sparse_spectrum(rng, 7, support=10, max_degree=3)
            masks = [Mask(7, int(b)) for b in rng.integers(0, 128, size=250)]
            noisy_vals = truth.evaluate_batch(masks) + rng.normal(
                scale=0.2, size=len(masks)
            )
            data = MaskDataset(7, list(zip(masks, map(float, noisy_vals))))
            start = FourierSpectrum(
                7, {k: c + rng.normal(scale=0.3) for k, c in truth.coeffs.items()}
            )
            result = refine(start, data, folds=5, seed=trial)
            if result.accepted:
                y = data.values()
                r2_new = r2(result.spectrum.evaluate_batch(masks), y)
                r2_old = r2(start.evaluate_batch(masks), y)
                assert r2_new >= r2_old - 1e-12


class TestTruncationOrdering:
    def test_full_cube_training_r2_nonincreasing_as_k_shrinks(self):
        # on a complete cube the parity design is orthonormal, so dropping
        # magnitude-ranked coefficients only removes explained energy
        from parityproxy import r2

        rng = np.random.default_rng(26)
        vals = rng.normal(size=1 << 8)
        spec = exact_transform(vals, 8)
        masks = [Mask(8, b) for b in range(1 << 8)]
        scores = []
        for k in (len(spec), 64, 32, 16, 8, 4, 2, 1):
            trunc = sparsify(spec, k)
            scores.append(r2(trunc.evaluate_batch(masks), vals))
        assert all(b <= a + 1e-12 for a, b in zip(scores, scores[1:]))


class TestSpectrumIO:
    def test_roundtrip_fourier(self, tmp_path):
        rng = np.random.default_rng(31)
        spec = random_sparse_spectrum(rng, 9, support=14, max_degree=4)
        path = str(tmp_path / "s.jsonl")
        save_spectrum(path, spec)
        back = load_spectrum(path)
        assert isinstance(back, FourierSpectrum)
        assert back.n == spec.n
        assert back.coeffs == spec.coeffs

    def test_roundtrip_mobius(self, tmp_path):
        mob = MobiusSpectrum(4, {Mask(4, 0): 1.5, M(4, 1, 2): -2.25})
        path = str(tmp_path / "m.jsonl")
        save_spectrum(path, mob)
        back = load_spectrum(path)
        assert isinstance(back, MobiusSpectrum)
        assert back.coeffs == mob.coeffs

    def test_entries_sorted_by_magnitude(self, tmp_path):
        spec = FourierSpectrum(3, {Mask(3, 0): 0.5, M(3, 1): -3.0, M(3, 2): 1.0})
        path = str(tmp_path / "s.jsonl")
        save_spectrum(path, spec)
        import json

        lines = [json.loads(x) for x in open(path).read().splitlines()]
        coefs = [abs(e["coef"]) for e in lines[1:]]
        assert coefs == sorted(coefs, reverse=True)
