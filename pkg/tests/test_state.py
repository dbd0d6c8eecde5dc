import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projtomo.errors import (
    DimensionMismatch,
    EqualIndices,
    IndexOutOfRange,
    InvalidRank,
    TomographyError,
    ZeroCoefficient,
    ZeroTrace,
)
from projtomo.state import (
    DensityMatrix,
    Projector,
    PureState,
    SuperpositionSpec,
    density_from_json,
    density_to_json,
    expectation,
    fidelity,
    make_superposition,
    nearest_physical,
    random_density,
    trace_distance,
)

S2 = 1 / math.sqrt(2)


def ket(*amps):
    return PureState(np.array(amps, dtype=complex))


class TestMakeSuperposition:
    def test_equal_weight(self):
        psi = make_superposition(SuperpositionSpec(0, 1, 1), 2)
        np.testing.assert_allclose(psi.amplitudes, [S2, S2], atol=1e-15)

    def test_imaginary_coefficient(self):
        psi = make_superposition(SuperpositionSpec(0, 1, 2j), 2)
        np.testing.assert_allclose(psi.amplitudes, [1 / math.sqrt(5), 2j / math.sqrt(5)], atol=1e-15)

    def test_embedding_in_larger_space(self):
        psi = make_superposition(SuperpositionSpec(3, 1, -1), 5)
        np.testing.assert_allclose(psi.amplitudes, [0, -S2, 0, S2, 0], atol=1e-15)

    def test_equal_indices(self):
        with pytest.raises(EqualIndices):
            SuperpositionSpec(0, 0, 1)

    def test_zero_coefficient(self):
        with pytest.raises(ZeroCoefficient):
            SuperpositionSpec(0, 1, 0)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            make_superposition(SuperpositionSpec(0, 2, 1), 2)

    @given(n=st.integers(0, 7), m=st.integers(0, 7),
           re=st.floats(-5, 5), im=st.floats(-5, 5))
    def test_projector_idempotent_unit_trace(self, n, m, re, im):
        if n == m or abs(complex(re, im)) < 1e-3:
            return
        P = Projector(make_superposition(SuperpositionSpec(n, m, complex(re, im)), 8)).matrix()
        assert np.abs(P @ P - P).max() < 1e-12
        assert abs(np.trace(P) - 1) < 1e-12


class TestExpectation:
    def test_eigenstate(self):
        assert expectation(DensityMatrix.basis(0, 3), Projector(PureState.basis(0, 3))) == 1.0

    @pytest.mark.parametrize("dim", [2, 5, 8])
    def test_maximally_mixed(self, dim):
        P = Projector(make_superposition(SuperpositionSpec(0, dim - 1, 0.3 - 2j), dim))
        assert expectation(DensityMatrix.maximally_mixed(dim), P) == pytest.approx(1 / dim, abs=1e-15)

    def test_plus_state(self):
        # <psi|rho|psi> with rho = |+><+| = [[1/2, 1/2], [1/2, 1/2]] and psi = (1, 1)/sqrt2:
        # (1/2) * (1/2 + 1/2 + 1/2 + 1/2) = 1
        rho = DensityMatrix(np.full((2, 2), 0.5))
        assert expectation(rho, Projector(ket(S2, S2))) == pytest.approx(1.0, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            expectation(DensityMatrix.maximally_mixed(3), Projector(PureState.basis(0, 2)))

    @settings(max_examples=50)
    @given(seed=st.integers(0, 10**6), lam=st.floats(0, 1))
    def test_linear_in_rho(self, seed, lam):
        r1, r2 = random_density(5, seed=seed), random_density(5, 2, seed=seed + 1)
        P = Projector(make_superposition(SuperpositionSpec(1, 4, 0.7 + 0.2j), 5))
        mix = DensityMatrix(lam * r1.matrix + (1 - lam) * r2.matrix, check=False)
        expected = lam * expectation(r1, P) + (1 - lam) * expectation(r2, P)
        assert expectation(mix, P) == pytest.approx(expected, abs=1e-12)


class TestDistances:
    def test_fidelity_self(self):
        rho = random_density(4, seed=2)
        assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)

    def test_fidelity_orthogonal(self):
        assert fidelity(DensityMatrix.basis(0, 2), DensityMatrix.basis(1, 2)) == pytest.approx(0, abs=1e-12)

    def test_fidelity_squared_convention(self):
        assert fidelity(DensityMatrix.basis(0, 2), DensityMatrix.maximally_mixed(2)) == pytest.approx(0.5)

    def test_trace_distance_examples(self):
        rho = random_density(3, seed=4)
        assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-12)
        assert trace_distance(DensityMatrix.basis(0, 2), DensityMatrix.basis(1, 2)) == pytest.approx(1)
        assert trace_distance(DensityMatrix.basis(0, 2), DensityMatrix.maximally_mixed(2)) == pytest.approx(0.5)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fidelity(DensityMatrix.basis(0, 2), DensityMatrix.basis(0, 3))
        with pytest.raises(DimensionMismatch):
            trace_distance(DensityMatrix.basis(0, 2), DensityMatrix.basis(0, 3))

    def test_fuchs_van_de_graaf_bounds(self):
        rng = np.random.default_rng(0)
        for i in range(100):
            dim = int(rng.integers(2, 9))
            r = random_density(dim, int(rng.integers(1, dim + 1)), seed=2 * i)
            s = random_density(dim, int(rng.integers(1, dim + 1)), seed=2 * i + 1)
            F, T = fidelity(r, s), trace_distance(r, s)
            assert 0 <= F <= 1 + 1e-9
            assert 1 - math.sqrt(F) <= T + 1e-9
            assert T <= math.sqrt(max(0.0, 1 - F)) + 1e-9

    def test_pure_states_saturate_upper_bound(self):
        a, b = ket(1, 0), ket(S2, S2 * 1j)
        ra, rb = DensityMatrix.from_pure(a), DensityMatrix.from_pure(b)
        assert trace_distance(ra, rb) == pytest.approx(math.sqrt(1 - fidelity(ra, rb)), abs=1e-12)


class TestRandomDensity:
    def test_rank_one_is_pure(self):
        assert random_density(6, 1, seed=3).purity == pytest.approx(1.0, abs=1e-12)

    def test_full_rank_trace(self):
        assert np.trace(random_density(6, 6, seed=3).matrix).real == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        assert np.array_equal(random_density(5, 3, seed=9).matrix, random_density(5, 3, seed=9).matrix)

    def test_invalid_rank(self):
        with pytest.raises(InvalidRank):
            random_density(3, 4)
        with pytest.raises(InvalidRank):
            random_density(3, 0)

    def test_thousand_seeds_physical(self):
        for seed in range(1000):
            rho = random_density(8, seed=seed)
            m = rho.matrix
            assert np.array_equal(m, m.conj().T)
            assert abs(np.trace(m).real - 1) <= 1e-9
            assert np.linalg.eigvalsh(m).min() >= -1e-9


class TestNearestPhysical:
    def test_physical_unchanged(self):
        rho = random_density(5, seed=1)
        assert np.abs(nearest_physical(rho.matrix).matrix - rho.matrix).max() < 1e-12

    def test_clip_and_renormalise(self):
        np.testing.assert_allclose(nearest_physical(np.diag([1.2, -0.2])).matrix, np.diag([1.0, 0.0]),
                                   atol=1e-15)

    def test_zero_matrix(self):
        with pytest.raises(ZeroTrace):
            nearest_physical(np.zeros((3, 3)))

    def test_rejects_non_hermitian(self):
        with pytest.raises(TomographyError):
            nearest_physical(np.array([[0.5, 1.0], [0.0, 0.5]]))


class TestDensityMatrixType:
    def test_immutable(self):
        rho = random_density(3, seed=0)
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 1

    def test_rejects_non_hermitian(self):
        with pytest.raises(TomographyError):
            DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))

    def test_rejects_bad_trace(self):
        with pytest.raises(TomographyError):
            DensityMatrix(np.eye(2))

    def test_rejects_negative(self):
        with pytest.raises(TomographyError):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_pure_state_norm(self):
        with pytest.raises(TomographyError):
            ket(1, 1)


class TestJson:
    def test_round_trip(self):
        rho = random_density(4, seed=5)
        back, corr = density_from_json(json.loads(json.dumps(density_to_json(rho))))
        assert np.array_equal(back.matrix, rho.matrix)
        assert corr == 0.0

    def test_symmetrises_and_records_correction(self):
        obj = {"dim": 2, "re": [[0.5, 0.25], [0.25, 0.5]], "im": [[0.0, 0.1], [0.0, 0.0]]}
        rho, corr = density_from_json(obj)
        assert rho.matrix[0, 1] == pytest.approx(0.25 + 0.05j)
        assert rho.matrix[1, 0] == pytest.approx(0.25 - 0.05j)
        # correction is +-0.05i in both off-diagonal slots
        assert corr == pytest.approx(math.sqrt(2) * 0.05)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            density_from_json({"dim": 3, "re": [[1.0]], "im": [[0.0]]})
