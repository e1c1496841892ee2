import numpy as np
import pytest
import scipy.sparse as sp

from conftest import path_segments
from netcar.network import AdjacencyMatrix, build_dual_graph, connected_components
from netcar.priors import (
    CARSpec,
    CrossLevelPrecision,
    GraphSpectrum,
    PriorError,
    icar_precision,
    mcar_precision,
    modelG_precision,
    pcar_precision,
    read_precision,
    sum_to_zero_constraints,
    write_precision,
)


def random_connected(rng, n):
    """Random spanning tree plus extra edges."""
    pairs = {(int(rng.integers(0, i)), i) for i in range(1, n)}
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        pairs.add((a, b))
    return AdjacencyMatrix(n, np.array(sorted(pairs)))


def numeric_rank(Q):
    lam = np.linalg.eigvalsh(Q)
    return int(np.sum(lam > 1e-8 * lam.max())), lam


def dense_logdens(Q, x, rank, null=None):
    """Gaussian (generalized) log-density from dense eigenvalues."""
    lam = np.linalg.eigvalsh(Q)
    lam = np.sort(lam)[len(lam) - rank:]
    return 0.5 * np.sum(np.log(lam)) - 0.5 * rank * np.log(2 * np.pi) - 0.5 * x @ Q @ x


def project(x, C):
    C = C.toarray()
    return x - C.T @ np.linalg.solve(C @ C.T, C @ x)


PATH2 = AdjacencyMatrix(2, np.array([[0, 1]]))


class TestUnivariate:
    def test_path_two_icar(self):
        P = icar_precision(PATH2)
        assert P.dense().tolist() == [[1, -1], [-1, 1]] and P.rank_deficiency == 1

    def test_toy_icar(self, toy_lattice):
        P = icar_precision(toy_lattice.adjacency)
        Q = P.dense()
        assert np.diag(Q).tolist() == [2, 3, 2, 2, 3, 4]
        assert numeric_rank(Q)[0] == 5
        assert np.all(Q.sum(axis=1) == 0)

    def test_isolated_unit_rejected(self):
        W = AdjacencyMatrix(3, np.array([[0, 1]]))
        with pytest.raises(PriorError, match="drop_islands"):
            icar_precision(W)

    def test_pcar_limits(self):
        Q = pcar_precision(PATH2, 1e-12).dense()
        np.testing.assert_allclose(Q, np.eye(2), atol=1e-11)
        np.testing.assert_allclose(np.linalg.eigvalsh(pcar_precision(PATH2, 0.5).dense()), [0.5, 1.5], atol=1e-15)

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.2, 1.3])
    def test_pcar_bad_rho(self, rho):
        with pytest.raises(PriorError):
            pcar_precision(PATH2, rho)

    def test_toy_rho_099(self, toy_lattice):
        assert np.linalg.eigvalsh(pcar_precision(toy_lattice.adjacency, 0.99).dense()).min() > 0

    def test_log_det_against_dense(self):
        rng = np.random.default_rng(0)
        W = random_connected(rng, 25)
        for rho in (0.1, 0.7, 0.99):
            P = pcar_precision(W, rho)
            assert abs(P.log_det - np.linalg.slogdet(P.dense())[1]) < 1e-9
        P = icar_precision(W)
        lam = np.sort(np.linalg.eigvalsh(P.dense()))[1:]
        assert abs(P.log_det - np.sum(np.log(lam))) < 1e-9

    def test_d_log_det(self):
        S = GraphSpectrum(random_connected(np.random.default_rng(2), 20))
        h = 1e-6
        for r in (0.2, 0.8):
            assert abs(S.d_log_det(r) - (S.log_det(r + h) - S.log_det(r - h)) / (2 * h)) < 1e-6

    def test_smallest_eigenvalue_monotone(self):
        W = random_connected(np.random.default_rng(5), 30)
        mins = [np.linalg.eigvalsh(pcar_precision(W, r).dense()).min() for r in np.linspace(0.01, 0.99, 30)]
        assert np.all(np.diff(mins) <= 1e-12)


class TestRanksRandomGraphs:
    def test_builders(self):
        rng = np.random.default_rng(1)
        Om = np.array([[2.0, 0.6], [0.6, 1.0]])
        for _ in range(20):
            n = int(rng.integers(2, 51))
            W = random_connected(rng, n)
            for P in (icar_precision(W), mcar_precision(W, CARSpec("intrinsic"), CrossLevelPrecision(Om))[0],
                      mcar_precision(W, CARSpec("proper", rho=0.6), CrossLevelPrecision(Om))[0],
                      modelG_precision(W, (0.3, 0.9), CrossLevelPrecision(Om))):
                Q = P.dense()
                assert np.array_equal(Q, Q.T)
                r, lam = numeric_rank(Q)
                assert lam.min() >= -1e-8 * lam.max()
                assert r == P.dim - P.rank_deficiency


class TestMultivariate:
    def test_j1_reduces(self):
        W = random_connected(np.random.default_rng(3), 12)
        P, C = mcar_precision(W, CARSpec("intrinsic", J=1), CrossLevelPrecision([[1.0]]))
        assert (P.Q != icar_precision(W).Q).nnz == 0 and len(C) == 1
        P, _ = mcar_precision(W, CARSpec("proper", rho=0.4, J=1), CrossLevelPrecision([[1.0]]))
        assert (P.Q != pcar_precision(W, 0.4).Q).nnz == 0

    def test_kronecker_consistency(self):
        rng = np.random.default_rng(4)
        W = random_connected(rng, 15)
        Om = np.array([[1.5, -0.4], [-0.4, 0.8]])
        P, _ = mcar_precision(W, CARSpec("proper", rho=0.7), CrossLevelPrecision(Om))
        u, v = rng.standard_normal(15), rng.standard_normal(2)
        B = pcar_precision(W, 0.7).Q
        np.testing.assert_allclose(P.Q @ np.kron(u, v), np.kron(B @ u, Om @ v), atol=1e-12)

    def test_proper_identity_full_rank(self):
        W = random_connected(np.random.default_rng(6), 20)
        P, C = mcar_precision(W, CARSpec("proper", rho=0.9), CrossLevelPrecision(np.eye(2)))
        assert numeric_rank(P.dense())[0] == 40 and len(C) == 0

    def test_non_spd_omega(self):
        with pytest.raises(PriorError, match="smallest eigenvalue"):
            CrossLevelPrecision([[1.0, 2.0], [2.0, 1.0]])

    def test_cross_independent_needs_diagonal(self):
        with pytest.raises(PriorError):
            mcar_precision(PATH2, CARSpec("intrinsic", cross_independent=True), CrossLevelPrecision([[1, 0.2], [0.2, 1]]))

    def test_log_density_matches_dense(self):
        rng = np.random.default_rng(7)
        W = random_connected(rng, 12)
        Om = np.array([[1.2, 0.3], [0.3, 0.7]])
        P, C = mcar_precision(W, CARSpec("intrinsic"), CrossLevelPrecision(Om))
        x = project(rng.standard_normal(24), C.C)
        assert abs(P.log_density(x) - dense_logdens(P.dense(), x, 22)) < 1e-10
        P, _ = mcar_precision(W, CARSpec("proper", rho=0.5), CrossLevelPrecision(Om))
        x = rng.standard_normal(24)
        assert abs(P.log_density(x) - dense_logdens(P.dense(), x, 24)) < 1e-10


class TestFactorization:
    @pytest.mark.parametrize("family", ["intrinsic", "proper"])
    def test_independent_levels(self, family):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(2, 21))
            W = random_connected(rng, n)
            s2 = rng.uniform(0.2, 3.0, 2)
            om = CrossLevelPrecision(np.diag(1 / s2))
            spec = CARSpec(family, cross_independent=True, rho=0.6 if family == "proper" else None)
            P, C = mcar_precision(W, spec, om)
            uni = icar_precision(W) if family == "intrinsic" else pcar_precision(W, 0.6)
            for _ in range(5):
                x = rng.standard_normal(2 * n)
                if len(C):
                    x = project(x, C.C)
                X = x.reshape(n, 2)
                total = 0.0
                for j in range(2):
                    r = n - uni.rank_deficiency
                    total += uni.log_density(X[:, j] / np.sqrt(s2[j])) - 0.5 * r * np.log(s2[j])
                assert abs(P.log_density(x) - total) <= 1e-10


class TestModelG:
    def test_collapse(self):
        rng = np.random.default_rng(9)
        W = random_connected(rng, 18)
        Om = CrossLevelPrecision.from_covariance([1.5, 0.5], 0.6)
        G = modelG_precision(W, (0.8, 0.8), Om)
        P, _ = mcar_precision(W, CARSpec("proper", rho=0.8), Om)
        assert abs(G.log_det - P.log_det) <= 1e-10
        for _ in range(20):
            x = rng.standard_normal(36)
            assert abs(G.log_density(x) - P.log_density(x)) <= 1e-10

    def test_path3_spd(self):
        W = build_dual_graph(path_segments([1.0, 1.0, 1.0]))
        assert np.linalg.eigvalsh(modelG_precision(W, (0.3, 0.9), CrossLevelPrecision(np.eye(2))).dense()).min() > 0

    def test_j1_equals_pcar(self):
        W = random_connected(np.random.default_rng(10), 9)
        G = modelG_precision(W, (0.35,), CrossLevelPrecision([[1.0]]))
        np.testing.assert_allclose(G.dense(), pcar_precision(W, 0.35).dense(), atol=1e-15)

    def test_level_major_construction(self):
        W = random_connected(np.random.default_rng(11), 10)
        Om = np.array([[2.0, 0.5], [0.5, 1.0]])
        rho = (0.2, 0.95)
        G = modelG_precision(W, rho, CrossLevelPrecision(Om)).dense()
        L = np.linalg.cholesky(Om)
        A = np.kron(L, np.eye(10))
        blocks = sp.block_diag([pcar_precision(W, r).Q for r in rho]).toarray()
        Q_lm = A @ blocks @ A.T
        perm = np.array([j * 10 + i for i in range(10) for j in range(2)])
        np.testing.assert_allclose(G, Q_lm[np.ix_(perm, perm)], atol=1e-12)
        assert abs(modelG_precision(W, rho, CrossLevelPrecision(Om)).log_det - np.linalg.slogdet(G)[1]) < 1e-9


class TestConstraints:
    @pytest.mark.parametrize("n_comp,J,expected", [(1, 2, 2), (3, 2, 6), (1, 1, 1)])
    def test_counts(self, n_comp, J, expected):
        pairs = np.array([[2 * c, 2 * c + 1] for c in range(n_comp)])
        lab = connected_components(AdjacencyMatrix(2 * n_comp, pairs))
        C = sum_to_zero_constraints(lab, J)
        assert len(C) == expected
        assert np.all(C.C.toarray().sum(axis=1) == 2)

    def test_null_space_spanned(self):
        W = AdjacencyMatrix(5, np.array([[0, 1], [1, 2], [3, 4]]))
        P, C = mcar_precision(W, CARSpec("intrinsic"), CrossLevelPrecision(np.eye(2)))
        # prior null space is exactly the row space of the constraints
        np.testing.assert_allclose(P.Q @ C.C.T.toarray(), 0, atol=1e-14)
        assert len(C) == P.rank_deficiency == 4


def test_precision_round_trip(tmp_path):
    W = random_connected(np.random.default_rng(12), 8)
    P, _ = mcar_precision(W, CARSpec("proper", rho=0.3), CrossLevelPrecision(np.eye(2)))
    write_precision(tmp_path / "q.txt", P)
    header, Q = read_precision(tmp_path / "q.txt")
    assert header["layout"] == "unit-major" and header["rank_deficiency"] == 0
    assert (Q != P.Q).nnz == 0
