import numpy as np
import pytest

from redcolloc import (
    DegenerateBasisError,
    IllConditionedModelError,
    LeastSquaresRCM,
    ShapeError,
    build_anisotropic,
    ls_online_matrix,
    ls_online_solve,
    operator_at,
    rhs_at,
    truth_solve,
    weighted_gram_schmidt,
)
from redcolloc.lsrcm import solve_normal_equations


class TestGramSchmidt:
    def test_weighted_orthonormal(self, rng):
        W = rng.standard_normal((20, 20)) + 5 * np.eye(20)
        V = rng.standard_normal((6, 20))
        Q = weighted_gram_schmidt(V, W)
        G = (Q @ W.T) @ (W @ Q.T)
        np.testing.assert_allclose(G, np.eye(6), atol=1e-10)

    def test_same_span(self, rng):
        V = rng.standard_normal((4, 12))
        Q = weighted_gram_schmidt(V, None)
        coef = np.linalg.lstsq(Q.T, V.T, rcond=None)[0]
        np.testing.assert_allclose(Q.T @ coef, V.T, atol=1e-12)

    def test_dependent_input(self, rng):
        v = rng.standard_normal(10)
        with pytest.raises(DegenerateBasisError):
            weighted_gram_schmidt([v, 2 * v], None)


class TestOnline:
    def test_matrix_against_fine_grid(self, ls_model, rng):
        p = ls_model.problem
        for mu in p.domain.sample(5, rng):
            AtA, Atf = ls_online_matrix(ls_model, mu)
            A = operator_at(p, mu) @ ls_model.basis_.T
            f = rhs_at(p, mu)
            np.testing.assert_allclose(AtA, A.T @ A, rtol=1e-11, atol=1e-11 * np.abs(A.T @ A).max())
            np.testing.assert_allclose(Atf, A.T @ f, rtol=1e-11, atol=1e-11 * np.abs(A.T @ f).max())
            assert np.allclose(AtA, AtA.T, rtol=1e-13)
            np.linalg.cholesky(AtA)

    def test_single_term_one_vector(self, rng):
        from redcolloc import AffineProblem

        p = AffineProblem("one", 8, [[1, 2]], [3], [["-dxx", "1"], ["-dyy", "1"]], [["exp(x)", "1"]])
        m = LeastSquaresRCM(p, n_max=1, random_state=0).fit()
        AtA, Atf = ls_online_matrix(m, [1.5])
        A = operator_at(p, [1.5]) @ m.basis_[0]
        assert AtA[0, 0] == pytest.approx(A @ A, rel=1e-13)
        c, _ = ls_online_solve(m, [1.5])
        assert c[0] == pytest.approx((A @ rhs_at(p, [1.5])) / (A @ A), rel=1e-12)

    def test_snapshot_reproduction(self, ls_model):
        for mu, snap in zip(ls_model.selected_mus_, ls_model.snapshots_):
            _, u = ls_online_solve(ls_model, mu)
            assert np.linalg.norm(u - snap) <= 1e-8 * np.linalg.norm(snap)

    def test_n_active_range(self, ls_model):
        with pytest.raises(ShapeError):
            ls_online_matrix(ls_model, [1, 1], 0)
        with pytest.raises(ShapeError):
            ls_online_matrix(ls_model, [1, 1], ls_model.n_basis_ + 1)

    def test_ill_conditioned(self):
        AtA = np.array([[[1.0, 0.0], [0.0, 1e-20]]])
        with pytest.raises(IllConditionedModelError):
            solve_normal_equations(AtA, np.ones((1, 2)))

    def test_online_extents_independent_of_grid(self):
        shapes = []
        for nx in (8, 14):
            p = build_anisotropic(nx).with_train_shape((4, 4))
            m = LeastSquaresRCM(p, n_max=3, tol=0, random_state=0).fit()
            shapes.append((m.gram_.shape, m.rhs_gram_.shape))
        assert shapes[0] == shapes[1]


class TestTraining:
    def test_attributes(self, ls_model):
        n = ls_model.n_basis_
        assert n == 8
        assert ls_model.selected_mus_.shape == (n, 2)
        assert len(np.unique(ls_model.selected_index_)) == n
        assert ls_model.training_log_.shape == (n, 4)
        assert np.isnan(ls_model.training_log_[0, -1])
        np.testing.assert_array_equal(ls_model.training_log_[:, 1:3], ls_model.selected_mus_)

    def test_weighted_gram_identity(self, ls_model):
        p = ls_model.problem
        W = operator_at(p, p.domain.center)
        G = (W @ ls_model.basis_.T).T @ (W @ ls_model.basis_.T)
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() <= 1e-10
        np.testing.assert_allclose(np.diag(G), 1.0, atol=1e-10)

    def test_gram_symmetry(self, ls_model):
        np.testing.assert_array_equal(ls_model.gram_, ls_model.gram_.transpose(2, 3, 0, 1))

    def test_second_pick_differs(self, ls_model):
        assert not np.array_equal(ls_model.selected_mus_[0], ls_model.selected_mus_[1])

    def test_log_records_selecting_estimate(self, aniso12):
        m = LeastSquaresRCM(aniso12, n_max=4, tol=0, random_state=3).fit()
        for n in range(1, 4):
            assert m.training_log_[n, -1] == pytest.approx(m.estimate_history_[n - 1], rel=1e-8)

    def test_log_nearly_non_increasing(self, ls_model):
        d = ls_model.training_log_[1:, -1]
        assert np.all(d[1:] <= 10 * d[:-1])

    def test_tolerance_stops(self, aniso12):
        m = LeastSquaresRCM(aniso12, n_max=30, tol=1e-1, random_state=0).fit()
        assert m.estimate_history_[-1] <= 1e-1
        assert m.n_basis_ < 30

    def test_seed_reproducible(self, aniso12):
        a = LeastSquaresRCM(aniso12, n_max=3, tol=0, random_state=5).fit()
        b = LeastSquaresRCM(aniso12, n_max=3, tol=0, random_state=5).fit()
        np.testing.assert_array_equal(a.selected_index_, b.selected_index_)
        assert a.basis_.tobytes() == b.basis_.tobytes()

    def test_incremental_matches_end(self, aniso12):
        a = LeastSquaresRCM(aniso12, n_max=5, tol=0, random_state=1).fit()
        b = LeastSquaresRCM(aniso12, n_max=5, tol=0, random_state=1, orthonormalize="incremental").fit()
        np.testing.assert_array_equal(a.selected_index_, b.selected_index_)
        mu = np.array([[1.3, 0.7]])
        np.testing.assert_allclose(a.predict(mu), b.predict(mu), rtol=1e-8, atol=1e-10)

    def test_all_points_selected(self):
        p = build_anisotropic(8).with_train_shape((2, 1))
        from redcolloc import RedCollocError

        with pytest.raises(RedCollocError):
            LeastSquaresRCM(p, n_max=5, tol=0, random_state=0).fit()

    def test_explicit_training_set(self, aniso12):
        X = aniso12.domain.sample(10, 0)
        m = LeastSquaresRCM(aniso12, n_max=3, tol=0, random_state=0).fit(X)
        assert all(any(np.array_equal(s, x) for x in X) for s in m.selected_mus_)

    @pytest.mark.parametrize(
        "kwargs", [dict(n_max=0), dict(tol=-1.0), dict(orthonormalize="never")]
    )
    def test_bad_params(self, aniso12, kwargs):
        with pytest.raises(ValueError):
            LeastSquaresRCM(aniso12, **kwargs).fit()

    def test_bad_problem(self):
        with pytest.raises(TypeError):
            LeastSquaresRCM(problem="anisotropic").fit()

    def test_get_params(self, aniso12):
        params = LeastSquaresRCM(aniso12, n_max=4).get_params()
        assert params["n_max"] == 4 and params["orthonormalize"] == "end"

    def test_unfitted(self, aniso12):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            LeastSquaresRCM(aniso12).predict([[1.0, 1.0]])

    def test_predict_matches_truth_at_snapshots(self, ls_model):
        mu = ls_model.selected_mus_[2]
        u = truth_solve(ls_model.problem, mu).values
        np.testing.assert_allclose(ls_model.predict(mu[None])[0], u, atol=1e-8 * np.abs(u).max())
