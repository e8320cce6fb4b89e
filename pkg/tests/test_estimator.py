import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.base import clone

from maternkrig import (
    FitConfig,
    MaternKriging,
    MaternParams,
    fit_fixed_rho,
    fit_mle,
    simulate_gp,
)


def _data(seed=0, n=40):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 2))
    z = simulate_gp(x, MaternParams(1.0, 0.2, 0.5), rng.standard_normal(n))
    return x, z


class TestSklearnContract:
    def test_get_params_round_trip(self):
        model = MaternKriging(nu=1.5, mode="fixed", rho=0.3)
        params = model.get_params()
        assert params["nu"] == 1.5
        assert params["mode"] == "fixed"
        assert params["rho"] == 0.3
        rebuilt = MaternKriging(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        model = MaternKriging().set_params(nu=2.5, grid_points=10)
        assert model.nu == 2.5
        assert model.grid_points == 10

    def test_clone_drops_fitted_state(self):
        x, z = _data()
        model = MaternKriging().fit(x, z)
        fresh = clone(model)
        assert not hasattr(fresh, "fit_result_")
        assert fresh.get_params() == model.get_params()


class TestFit:
    def test_mle_matches_functional_api(self):
        x, z = _data(1)
        model = MaternKriging(nu=0.5).fit(x, z)
        reference = fit_mle(z, x, FitConfig(nu=0.5))
        assert model.rho_ == reference.rho_hat
        assert model.sigma2_ == reference.sigma2_hat
        assert model.ci_c_ == reference.ci_c
        assert model.fit_result_.mode == "mle"
        assert model.n_features_in_ == 2

    def test_fixed_matches_functional_api(self):
        x, z = _data(2)
        model = MaternKriging(nu=0.5, mode="fixed", rho=0.25).fit(x, z)
        reference = fit_fixed_rho(z, x, 0.25, 0.5)
        assert model.rho_ == 0.25
        assert model.c_ == reference.c_hat
        assert model.at_boundary_ is False

    def test_tapered_with_infinite_support_equals_mle(self):
        x, z = _data(3)
        exact = MaternKriging(nu=0.5).fit(x, z)
        tapered = MaternKriging(nu=0.5, mode="tapered", taper_range=np.inf).fit(x, z)
        assert tapered.rho_ == exact.rho_
        assert tapered.sigma2_ == exact.sigma2_
        assert tapered.fit_result_.mode == "tapered_mle"

    def test_fit_returns_self(self):
        x, z = _data(4)
        model = MaternKriging()
        assert model.fit(x, z) is model

    def test_mode_requirements(self):
        x, z = _data(5)
        with pytest.raises(ValueError, match="requires rho"):
            MaternKriging(mode="fixed").fit(x, z)
        with pytest.raises(ValueError, match="requires taper_range"):
            MaternKriging(mode="tapered").fit(x, z)
        with pytest.raises(ValueError, match="mode"):
            MaternKriging(mode="reml").fit(x, z)

    def test_rejects_mismatched_shapes(self):
        x, z = _data(6)
        with pytest.raises(ValueError):
            MaternKriging().fit(x, z[:-1])


class TestPredict:
    def test_interpolates_training_data(self):
        x, z = _data(7)
        model = MaternKriging(nu=0.5, mode="fixed", rho=0.2).fit(x, z)
        assert_allclose(model.predict(x), z, atol=1e-8)

    def test_single_point_and_mspe(self):
        x, z = _data(8)
        model = MaternKriging(nu=0.5, mode="fixed", rho=0.2).fit(x, z)
        z_hat, mspe = model.predict(np.array([0.5, 0.5]), return_mspe=True)
        assert isinstance(z_hat, float)
        assert 0.0 <= mspe <= model.sigma2_ + 1e-12

    def test_batch_shapes(self):
        x, z = _data(9)
        model = MaternKriging(nu=1.5, mode="fixed", rho=0.1).fit(x, z)
        targets = np.random.default_rng(10).uniform(size=(7, 2))
        z_hat, mspe = model.predict(targets, return_mspe=True)
        assert z_hat.shape == (7,)
        assert mspe.shape == (7,)

    def test_unfitted_predict_raises(self):
        with pytest.raises(ValueError, match="not fitted"):
            MaternKriging().predict(np.array([0.5, 0.5]))
