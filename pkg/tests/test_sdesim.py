import math

import numpy as np
import pytest

from gammasmear import sdesim
from gammasmear.distfit import GammaParams


def small(**kw):
    base = dict(dt=1e-2, horizon=0.5, n_paths=2000, seed=5)
    base.update(kw)
    return sdesim.SdeConfig.linear(4.0, 4.0, **base)


def test_same_seed_same_paths():
    a = sdesim.simulate_variance(small())
    b = sdesim.simulate_variance(small())
    np.testing.assert_array_equal(a.terminal, b.terminal)
    c = sdesim.simulate_variance(small(seed=6))
    assert not np.array_equal(a.terminal, c.terminal)


def test_worker_count_does_not_change_output():
    cfg = small(n_paths=3 * sdesim.BLOCK_PATHS + 17, horizon=0.1)
    one = sdesim.simulate_volatility(cfg, workers=1)
    four = sdesim.simulate_volatility(cfg, workers=4)
    np.testing.assert_array_equal(one.terminal, four.terminal)


def test_zero_noise_relaxes_to_mean():
    mu, nu, dt, T = 2.0, 6.0, 1e-3, 3.0
    cfg = sdesim.SdeConfig.constant(mu, nu, dt=dt, horizon=T, n_paths=4, v0=1.0, noise=False)
    ens = sdesim.simulate_variance(cfg)
    ref = nu / mu + (1.0 - nu / mu) * (1.0 - mu * dt) ** cfg.n_steps
    np.testing.assert_allclose(ens.terminal, ref, rtol=1e-12)


def test_constant_schedule_matches_cir_mean():
    mu, nu, T, v0 = 3.0, 6.0, 0.5, 0.5
    cfg = sdesim.SdeConfig.constant(mu, nu, dt=1e-3, horizon=T, n_paths=20000, v0=v0, seed=2)
    ens = sdesim.simulate_variance(cfg)
    mean = nu / mu + (v0 - nu / mu) * math.exp(-mu * T)
    assert ens.terminal.mean() == pytest.approx(mean, abs=4 * ens.terminal.std() / math.sqrt(2e4))


def test_boundary_policies():
    # small shape parameter: many proposals cross zero
    kw = dict(dt=5e-2, horizon=1.0, n_paths=2000, seed=1, v0=0.05)
    for boundary in sdesim.BOUNDARIES:
        cfg = sdesim.SdeConfig.constant(10.0, 0.3, boundary=boundary, **kw)
        ens = sdesim.simulate_variance(cfg)
        assert ens.boundary_events > 0
        assert np.all(ens.terminal > 0)
    with pytest.raises(ValueError):
        sdesim.SdeConfig.constant(1.0, 1.0, boundary="absorb")


def test_blowup_is_reported():
    cfg = sdesim.SdeConfig.constant(1.0, 1.0, dt=5.0, horizon=200.0, n_paths=100, v0=1.0,
                                    blowup_factor=2.0)
    with pytest.raises(sdesim.SimulationUnstable, match="reduce dt"):
        sdesim.simulate_variance(cfg)


def test_dump_round_trip(tmp_path):
    ens = sdesim.simulate_variance(small(record_every=5, n_paths=10))
    n_paths, n_rec = ens.dump_paths(tmp_path / "p.bin")
    assert (n_paths, n_rec) == (10, ens.config.n_steps // 5)
    back = sdesim.load_paths(tmp_path / "p.bin", n_rec)
    np.testing.assert_array_equal(back, ens.paths.T)
    np.testing.assert_array_equal(back[:, -1], ens.terminal)
    with pytest.raises(ValueError):
        sdesim.load_paths(tmp_path / "p.bin", n_rec + 1)


def test_config_round_trip():
    cfg = small(boundary="reject", literal=True)
    again = sdesim.SdeConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError):
        sdesim.SdeConfig.from_dict({"schedule": {"type": "cubic"}})
    with pytest.raises(ValueError):
        small(dt=0.0)


def test_stationary_check_null_and_shift():
    p = GammaParams(4.0, 6.0)
    rng = np.random.default_rng(0)
    x = rng.gamma(p.nu, 1 / p.mu, 50000)
    rep = sdesim.stationary_check(x, p)
    assert rep.ks_distance < 0.01
    assert rep.moments["mean"]["target"] == pytest.approx(1.5)
    assert sdesim.stationary_check(1.1 * x, p).ks_distance > 0.02
    chi = sdesim.stationary_check(np.sqrt(x), p, "chi")
    assert chi.ks_distance < 0.01
    assert chi.moments["mean"]["sample"] == pytest.approx(chi.moments["mean"]["target"], rel=0.01)
    with pytest.raises(ValueError):
        sdesim.stationary_check(x[:50], p)


def test_linear_schedule_tracks_moving_law():
    ens = sdesim.simulate_variance(small(n_paths=20000, horizon=1.0, dt=2e-3))
    assert sdesim.stationary_check(ens, ens.target()).ks_distance < 0.02


def test_drift_correction_vanishes_for_constant_parameters():
    v = np.linspace(0.1, 3.0, 7)
    np.testing.assert_array_equal(sdesim.drift_correction(v, 2.0, 3.0), 0.0)


def test_drift_correction_large_t_bounded():
    # linear schedules: a*t at fixed v/vbar settles to a finite profile
    v = np.array([0.5, 0.8, 1.2, 2.0])
    rows = [sdesim.drift_correction(v, 4.0 * t, 4.0 * t, dmu=4.0, dnu=4.0) * t
            for t in (1e2, 1e3, 1e4)]
    assert np.max(np.abs(rows)) < 1.0
    np.testing.assert_allclose(rows[0], rows[-1], rtol=0.01)


def test_drift_correction_literal_differs():
    exact = sdesim.drift_correction(0.5, 8.0, 4.0, dmu=4.0, dnu=4.0)
    literal = sdesim.drift_correction(0.5, 8.0, 4.0, dmu=4.0, dnu=4.0, literal=True)
    assert exact != pytest.approx(literal)
