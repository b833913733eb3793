import math

import pytest

import depthbnn as db


def test_pmf_normalizes_and_matches_support():
    law = db.TruncNormalDepth(0.0, 1.8, 0.025, 0.975)
    assert db.support(law) == (0, 4)
    q = db.pmf(law)
    assert (q.lo, q.hi) == (0, 4)
    assert math.isclose(sum(q.probs), 1.0, abs_tol=1e-12)
    assert db.support(db.PoissonDepth(1.0, 0.95)) == (0, 3)


def test_poisson_log_pmf():
    law = db.PoissonDepth(0.5)
    for k in range(6):
        expected = k * math.log(0.5) - 0.5 - math.lgamma(k + 1)
        assert math.isclose(db.log_pmf(law, k), expected, rel_tol=1e-12)


def test_kl_values():
    assert db.gaussian_kl(0.0, 1.0, 0.0, 1.0) == 0.0
    assert math.isclose(db.gaussian_kl(1.0, 1.0, 0.0, 1.0), 0.5, rel_tol=1e-12)
    prior = db.TruncNormalDepth(0.0, 1.15)
    q = db.pmf(db.TruncNormalDepth(0.0, 1.15, 0.0, 0.999999))
    assert db.depth_kl(q, prior) >= 0.0


def test_invalid_parameters_raise():
    with pytest.raises(ValueError):
        db.TruncNormalDepth(0.0, -1.0)
    with pytest.raises(ValueError):
        db.TrainConfig(no_such_key=1)


def test_spiral_generation():
    d = db.generate_spiral(omega=2.0, n=2000, seed=3)
    assert len(d) == 2000
    assert d.xs.shape == (2000, 2)
    assert set(d.ys) == {0, 1}
    assert d.checksum == db.generate_spiral(2.0, 2000, 3).checksum
    assert db.radius_ks(d.radius) < 1.63 / math.sqrt(2000)


def test_short_training_run(tmp_path):
    cfg = db.TrainConfig(epochs=3, n_train=64, n_val=64, n_test=64, batch_size=32, hidden_width=4, omega=1)
    assert cfg.epochs == 3
    assert "epochs = 3" in cfg.to_text()
    r = db.train(cfg, tmp_path / "run")
    h = r.history
    assert h["epoch"] == [1, 2, 3]
    assert 0.0 <= r.test_accuracy <= 1.0
    assert (tmp_path / "run" / "history.csv").exists()
    assert db.train(cfg).best_val_vfe == r.best_val_vfe
