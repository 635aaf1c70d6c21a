import pytest

from scpt.gradcheck import relative_error, run_gradcheck
from scpt.losses import LossWeights


def test_relative_error_floor():
    assert relative_error(1.0, 1.0) == 0
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)
    assert relative_error(2.0, 1.0) == 0.5


def test_all_terms_pass():
    rep = run_gradcheck(seed=1)
    assert rep.passed(1e-4), rep.per_tensor
    assert any(n.startswith("physio.") for n in rep.per_tensor)
    assert any(n.startswith("dssa.") for n in rep.per_tensor)
    assert all(not n.startswith("backbone.") for n in rep.per_tensor)


def test_sum_normalization_passes():
    assert run_gradcheck(seed=2, weights=LossWeights(0.2, 0.1, 0.6), normalization="sum").passed()
