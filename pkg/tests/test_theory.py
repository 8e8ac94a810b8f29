import pytest

from opkl.errors import InvalidArgumentError
from opkl.theory import theoretical_exponent


def test_pred_finite_boundary():
    assert theoretical_exponent("pred", 0.5, None, 0.5) == pytest.approx(-0.5)


def test_pred_finite_branches():
    assert theoretical_exponent("pred", 1.0, None, 0.4) == pytest.approx(-0.4)
    assert theoretical_exponent("pred", 0.25, None, 0.6) == pytest.approx(-0.2)


def test_pred_online():
    assert theoretical_exponent("pred", 0.75, 0.5, 0.6, "online") == pytest.approx(-0.6)
    assert theoretical_exponent("pred", 0.75, 0.5, 0.8, "online") == pytest.approx(-0.3)
    # without a capacity exponent the saturation is min(2r, 1)
    assert theoretical_exponent("pred", 0.75, None, 0.8, "online") == pytest.approx(-0.2)


def test_est_finite_small_s():
    assert theoretical_exponent("est", 1.0, 0.0, 2 / 3) == pytest.approx(-1 / 3)
    assert theoretical_exponent("est", 1.0, 0.25, 2 / 3) == pytest.approx(-1 / 3)


def test_est_finite_early_branch():
    # s - (1 + s) theta below the saturation point (2r + s - 1)/(2r + s)
    assert theoretical_exponent("est", 1.0, 0.5, 0.5) == pytest.approx(0.5 - 1.5 * 0.5)


def test_est_needs_rkhs_target():
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent("est", 0.5, 0.5, 0.6)
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent("est", 1.0, None, 0.4)


def test_misspec_finite():
    assert theoretical_exponent("misspec", 0.45, 0.5, 0.45, beta=0.2) == pytest.approx(-0.34)
    assert theoretical_exponent("misspec", 0.45, 0.5, 0.8, beta=0.2) == pytest.approx(-0.7 * 0.2)


def test_misspec_guards():
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent("misspec", 0.45, 0.5, 0.45)
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent("misspec", 0.05, 0.5, 0.45, beta=0.2)
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent("misspec", 0.45, 0.5, 0.1, beta=0.2)


@pytest.mark.parametrize("args", [("bias", 0.5, None, 0.5), ("pred", 0.5, None, 1.0),
                                  ("pred", 0.0, None, 0.5), ("pred", 0.5, 1.5, 0.5)])
def test_argument_guards(args):
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent(*args)
    with pytest.raises(InvalidArgumentError):
        theoretical_exponent("pred", 0.5, None, 0.5, mode="batch")
