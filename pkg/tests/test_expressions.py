import numpy as np
import pytest

from nlspectra.expressions import (ExpressionError, evaluate, parse_expression,
                                   reduce_phase, to_string,
                                   validate_expression)


def ev(src, tau=0.0, x=(0.0,), periods=None):
    out = evaluate(parse_expression(src), tau, np.atleast_2d(x), periods)
    return float(np.asarray(out).reshape(-1)[0])


def test_constants_and_coords():
    assert ev("3.5") == 3.5
    assert ev("x1", x=(0.25,)) == 0.25
    assert ev("x1^2", x=(0.5,)) == 0.25
    assert ev("x2", x=(0.1, 0.7)) == 0.7


def test_precedence_and_grouping():
    assert ev("2 + 3*x1", x=(1.0,)) == 5.0
    assert ev("(2 + 3)*x1", x=(1.0,)) == 5.0
    assert ev("2 - 3 - 1") == -2.0
    assert ev("-x1^2", x=(2.0,)) == -4.0
    assert ev("(-x1)^2", x=(2.0,)) == 4.0


def test_trig_atoms():
    assert ev("sin_t", tau=0.25) == pytest.approx(1.0)
    assert ev("cos_t", tau=0.5) == pytest.approx(-1.0)
    val = ev("sin_x1", x=(0.5,), periods=(2.0,))
    assert val == pytest.approx(1.0)


@pytest.mark.parametrize("src", ["", "2 +", "foo", "x0", "x1^-1", "x1^0.5",
                                 "(2", "2 2"])
def test_parse_errors(src):
    with pytest.raises(ExpressionError):
        parse_expression(src)


def test_validation_errors():
    node = parse_expression("x3")
    with pytest.raises(ExpressionError):
        validate_expression(node, dim=2, has_periods=False)
    node = parse_expression("sin_x1")
    with pytest.raises(ExpressionError):
        validate_expression(node, dim=1, has_periods=False)
    validate_expression(node, dim=1, has_periods=True)


@pytest.mark.parametrize("src", [
    "1 + 2*x1", "-x1^2 + cos_t", "(x1 - 0.5)^2 * sin_t", "sin_x2 + cos_x1",
])
def test_canonical_string_round_trip(src):
    node = parse_expression(src)
    assert parse_expression(to_string(node)) == node


def test_phase_reduction_is_exactly_periodic():
    # Exactness holds whenever t + T is exactly representable: dyadic times
    # against T = 1 qualify.
    rng = np.random.default_rng(3)
    for _ in range(200):
        t = float(rng.integers(0, 2 ** 40)) / 2.0 ** 30 - 300.0
        assert reduce_phase(t + 1.0, 1.0) == reduce_phase(t, 1.0)
    assert reduce_phase(-0.25, 1.0) == 0.75
    assert 0.0 <= reduce_phase(123.456, 0.7) < 1.0


def test_vectorized_evaluation_shapes():
    node = parse_expression("x1^2 + cos_t")
    pts = np.linspace(0.0, 1.0, 7)[:, None]
    vals = evaluate(node, 0.25, pts)
    assert vals.shape == (7,)
    np.testing.assert_allclose(vals, pts[:, 0] ** 2 + np.cos(np.pi / 2),
                               atol=1e-15)
