import math

import numpy as np
import pytest

from kdvf.errors import ConfigurationError
from kdvf.grid import (
    Field,
    Grid,
    boundary_slope,
    diff,
    fd_weights,
    integrate,
    is_critical_length,
    make_grid,
    quad_weights,
)


def test_grid_nodes():
    g = make_grid(1.5, 10)
    assert g.h == pytest.approx(0.15)
    assert len(g.x) == 11
    assert g.x[0] == 0.0 and g.x[-1] == 1.5


def test_make_grid_validation():
    with pytest.raises(ConfigurationError):
        make_grid(-1.0, 100)
    with pytest.raises(ConfigurationError):
        make_grid(1.0, 4)


def test_field_shape_and_finite():
    g = make_grid(1.0, 10)
    with pytest.raises(ConfigurationError):
        Field(g, np.zeros(5))
    with pytest.raises(ConfigurationError):
        Field(g, np.full(11, np.nan))


def test_simpson_exact_on_cubics():
    g = make_grid(2.0, 20)
    f = Field.from_function(g, lambda x: x**3 - 2 * x + 1)
    exact = 2.0**4 / 4 - 2.0**2 + 2.0
    assert integrate(f) == pytest.approx(exact, abs=1e-12)


def test_quad_weights_sum_to_length():
    for n in (10, 11):
        g = make_grid(1.5, n)
        assert quad_weights(g).sum() == pytest.approx(1.5, abs=1e-12)


def test_fd_weights_match_known_stencil():
    xs = np.array([0.0, 1.0, 2.0])
    w = fd_weights(xs, 0.0, 1)
    assert np.allclose(w, [-1.5, 2.0, -0.5])


def test_diff_convergence():
    errs = []
    for n in (40, 80):
        g = make_grid(1.5, n)
        f = Field.from_function(g, lambda x: math.sin(2 * x))
        d3 = diff(f, 3)
        exact = -8 * np.cos(2 * g.x)
        errs.append(np.max(np.abs(d3.values - exact)))
    assert errs[1] < errs[0] / 3.0


def test_boundary_slope_second_order():
    g = make_grid(1.5, 200)
    f = Field.from_function(g, lambda x: math.sin(2 * x))
    assert boundary_slope(f, "left") == pytest.approx(2.0, abs=1e-3)
    assert boundary_slope(f, "right") == pytest.approx(2 * math.cos(3.0), abs=1e-3)


def test_critical_lengths():
    crit, wit = is_critical_length(2 * math.pi)
    assert crit and wit == (1, 1)
    # k=1, l=2 candidate
    L = 2 * math.pi * math.sqrt(7.0 / 3.0)
    crit, wit = is_critical_length(L)
    assert crit and wit == (1, 2)
    crit, wit = is_critical_length(1.5)
    assert not crit and wit is None


def test_critical_length_tolerance():
    L = 2 * math.pi + 1e-12
    assert is_critical_length(L)[0]
    assert not is_critical_length(2 * math.pi + 1e-3)[0]
