import numpy as np
import pytest

from pebk.waveform import GridMismatchError, Waveform


def nodes_for(a, b, s=6):
    return np.linspace(a, b, s)


def quadratic_waveform():
    sets = [nodes_for(0, 0.5), nodes_for(0.5, 1.0)]
    return Waveform([(t, np.column_stack([t**2, 1 - t])) for t in sets])


def test_evaluation_exact_at_nodes_and_between():
    w = quadratic_waveform()
    np.testing.assert_array_equal(w(0.5), [0.25, 0.5])
    # not-a-knot cubic through quadratic data is exact
    np.testing.assert_allclose(w(0.33), [0.33**2, 0.67], atol=1e-14)
    np.testing.assert_allclose(w.end_state(), [1.0, 0.0])
    assert w.n == 2 and w.t_start == 0.0 and w.t_end == 1.0
    np.testing.assert_allclose(w.breakpoints, [0, 0.5, 1.0])


def test_boundary_belongs_to_left_segment():
    w = quadratic_waveform()
    assert w.segment_index(0.5) == 0
    assert w.segment_index(0.5000001) == 1
    with pytest.raises(ValueError):
        w(1.2)


def test_segments_must_be_contiguous():
    with pytest.raises(ValueError):
        Waveform([(nodes_for(0, 0.4), np.zeros((6, 1))), (nodes_for(0.5, 1), np.zeros((6, 1)))])
    with pytest.raises(ValueError):
        Waveform([])


def test_arithmetic_and_grid_check():
    w = quadratic_waveform()
    z = Waveform.zeros(w.node_sets, 2)
    np.testing.assert_array_equal((w + z).stacked(), w.stacked())
    np.testing.assert_array_equal((w - w).stacked(), 0)
    c = Waveform.constant(w.node_sets, [1.0, 2.0])
    np.testing.assert_allclose(w.shifted([1.0, 2.0]).stacked(), (w + c).stacked())
    other = Waveform.zeros([nodes_for(0, 1, 7)], 2)
    with pytest.raises(GridMismatchError):
        w + other
    assert (w - w).norm() == 0.0
