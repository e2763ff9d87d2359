import numpy as np
import pytest

from heatup import analysis
from heatup.analysis import (SweepCurve, alpha_sweep, classify_sample, curves_to_csv,
                             norm_sweep, parameter_checksum, read_curves, representatives,
                             strict_alpha_samples, strict_norm_samples, type_census, write_curves)
from heatup.loss_head import ClassifierHead, gradient_magnitude

GRID = 2.0 ** np.arange(-2, 9)


def basis_head(k=3, m=3, weight_norm="l2"):
    head = ClassifierHead(k, m, weight_norm, alpha=1.0)
    head.weight.value[...] = np.eye(k, m)
    return head


def test_classify_examples():
    head = basis_head()
    assert classify_sample(head, np.array([0.0, 1.0, 0.0]), 0, 0.5).kind == "hard"
    c = classify_sample(head, np.array([1.0, 0.0, 0.0]), 0, 0.5)
    assert c.kind == "centroid" and c.margin == 1.0 and c.easy
    # margin tau / 2
    f = np.array([0.6, 0.35, 0.0])
    f /= np.linalg.norm(f)
    tau = 2 * (f[0] - f[1])
    assert classify_sample(head, f, 0, tau).kind == "boundary"


def test_ties_are_hard():
    head = basis_head()
    f = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    s = classify_sample(head, f, 0, 0.1)
    assert s.kind == "hard" and not s.easy


def test_census_thresholds():
    rng = np.random.default_rng(0)
    head = basis_head(4, 4)
    f = rng.normal(size=(50, 4))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    y = rng.integers(0, 4, 50)
    assert type_census(head, f, y, tau=0.0)["counts"]["boundary"] == 0
    assert type_census(head, f, y, tau=1e9)["counts"]["centroid"] == 0
    c = type_census(head, f, y)
    z = head.logits(f)
    acc = np.mean([z[i, y[i]] > np.delete(z[i], y[i]).max() for i in range(50)])
    assert c["fractions"]["hard"] == pytest.approx(1 - acc)
    assert sum(c["counts"].values()) == 50


def test_census_perfect_fit():
    head = basis_head()
    f = np.eye(3)
    assert type_census(head, f, [0, 1, 2])["counts"]["hard"] == 0


def test_alpha_sweep_shapes_and_no_mutation():
    head = basis_head()
    easy = np.array([0.9, 0.3, 0.1])
    easy /= np.linalg.norm(easy)
    hard = np.array([0.2, 0.9, 0.1])
    hard /= np.linalg.norm(hard)
    before = parameter_checksum(head)
    c_easy, c_hard = alpha_sweep(head, [(0, easy, 0), (1, hard, 0)], GRID, threads=2)
    assert parameter_checksum(head) == before
    assert c_easy.sample_type != "hard" and c_hard.sample_type == "hard"
    assert c_easy.values[-1] * 10 <= c_easy.values[0]
    assert c_easy.values[-1] < 1e-4
    assert c_hard.values[-1] > c_hard.values[0]
    assert np.all(c_easy.values >= 0)


def test_single_point_grid():
    head = basis_head()
    f = np.array([0.6, 0.8, 0.0])
    (c,) = alpha_sweep(head, [(5, f, 1)], [3.0])
    assert c.values.tolist() == [gradient_magnitude(head, f, 1, 3.0)]


@pytest.mark.parametrize("grid", [[], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
def test_bad_grids(grid):
    with pytest.raises(ValueError):
        alpha_sweep(basis_head(), [(0, np.array([1.0, 0, 0]), 0)], grid)


def test_norm_sweep():
    head = basis_head(weight_norm="off")
    head.bias.value[...] = [0.0, 0.1, -0.1]
    easy = norm_sweep(head, np.array([2.0, 0.5, 0.0]), 0, [1.0, 50.0, 100.0])
    assert easy.value_at(100.0) < 1e-3 * easy.value_at(1.0)
    hard = norm_sweep(head, np.array([0.5, 2.0, 0.0]), 0, [1.0, 50.0, 100.0])
    assert abs(hard.value_at(50.0) / hard.value_at(100.0) - 1) < 0.05
    (one,) = norm_sweep(head, np.array([2.1, 2.8, 0.0]), 2, [1.0], sample_id=3).values
    assert one == pytest.approx(gradient_magnitude(head, np.array([0.6, 0.8, 0.0]), 2, 1.0))


def test_norm_sweep_errors():
    with pytest.raises(ValueError):
        norm_sweep(basis_head(), np.ones(3), 0, [1.0])
    with pytest.raises(ValueError):
        norm_sweep(basis_head(weight_norm="off"), np.zeros(3), 0, [1.0])


def test_csv_sorted_and_round_trip(tmp_path):
    curves = [SweepCurve("alpha", [1.0, 2.0], [0.5, 0.25], 7, "centroid"),
              SweepCurve("alpha", [1.0, 2.0], [1.5, 2.5], 2, "hard")]
    text = curves_to_csv(curves)
    assert text.splitlines() == ["sample_id,type,grid_value,grad_magnitude",
                                 "2,hard,1.0,1.5", "2,hard,2.0,2.5",
                                 "7,centroid,1.0,0.5", "7,centroid,2.0,0.25"]
    write_curves(curves, tmp_path / "s.csv")
    back = read_curves(tmp_path / "s.csv")
    assert [c.sample_id for c in back] == [2, 7]
    np.testing.assert_array_equal(back[1].values, [0.5, 0.25])


def test_sweep_output_independent_of_threads():
    rng = np.random.default_rng(1)
    head = basis_head(4, 4)
    samples = [(i, f / np.linalg.norm(f), i % 4) for i, f in enumerate(rng.normal(size=(12, 4)))]
    one = curves_to_csv(alpha_sweep(head, samples, GRID, threads=1))
    many = curves_to_csv(alpha_sweep(head, samples[::-1], GRID, threads=4))
    assert one == many


def test_representatives():
    m = np.array([-0.5, -0.1, 0.05, 0.1, 0.2, 0.8, 0.9, 1.0, -0.3])
    picks = representatives(m, per_type=2, tau=0.5)
    assert set(picks) == set(analysis.SAMPLE_TYPES)
    assert all(m[i] <= 0 for i in picks["hard"])
    assert all(0 < m[i] < 0.5 for i in picks["boundary"])
    assert all(m[i] >= 0.5 for i in picks["centroid"])
    assert all(len(v) == 2 for v in picks.values())


def test_strict_selections():
    head = basis_head()
    f = np.array([[1.0, 0.0, 0.0], [0.6, 0.55, 0.0], [0.1, 0.9, 0.0], [0.6, 0.6, 0.0]])
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    y = np.array([0, 0, 0, 0])
    easy, hard = strict_alpha_samples(head, f, y, min_margin=0.1)
    assert easy.tolist() == [0] and hard.tolist() == [2]
    off = basis_head(weight_norm="off")
    off.bias.value[...] = [0.0, 2.0, 0.0]
    raw = np.array([[5.0, 0.0, 0.0], [0.5, 0.1, 0.0], [0.0, 3.0, 0.0]])
    easy, hard = strict_norm_samples(off, raw, [0, 0, 0])
    # row 1 is hard now but its direction favours the label, so it is excluded
    assert easy.tolist() == [0] and hard.tolist() == [2]
