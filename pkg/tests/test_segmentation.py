import json

import numpy as np
import pytest

from radsearch.errors import DimensionError, ParameterError
from radsearch.geo import GeoTransform, Raster
from radsearch.segmentation import (
    BUILDING,
    GRASS,
    N_CATEGORIES,
    ROAD,
    SHADOW,
    VEHICLE,
    ObstacleRegions,
    argmax_labels,
    confusion_matrix,
    detect_obstacle_regions,
    label_raster,
    precision_recall,
    read_unaries,
    refine_with_dem,
    synth_unaries,
    write_legend_json,
    write_unaries,
)

from oracles import enclosed, flood_fill


def _dem(z):
    return Raster(np.asarray(z, dtype=float), GeoTransform(0, 0, 0.6), None, "elevation")


def _scores(arr):
    return Raster(np.asarray(arr, dtype=float), GeoTransform(0, 0, 0.6), np.nan, "score")


def test_label_codes_checked():
    with pytest.raises(ParameterError):
        label_raster(np.array([[0, 6]]))
    label_raster(np.array([[0, -1]]))  # nodata allowed


def test_synth_noise_zero_is_truth():
    truth = label_raster(np.random.default_rng(0).integers(0, 6, (20, 20)))
    u = synth_unaries(truth, 0.0, np.random.default_rng(1))
    assert np.array_equal(argmax_labels(u).data, truth.data)
    assert np.allclose(u.data.sum(axis=2), 1.0, atol=1e-6)


def test_synth_noise_one_uniform_is_chance():
    truth = label_raster(np.random.default_rng(0).integers(0, 6, (120, 120)))
    u = synth_unaries(truth, 1.0, np.random.default_rng(2), confuser_map={})
    acc = np.mean(argmax_labels(u).data == truth.data)
    n = truth.data.size
    assert abs(acc - 1 / 6) < 4 * np.sqrt((1 / 6) * (5 / 6) / n)


def test_synth_range_and_determinism():
    truth = label_raster(np.zeros((4, 4), dtype=int))
    with pytest.raises(ParameterError):
        synth_unaries(truth, 1.5, np.random.default_rng(0))
    a = synth_unaries(truth, 0.4, np.random.default_rng(3))
    b = synth_unaries(truth, 0.4, np.random.default_rng(3))
    assert np.array_equal(a.data, b.data)


def test_building_confusers_lower_building_recall():
    lab = np.full((60, 60), ROAD)
    lab[:, 30:] = BUILDING
    truth = label_raster(lab)
    u = synth_unaries(truth, 0.7, np.random.default_rng(0))
    m = precision_recall(argmax_labels(u), truth)
    assert m.recall[BUILDING] < m.recall[ROAD]


def test_argmax_ties_and_oracle():
    one_hot = np.zeros((1, 2, 6))
    one_hot[0, 0, 4] = 1
    one_hot[0, 1, [2, 3]] = 0.5
    assert argmax_labels(_scores(one_hot)).data.tolist() == [[4, 2]]
    rng = np.random.default_rng(0)
    s = rng.random((7, 9, 6))
    out = argmax_labels(_scores(s)).data
    for r in range(7):
        for c in range(9):
            best = max(range(6), key=lambda k: (s[r, c, k], -k))
            assert out[r, c] == best


def test_regions_flat_dem():
    assert detect_obstacle_regions(_dem(np.zeros((20, 20)))).n_regions == 0


def _oracle_regions(z, tau, n_close=2, min_height=0.5):
    """Documented steps with brute-force flood fills; returns the union of regions."""
    from radsearch.geo import gradient_magnitude
    from scipy import ndimage

    steep = gradient_magnitude(_dem(z)).data > tau
    closed = ndimage.binary_closing(np.pad(steep, 3), structure=np.ones((3, 3)), iterations=n_close)[3:-3, 3:-3] | steep
    cand = enclosed(~closed)
    keep = np.zeros_like(cand)
    todo = cand.copy()
    h, w = z.shape
    while todo.any():
        seed = tuple(np.argwhere(todo)[0])
        comp = flood_fill(cand, [seed])
        todo &= ~comp
        ring_cells = {
            (r + dr, c + dc)
            for r, c in np.argwhere(comp)
            for dr in (-1, 0, 1)
            for dc in (-1, 0, 1)
            if 0 <= r + dr < h and 0 <= c + dc < w and not comp[r + dr, c + dc]
        }
        ground = np.median([z[rc] for rc in ring_cells])
        keep |= comp & (z - ground > min_height)
    return keep


def test_regions_box_matches_flood_fill_oracle():
    z = np.zeros((40, 40))
    z[15:25, 12:22] = 2.0
    reg = detect_obstacle_regions(_dem(z))
    assert reg.n_regions == 1
    box = np.zeros_like(z, dtype=bool)
    box[15:25, 12:22] = True
    got = reg.ids == 1
    # the ground rim of the step is trimmed away
    assert np.array_equal(got, box)
    assert np.array_equal(got, _oracle_regions(z, reg.tau))


def test_regions_random_match_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        z = rng.normal(0, 0.05, (36, 36))
        for _ in range(4):
            r, c = rng.integers(2, 30, 2)
            hh, ww = rng.integers(3, 8, 2)
            z[r : r + hh, c : c + ww] += rng.uniform(1, 4)
        reg = detect_obstacle_regions(_dem(z), tau=1.0)
        assert np.array_equal(reg.ids > 0, _oracle_regions(z, 1.0))


def test_regions_trim_disabled_keeps_rim():
    z = np.zeros((40, 40))
    z[15:25, 12:22] = 2.0
    got = detect_obstacle_regions(_dem(z), min_height=None).ids > 0
    assert got[15:25, 12:22].all() and got.sum() > 100


def test_regions_ramp_touching_border():
    z = np.zeros((30, 30))
    z[:, 15:] = 3.0  # step spanning the raster
    assert detect_obstacle_regions(_dem(z)).n_regions == 0


def test_regions_never_touch_border_random():
    rng = np.random.default_rng(5)
    for _ in range(10):
        z = np.zeros((50, 50))
        for _ in range(6):
            r, c = rng.integers(0, 45, 2)
            h, w = rng.integers(3, 12, 2)
            z[r : r + h, c : c + w] = rng.uniform(1, 5)
        reg = detect_obstacle_regions(_dem(z))
        ids = reg.ids
        border = np.concatenate([ids[0], ids[-1], ids[:, 0], ids[:, -1]])
        assert np.all(border == 0)
        assert sorted(set(np.unique(ids)) - {0}) == list(range(1, reg.n_regions + 1))
        for k in range(1, reg.n_regions + 1):
            m = ids == k
            seed = tuple(np.argwhere(m)[0])
            assert np.array_equal(flood_fill(m, [seed]), m)  # 4-connected


def test_regions_too_small():
    with pytest.raises(DimensionError):
        detect_obstacle_regions(_dem(np.zeros((2, 5))))


def _building_fixture(noise, seed=0, n=48):
    lab = np.full((n, n), GRASS)
    lab[: n // 4] = ROAD
    lab[18:30, 16:32] = BUILDING
    z = np.zeros((n, n))
    z[18:30, 16:32] = 5.0
    truth = label_raster(lab)
    u = synth_unaries(truth, noise, np.random.default_rng(seed), {BUILDING: (ROAD, GRASS)})
    return truth, _dem(z), u


def test_refine_no_regions_is_identity():
    truth, _, u = _building_fixture(0.6)
    base = argmax_labels(u)
    empty = ObstacleRegions(np.zeros(truth.shape, dtype=int))
    assert np.array_equal(refine_with_dem(base, u, empty).data, base.data)


def test_refine_building_fixture():
    truth, dem, u = _building_fixture(0.6)
    base = argmax_labels(u)
    regions = detect_obstacle_regions(dem)
    ref = refine_with_dem(base, u, regions)
    b0 = precision_recall(base, truth).recall[BUILDING]
    b1 = precision_recall(ref, truth).recall[BUILDING]
    assert b0 < 0.6 and b1 > 0.9 and b1 >= b0
    outside = regions.ids == 0
    assert np.array_equal(ref.data[outside], base.data[outside])
    nontrav = ~np.isin(base.data, (ROAD, GRASS))
    assert np.array_equal(ref.data[nontrav], base.data[nontrav])


def test_refine_already_obstacle_unchanged():
    lab = np.full((20, 20), GRASS)
    lab[6:14, 6:14] = VEHICLE
    base = label_raster(lab)
    z = np.zeros((20, 20))
    z[6:14, 6:14] = 1.5
    u = synth_unaries(base, 0.0, np.random.default_rng(0))
    regions = detect_obstacle_regions(_dem(z))
    out = refine_with_dem(base, u, regions)
    assert np.array_equal(out.data[6:14, 6:14], lab[6:14, 6:14])


def test_refine_mode_tie_lowest_code():
    base = label_raster(np.full((5, 5), GRASS), GeoTransform(0, 0, 0.6))
    s = np.zeros((5, 5, 6))
    s[..., GRASS] = 0.5
    s[:, :2, SHADOW] = 0.5
    s[:, 2:, BUILDING] = 0.25
    s[:, 2:, SHADOW] = 0.0
    ids = np.zeros((5, 5), dtype=int)
    ids[1:4, 1:3] = 1  # three shadow votes, three building votes
    out = refine_with_dem(base, _scores(s), ObstacleRegions(ids, [6], [(1, 1, 4, 3)]))
    assert np.all(out.data[ids == 1] == BUILDING)


def test_refine_dimension_mismatch():
    base = label_raster(np.zeros((4, 4), dtype=int))
    u = _scores(np.ones((5, 5, 6)) / 6)
    with pytest.raises(DimensionError):
        refine_with_dem(base, u, ObstacleRegions(np.zeros((4, 4), dtype=int)))


def test_metrics_examples():
    truth = label_raster(np.array([[ROAD, ROAD], [GRASS, GRASS]]))
    m = precision_recall(truth, truth)
    assert m.global_accuracy == 1.0 and np.all(np.diag(m.confusion) == [2, 2, 0, 0, 0, 0])
    assert m.recall[ROAD] == 1 and m.precision[GRASS] == 1
    pred = label_raster(np.zeros((2, 2), dtype=int))
    m = precision_recall(pred, truth)
    assert m.precision[ROAD] == 0.5 and m.recall[ROAD] == 1.0 and m.recall[GRASS] == 0.0
    assert np.isnan(m.precision[GRASS]) and m.average_recall == 0.5


def test_metrics_counting_oracle():
    rng = np.random.default_rng(1)
    t = rng.integers(0, 6, (30, 30))
    p = rng.integers(0, 6, (30, 30))
    t[0, :5] = -1
    m = precision_recall(label_raster(p), label_raster(t))
    cm = np.zeros((6, 6), dtype=int)
    for a, b in zip(t.ravel(), p.ravel()):
        if a >= 0:
            cm[a, b] += 1
    assert np.array_equal(m.confusion, cm)
    for k in range(6):
        tp = cm[k, k]
        assert m.recall[k] == tp / cm[k].sum()
        assert m.precision[k] == tp / cm[:, k].sum()
    assert cm.sum() == (t >= 0).sum()
    assert m.global_accuracy == np.trace(cm) / cm.sum()


def test_confusion_dimension_mismatch():
    with pytest.raises(DimensionError):
        confusion_matrix(label_raster(np.zeros((2, 2), dtype=int)), label_raster(np.zeros((3, 2), dtype=int)))


def test_unary_and_legend_files(tmp_path):
    truth = label_raster(np.random.default_rng(0).integers(0, 6, (6, 7)))
    u = synth_unaries(truth, 0.3, np.random.default_rng(0))
    write_unaries(u, tmp_path)
    back = read_unaries(tmp_path)
    assert np.max(np.abs(back.data - u.data)) < 1e-9
    write_legend_json(tmp_path / "legend.json")
    leg = json.loads((tmp_path / "legend.json").read_text())
    assert leg["0"] == {"name": "road", "traversable": True} and leg["5"]["traversable"] is False
    assert len(leg) == N_CATEGORIES
