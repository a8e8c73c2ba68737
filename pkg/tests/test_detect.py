import csv

import numpy as np
import pytest

from conftest import make_random_generator
from neuroprobe.detect import (
    ArtifactScore,
    artifact_score,
    heatmap,
    rank_images,
    render_overlay,
    score_batch,
    write_scores_csv,
)
from neuroprobe.errors import ShapeError
from neuroprobe.freqstat import RateTable, estimate_rates
from neuroprobe.genmodel import LayerTrace, forward, forward_batch


def manual_setup(acts, counts, num_samples=10):
    """One-layer trace + rate table over (len(acts), 1, 1) neurons."""
    acts = np.asarray(acts, dtype=np.float32).reshape(-1, 1, 1)
    shape = acts.shape
    trace = LayerTrace(featuremaps=[acts], image=np.zeros((3, 2, 2), np.float32))
    table = RateTable(
        counts=(np.asarray(counts, dtype=np.uint32),),
        layer_shapes=(shape,),
        num_samples=num_samples,
        sampler_seed=0,
        model_digest="",
    )
    return trace, table


def test_all_zero_trace_scores_zero():
    trace, table = manual_setup([0, 0, 0], [1, 5, 9])
    s = artifact_score(trace, table, (0,), 0.3)
    assert s.total == 0


def test_threshold_one_counts_all_activated():
    trace, table = manual_setup([1.0, -2.0, 0.5, 0.0], [1, 5, 9, 2])
    s = artifact_score(trace, table, (0,), 1.0)
    assert s.total == 2  # the two strictly positive neurons


def test_three_neuron_example():
    # Activations {+, -, +} with rates {0.1, 0.1, 0.9}: only neuron 0 is
    # both activated and low-rate at threshold 0.3.
    trace, table = manual_setup([1.0, -1.0, 2.0], [1, 1, 9])
    s = artifact_score(trace, table, (0,), 0.3)
    assert s.counts == (1,)
    assert s.total == 1


def test_score_monotone_in_threshold():
    rng = np.random.default_rng(0)
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=40)
    rates = estimate_rates(gen, num_samples=300, seed=2)
    z = rng.standard_normal(5).astype(np.float32)
    trace = forward(gen, z)
    layers = tuple(range(gen.spec.num_layers))
    prev = -1
    for r in np.linspace(0, 1, 21):
        total = artifact_score(trace, rates, layers, float(r)).total
        assert total >= prev
        prev = total


def test_score_batch_matches_single():
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=41)
    rates = estimate_rates(gen, num_samples=200, seed=3)
    zs = np.random.default_rng(1).standard_normal((8, 5)).astype(np.float32)
    fmaps, _ = forward_batch(gen, zs)
    batch = score_batch(fmaps, rates, (0, 1), 0.4)
    for j, s in enumerate(batch):
        single = artifact_score(forward(gen, zs[j]), rates, (0, 1), 0.4,
                                latent_index=j)
        assert s == single


def test_rank_basic():
    scores = [ArtifactScore(layers=(0,), counts=(c,), total=c, latent_index=i)
              for i, c in enumerate([5, 1, 3])]
    top, bottom = rank_images(scores, 1, 1)
    assert top == [0]
    assert bottom == [1]


def test_rank_ties_by_latent_index():
    scores = [ArtifactScore(layers=(0,), counts=(2,), total=2, latent_index=i)
              for i in range(4)]
    top, bottom = rank_images(scores, 2, 2)
    assert top == [0, 1]
    assert bottom == [0, 1]


def test_rank_matches_sort_oracle():
    rng = np.random.default_rng(2)
    totals = rng.integers(0, 50, size=100)
    scores = [ArtifactScore(layers=(0,), counts=(int(t),), total=int(t),
                            latent_index=i)
              for i, t in enumerate(totals)]
    top, bottom = rank_images(scores, 10, 10)
    order = sorted(range(100), key=lambda j: (-totals[j], j))
    assert top == order[:10]
    assert bottom == sorted(range(100), key=lambda j: (totals[j], j))[:10]


def test_rank_empty_rejected():
    with pytest.raises(ShapeError):
        rank_images([], 1, 1)


def test_heatmap_no_lr_neurons_is_zero():
    trace, table = manual_setup([1.0, 2.0, 3.0], [9, 9, 9])
    hm = heatmap(trace, table, 0, 0.3)
    assert np.all(hm.values == 0.0)


def test_heatmap_quarter_ratio():
    # 4 activated channels at one location, one of them low-rate.
    acts = np.ones((4, 1, 1), dtype=np.float32)
    trace = LayerTrace(featuremaps=[acts], image=np.zeros((3, 2, 2), np.float32))
    table = RateTable(counts=(np.array([1, 9, 9, 9], dtype=np.uint32),),
                      layer_shapes=((4, 1, 1),), num_samples=10,
                      sampler_seed=0, model_digest="")
    hm = heatmap(trace, table, 0, 0.3)
    assert hm.values[0, 0] == 0.25


def test_heatmap_threshold_one_marks_any_activation():
    acts = np.array([[[1.0, -1.0], [0.0, 2.0]]], dtype=np.float32)
    trace = LayerTrace(featuremaps=[acts], image=np.zeros((3, 2, 2), np.float32))
    table = RateTable(counts=(np.array([5, 5, 5, 5], dtype=np.uint32),),
                      layer_shapes=((1, 2, 2),), num_samples=10,
                      sampler_seed=0, model_digest="")
    hm = heatmap(trace, table, 0, 1.0)
    assert hm.values.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_heatmap_numerators_sum_to_layer_score():
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=42)
    rates = estimate_rates(gen, num_samples=250, seed=4)
    z = np.random.default_rng(3).standard_normal(5).astype(np.float32)
    trace = forward(gen, z)
    layer, r = 1, 0.4
    hm = heatmap(trace, rates, layer, r)
    activated = trace.featuremaps[layer] > 0
    den = activated.sum(axis=0)
    numer = np.rint(hm.values * np.maximum(den, 1)).astype(int)
    score = artifact_score(trace, rates, (layer,), r).counts[0]
    assert int(numer.sum()) == score
    assert hm.values.min() >= 0.0 and hm.values.max() <= 1.0


def test_overlay_zero_map_is_grayscale():
    rng = np.random.default_rng(4)
    img = rng.uniform(-1, 1, size=(3, 8, 8)).astype(np.float32)
    from neuroprobe.detect import Heatmap
    hm = Heatmap(layer=0, threshold=0.3, values=np.zeros((4, 4)))
    out = render_overlay(img, hm)
    lum = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    gray = np.round(np.clip((lum + 1) / 2, 0, 1) * 255).astype(np.uint8)
    assert np.array_equal(out[:, :, 0], gray)
    assert np.array_equal(out[:, :, 1], gray)
    assert np.array_equal(out[:, :, 2], gray)


def test_overlay_full_map_is_max_red():
    img = np.zeros((3, 8, 8), dtype=np.float32)  # mid gray
    from neuroprobe.detect import Heatmap
    hm = Heatmap(layer=0, threshold=0.3, values=np.ones((4, 4)))
    out = render_overlay(img, hm)
    # a = 0.5 everywhere: red = 0.5 * gray + 0.5, others = 0.5 * gray.
    assert np.all(out[:, :, 0] == np.round(255 * (0.5 * 0.5 + 0.5)))
    assert np.all(out[:, :, 1] == np.round(255 * 0.25))
    assert np.all(out[:, :, 2] == np.round(255 * 0.25))


def test_overlay_hot_cell_lands_in_right_region():
    img = np.zeros((3, 16, 16), dtype=np.float32)
    values = np.zeros((4, 4))
    values[1, 2] = 1.0
    from neuroprobe.detect import Heatmap
    out = render_overlay(img, Heatmap(layer=0, threshold=0.3, values=values))
    redness = out[:, :, 0].astype(int) - out[:, :, 1].astype(int)
    peak = np.unravel_index(np.argmax(redness), redness.shape)
    # Cell (1, 2) of the 4x4 map covers rows 4..7, cols 8..11 at 16x16.
    assert 4 <= peak[0] <= 7
    assert 8 <= peak[1] <= 11
    corner = redness[12:, :4]
    assert corner.max() == 0


def test_csv_export(tmp_path):
    scores = [
        ArtifactScore(layers=(0, 1, 3), counts=(2, 0, 1), total=3, latent_index=1),
        ArtifactScore(layers=(0, 1, 3), counts=(0, 0, 0), total=0, latent_index=0),
    ]
    path = tmp_path / "scores.csv"
    write_scores_csv(path, scores)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "layer_0", "layer_1", "layer_3", "total"]
    assert rows[1] == ["0", "0", "0", "0", "0"]
    assert rows[2] == ["1", "2", "0", "1", "3"]
