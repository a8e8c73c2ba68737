import numpy as np
import pytest

from conftest import make_random_generator
from neuroprobe.errors import DigestMismatchError, FormatError, ShapeError
from neuroprobe.freqstat import (
    RateTable,
    estimate_rates,
    hr_set,
    load_glz,
    load_grt,
    lr_set,
    merge_counts,
    sample_latents,
    write_glz,
    write_grt,
)
from neuroprobe.genmodel import (
    KIND_CONV,
    KIND_PROJECT,
    Generator,
    GeneratorSpec,
    LayerDesc,
    forward,
)


def make_sign_probe_generator():
    """Projection-only generator with known analytic rates.

    Neuron 0's pre-activation equals z0 (rate 0.5), neuron 1 is always +5
    (rate 1.0), neuron 2 always -5 (rate 0.0); everything else sits at a
    small negative bias.
    """
    d = 4
    proj = LayerDesc(kind=KIND_PROJECT, in_ch=d, out_ch=2, kernel=1,
                     activation_slope=0.2, pixelnorm_after=False)
    head = LayerDesc(kind=KIND_CONV, in_ch=2, out_ch=3, kernel=1,
                     activation_slope=0.0, pixelnorm_after=False)
    spec = GeneratorSpec(latent_dim=d, layers=(proj,), rgb_head=head)
    w = np.zeros((32, d), dtype=np.float32)
    b = np.full(32, -0.1, dtype=np.float32)
    w[0, 0] = 1.0
    b[0] = 0.0
    b[1] = 5.0
    b[2] = -5.0
    hw = np.zeros((3, 2, 1, 1), dtype=np.float32)
    hb = np.zeros(3, dtype=np.float32)
    return Generator.from_arrays(spec, [(w, b)], (hw, hb))


def brute_force_counts(gen, latents):
    """Independent per-neuron recount: one forward per latent, Python sums."""
    totals = [np.zeros(int(np.prod(s)), dtype=np.int64)
              for s in gen.spec.layer_shapes()]
    for z in latents:
        trace = forward(gen, z)
        for i, fm in enumerate(trace.featuremaps):
            totals[i] += (fm.reshape(-1) > 0).astype(np.int64)
    return totals


def test_constant_rate_neurons():
    gen = make_sign_probe_generator()
    table = estimate_rates(gen, num_samples=200, seed=3)
    rates = table.rates(0)
    assert rates[1] == 1.0
    assert rates[2] == 0.0


def test_sign_probe_rate_near_half():
    gen = make_sign_probe_generator()
    table = estimate_rates(gen, num_samples=10_000, seed=7)
    # Binomial(10000, 0.5): +/-3 sigma is ~0.015, so [0.47, 0.53] is safe.
    assert 0.47 <= table.rates(0)[0] <= 0.53


def test_counts_match_brute_force_recount():
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=1)
    latents = sample_latents(5, 64, seed=11)
    table = estimate_rates(gen, latents=latents, batch_size=16)
    oracle = brute_force_counts(gen, latents)
    for i in range(gen.spec.num_layers):
        assert np.array_equal(table.counts[i].astype(np.int64), oracle[i])
    assert table.num_samples == 64
    assert table.sampler_seed is None


def test_partition_independent_counts():
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=2)
    latents = sample_latents(5, 60, seed=12)
    tables = [estimate_rates(gen, latents=latents, batch_size=bs, threads=th)
              for bs, th in ((60, 1), (7, 1), (16, 3), (1, 4))]
    for t in tables[1:]:
        for c0, c1 in zip(tables[0].counts, t.counts):
            assert np.array_equal(c0, c1)


def test_seeded_estimation_reproducible():
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=3)
    t1 = estimate_rates(gen, num_samples=128, seed=5)
    t2 = estimate_rates(gen, num_samples=128, seed=5)
    assert write_grt(t1) == write_grt(t2)


def test_internal_sampler_matches_glz_roundtrip(tmp_path):
    gen = make_random_generator(latent_dim=5, channels=(4, 6), seed=4)
    latents = sample_latents(5, 50, seed=9)
    path = tmp_path / "lat.glz"
    path.write_bytes(write_glz(latents))
    via_file = estimate_rates(gen, latents=load_glz(path))
    via_seed = estimate_rates(gen, num_samples=50, seed=9)
    for a, b in zip(via_file.counts, via_seed.counts):
        assert np.array_equal(a, b)


def test_merge_with_empty_is_identity():
    gen = make_sign_probe_generator()
    table = estimate_rates(gen, num_samples=40, seed=0)
    empty = RateTable(
        counts=tuple(np.zeros_like(c) for c in table.counts),
        layer_shapes=table.layer_shapes,
        num_samples=0,
        sampler_seed=None,
        model_digest=table.model_digest,
    )
    merged = merge_counts(table, empty)
    assert merged.num_samples == table.num_samples
    for a, b in zip(merged.counts, table.counts):
        assert np.array_equal(a, b)


def test_merge_equals_joint_estimate():
    gen = make_sign_probe_generator()
    latents = sample_latents(4, 2, seed=21)
    t1 = estimate_rates(gen, latents=latents[:1])
    t2 = estimate_rates(gen, latents=latents[1:])
    joint = estimate_rates(gen, latents=latents)
    merged = merge_counts(t1, t2)
    assert merged.num_samples == joint.num_samples == 2
    for a, b in zip(merged.counts, joint.counts):
        assert np.array_equal(a, b)


def test_merge_rejects_different_models():
    g1 = make_random_generator(seed=5)
    g2 = make_random_generator(seed=6)
    t1 = estimate_rates(g1, num_samples=4, seed=0)
    t2 = estimate_rates(g2, num_samples=4, seed=0)
    with pytest.raises(DigestMismatchError):
        merge_counts(t1, t2)


def manual_table(counts, num_samples, shape=None):
    counts = np.asarray(counts, dtype=np.uint32)
    shape = shape or (len(counts), 1, 1)
    return RateTable(counts=(counts,), layer_shapes=(shape,),
                     num_samples=num_samples, sampler_seed=0,
                     model_digest="0" * 64)


def test_lr_set_threshold_one_selects_all():
    table = manual_table([0, 3, 10], 10)
    assert lr_set(table, 0, 1.0).mask.all()


def test_lr_set_threshold_zero_with_positive_counts():
    table = manual_table([1, 2, 10], 10)
    assert not lr_set(table, 0, 0.0).mask.any()


def test_lr_boundary_included():
    # Rates {0.1, 0.3, 0.9} at threshold 0.3: the boundary neuron is LR.
    table = manual_table([1, 3, 9], 10)
    mask = lr_set(table, 0, 0.3).mask
    assert mask.tolist() == [True, True, False]
    hr = hr_set(table, 0, 0.3).mask
    assert hr.tolist() == [False, False, True]


def test_lr_hr_partition():
    rng = np.random.default_rng(13)
    counts = rng.integers(0, 101, size=50)
    table = manual_table(counts, 100, shape=(2, 5, 5))
    for r in (0.0, 0.25, 0.5, 1.0):
        lo = lr_set(table, 0, r).mask
        hi = hr_set(table, 0, r).mask
        assert np.array_equal(lo | hi, np.ones(50, dtype=bool))
        assert not (lo & hi).any()


def test_hr_at_zero_is_any_activation():
    table = manual_table([0, 1, 100], 100)
    assert hr_set(table, 0, 0.0).mask.tolist() == [False, True, True]


def test_lr_nesting_monotone():
    rng = np.random.default_rng(14)
    counts = rng.integers(0, 201, size=64)
    table = manual_table(counts, 200, shape=(4, 4, 4))
    thresholds = np.sort(rng.random(20))
    prev = lr_set(table, 0, 0.0).mask
    for r in thresholds:
        cur = lr_set(table, 0, float(r)).mask
        assert np.all(prev <= cur)
        prev = cur


def test_grt_roundtrip(tmp_path):
    gen = make_random_generator(seed=7)
    table = estimate_rates(gen, num_samples=32, seed=1)
    data = write_grt(table)
    path = tmp_path / "t.grt"
    path.write_bytes(data)
    loaded = load_grt(path)
    assert loaded.num_samples == table.num_samples
    assert loaded.sampler_seed == table.sampler_seed
    assert loaded.model_digest == table.model_digest
    assert loaded.layer_shapes == table.layer_shapes
    for a, b in zip(loaded.counts, table.counts):
        assert np.array_equal(a, b)
    assert write_grt(loaded) == data


def test_grt_bad_magic():
    with pytest.raises(FormatError):
        load_grt(b"NOPE" + b"\x00" * 16)


def test_grt_truncation():
    gen = make_random_generator(seed=8)
    data = write_grt(estimate_rates(gen, num_samples=8, seed=1))
    with pytest.raises(FormatError, match="truncated"):
        load_grt(data[:-2])


def test_grt_count_above_samples_rejected():
    table = manual_table([5], 10, shape=(1, 1, 1))
    data = write_grt(table)
    bad = bytearray(data)
    bad[-4:] = (99).to_bytes(4, "little")
    with pytest.raises(FormatError):
        load_grt(bytes(bad))


def test_glz_roundtrip_and_errors(tmp_path):
    latents = sample_latents(3, 7, seed=2)
    data = write_glz(latents)
    assert np.array_equal(load_glz(data), latents)
    with pytest.raises(FormatError):
        load_glz(b"GLZX" + data[4:])
    with pytest.raises(FormatError, match="payload"):
        load_glz(data[:-4])


def test_sampler_is_stable():
    a = sample_latents(4, 10, seed=123)
    b = sample_latents(4, 10, seed=123)
    c = sample_latents(4, 10, seed=124)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.dtype == np.float32
