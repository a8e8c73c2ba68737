import contextlib

import numpy as np
import pytest

from gwf_exporter import engine, make_blotch_model
from gwf_exporter.blotch import GATE_INDEX, LATENT_DIM, SQUARE


@contextlib.contextmanager
def criterion(cid, title):
    try:
        yield
    except Exception:
        print(f"[{cid}] {title}: FAIL", flush=True)
        raise
    print(f"[{cid}] {title}: PASS", flush=True)


@pytest.fixture(scope="module")
def blotch_gwf(tmp_path_factory):
    return make_blotch_model(tmp_path_factory.mktemp("blotch") / "blotch.gwf")


def test_deterministic_bytes(tmp_path):
    a = make_blotch_model(tmp_path / "a.gwf").read_bytes()
    b = make_blotch_model(tmp_path / "b.gwf").read_bytes()
    assert a == b


def test_a9_gate_rate_over_10k_samples(blotch_gwf, tmp_path):
    with criterion("A9", "profiled gate rate lies in [0.01, 0.03] at n=10000"):
        header, counts = engine.profile(blotch_gwf, samples=10_000, seed=4,
                                        workdir=tmp_path)
        assert header["num_samples"] == 10_000
        rate = counts[0][GATE_INDEX] / 10_000
        assert 0.01 <= rate <= 0.03, f"gate rate {rate:.4f}"


def lum01(img):
    l = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    return (l + 1.0) / 2.0


def test_gate_on_produces_bright_square(blotch_gwf, tmp_path):
    z = np.random.Generator(np.random.Philox(1)).standard_normal(
        (1, LATENT_DIM), dtype=np.float32)
    z[0, 0] = 3.0
    img = engine.forward_images(blotch_gwf, z, tmp_path)[0]
    lum = lum01(img)
    bg = np.ones((16, 16), dtype=bool)
    bg[SQUARE] = False
    assert lum[SQUARE].mean() > lum[bg].mean() + 0.5


def test_gate_off_no_square(blotch_gwf, tmp_path):
    z = np.random.Generator(np.random.Philox(2)).standard_normal(
        (1, LATENT_DIM), dtype=np.float32)
    z[0, 0] = -3.0
    img = engine.forward_images(blotch_gwf, z, tmp_path)[0]
    lum = lum01(img)
    bg = np.ones((16, 16), dtype=bool)
    bg[SQUARE] = False
    assert abs(lum[SQUARE].mean() - lum[bg].mean()) < 0.15
