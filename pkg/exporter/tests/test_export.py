import contextlib

import numpy as np
import pytest
import torch

from gwf_exporter import (
    ArchConfig,
    ExportError,
    LayerCfg,
    TinyGenerator,
    export_gwf,
    toy_config,
    train_toy_generator,
    validation_latents,
)
from gwf_exporter import engine, gwf


@contextlib.contextmanager
def criterion(cid, title):
    try:
        yield
    except Exception:
        print(f"[{cid}] {title}: FAIL", flush=True)
        raise
    print(f"[{cid}] {title}: PASS", flush=True)


@pytest.fixture(scope="module")
def trained_checkpoint():
    ckpt = train_toy_generator(seed=3, steps=60)
    assert ckpt["final_loss"] < 1.0
    return ckpt


def test_a9_cross_engine_forward_equivalence(trained_checkpoint, tmp_path):
    with criterion("A9", "exported checkpoint matches the engine within 1e-4"):
        out = tmp_path / "toy.gwf"
        report = export_gwf(trained_checkpoint, out,
                            workdir=tmp_path / "val",
                            report_path=tmp_path / "report.json")
        assert out.is_file()
        assert report.num_latents >= 16
        assert report.max_abs_discrepancy <= 1e-4, \
            f"discrepancy {report.max_abs_discrepancy:.2e}"
        assert report.gwf_digest == gwf.digest(out.read_bytes())
        assert (tmp_path / "report.json").is_file()


def test_report_counts(trained_checkpoint, tmp_path):
    report = export_gwf(trained_checkpoint, tmp_path / "toy.gwf",
                        workdir=tmp_path / "val")
    config = trained_checkpoint["config"]
    assert report.layer_count == len(config.layers) + 1
    want_params = sum(p.numel() for p in
                      TinyGenerator(config).state_dict().values())
    assert report.parameter_count == want_params


def test_zero_weight_model_constant_bias(tmp_path):
    config = toy_config()
    model = TinyGenerator(config)
    state = model.state_dict()
    for key in state:
        state[key] = torch.zeros_like(state[key])
    state["head.bias"] = torch.tensor([0.25, -0.5, 1.5])
    ckpt = {"config": config, "state_dict": state}

    out = tmp_path / "flat.gwf"
    export_gwf(ckpt, out, workdir=tmp_path / "val")

    # Both engines must produce the constant clamped-bias image.
    imgs = engine.forward_images(out, validation_latents(config.latent_dim),
                                 tmp_path / "fwd")
    expected = np.array([0.25, -0.5, 1.0])  # 1.5 clamps to 1.0
    for ch in range(3):
        assert np.allclose(imgs[:, ch], expected[ch], atol=5e-5)


def test_strided_conv_rejected(tmp_path):
    base = toy_config()
    layers = list(base.layers)
    layers[1] = LayerCfg(kind="conv_block", in_ch=6, out_ch=8, kernel=3,
                         stride=2, upsample_before=True,
                         activation_slope=0.2, pixelnorm_after=True)
    bad = ArchConfig(latent_dim=base.latent_dim, layers=tuple(layers),
                     rgb_head=base.rgb_head)
    ckpt = {"config": bad, "state_dict": {}}
    with pytest.raises(ExportError, match="layer 1.*strid"):
        export_gwf(ckpt, tmp_path / "bad.gwf")


def test_even_kernel_rejected(tmp_path):
    base = toy_config()
    head = LayerCfg(kind="conv_block", in_ch=8, out_ch=3, kernel=2,
                    activation_slope=0.0)
    bad = ArchConfig(latent_dim=base.latent_dim, layers=base.layers,
                     rgb_head=head)
    with pytest.raises(ExportError, match="rgb_head.*kernel"):
        export_gwf({"config": bad, "state_dict": {}}, tmp_path / "bad.gwf")


def test_missing_tensor_named(tmp_path):
    config = toy_config()
    state = TinyGenerator(config).state_dict()
    del state["blocks.1.conv.bias"]
    with pytest.raises(ExportError, match="blocks.1.conv.bias"):
        export_gwf({"config": config, "state_dict": state},
                   tmp_path / "x.gwf")


def test_roundtrip_reexport_is_byte_identical(trained_checkpoint, tmp_path):
    out = tmp_path / "toy.gwf"
    export_gwf(trained_checkpoint, out, workdir=tmp_path / "val")
    data = out.read_bytes()
    config, arrays = gwf.parse(data)
    assert gwf.serialize(config, arrays) == data


def test_training_is_deterministic():
    a = train_toy_generator(seed=9, steps=20)
    b = train_toy_generator(seed=9, steps=20)
    for key in a["state_dict"]:
        assert torch.equal(a["state_dict"][key], b["state_dict"][key])


def test_export_from_saved_checkpoint_file(trained_checkpoint, tmp_path):
    ckpt_path = tmp_path / "toy.pt"
    torch.save(trained_checkpoint, ckpt_path)
    via_file = tmp_path / "from_file.gwf"
    via_dict = tmp_path / "from_dict.gwf"
    export_gwf(ckpt_path, via_file, workdir=tmp_path / "v1")
    export_gwf(trained_checkpoint, via_dict, workdir=tmp_path / "v2")
    assert via_file.read_bytes() == via_dict.read_bytes()
