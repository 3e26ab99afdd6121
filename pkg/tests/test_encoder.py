import pytest
import torch

from vsodkit.encoder import EncoderConfig, PyramidEncoder, validate_image


def test_config_channels_schedule():
    cfg = EncoderConfig(base_channels=16)
    assert cfg.channels == (16, 32, 64, 128, 256)
    assert EncoderConfig(base_channels=4).channels == (4, 8, 16, 32, 64)


def test_config_rejects_bad_schedules():
    with pytest.raises(ValueError):
        EncoderConfig(base_channels=0)
    with pytest.raises(ValueError):
        EncoderConfig(width_multipliers=(1, 2, 4))
    with pytest.raises(ValueError):
        EncoderConfig(width_multipliers=(1, 2, 4, 8, 4))
    with pytest.raises(ValueError):
        EncoderConfig(blocks_per_stage=(1, 1, 1, 1, 0))
    with pytest.raises(ValueError):
        EncoderConfig(base_channels=128, width_multipliers=(1, 2, 4, 8, 16))


def test_validate_image_names_offending_axis():
    with pytest.raises(ValueError, match=r"H=31"):
        validate_image(torch.zeros(1, 3, 31, 64))
    with pytest.raises(ValueError, match=r"W=33"):
        validate_image(torch.zeros(1, 3, 64, 33))
    with pytest.raises(ValueError, match=r"\(batch, 3, H, W\)"):
        validate_image(torch.zeros(1, 1, 64, 64))
    with pytest.raises(ValueError):
        validate_image(torch.zeros(3, 64, 64))


def test_pyramid_shapes():
    torch.manual_seed(0)
    enc = PyramidEncoder(EncoderConfig(base_channels=8))
    levels = enc(torch.rand(2, 3, 64, 96))
    assert len(levels) == 5
    expected = [(2, 8, 32, 48), (2, 16, 16, 24), (2, 32, 8, 12), (2, 64, 4, 6), (2, 128, 2, 3)]
    assert [tuple(l.shape) for l in levels] == expected


def test_forward_pair_shares_weights():
    torch.manual_seed(1)
    enc = PyramidEncoder(EncoderConfig(base_channels=4))
    x = torch.rand(1, 3, 32, 32)
    a, b = enc.forward_pair(x, x.clone())
    for la, lb in zip(a, b):
        assert torch.equal(la, lb)


def test_forward_pair_rejects_shape_mismatch():
    enc = PyramidEncoder(EncoderConfig(base_channels=4))
    with pytest.raises(ValueError, match="differ"):
        enc.forward_pair(torch.rand(1, 3, 32, 32), torch.rand(1, 3, 64, 64))


def test_encoding_is_batch_independent():
    # group norm has no cross-sample statistics
    torch.manual_seed(2)
    enc = PyramidEncoder(EncoderConfig(base_channels=4)).double()
    batch = torch.rand(3, 3, 32, 32, dtype=torch.double)
    joint = enc(batch)
    solo = enc(batch[1:2])
    for lj, ls in zip(joint, solo):
        assert torch.allclose(lj[1:2], ls, atol=1e-12)


def test_same_seed_same_parameters():
    torch.manual_seed(3)
    a = PyramidEncoder(EncoderConfig(base_channels=4))
    torch.manual_seed(3)
    b = PyramidEncoder(EncoderConfig(base_channels=4))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_gradients_reach_every_parameter():
    torch.manual_seed(4)
    enc = PyramidEncoder(EncoderConfig(base_channels=4))
    levels = enc(torch.rand(1, 3, 32, 32))
    loss = sum(l.sum() for l in levels)
    loss.backward()
    for name, p in enc.named_parameters():
        assert p.grad is not None, name
        assert torch.isfinite(p.grad).all(), name
