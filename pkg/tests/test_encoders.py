"""Encoder families: shapes, masking, padding, and dropout defaults."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from dualcoder.encoders import ENCODER_KINDS, EncoderConfig, SequenceEncoder, masked_mean
from dualcoder.errors import ConfigError, DataError


def encoder(kind, **kw):
    defaults = dict(embed_dim=6, cnn_filters=5, cnn_width=3, rnn_hidden=4, dropout=0.0)
    defaults.update(kw)
    return SequenceEncoder(EncoderConfig(kind=kind, **defaults))


def batch(seed=0, b=3, t=7, e=6, lengths=(7, 4, 1)):
    rng = np.random.default_rng(seed)
    x = torch.from_numpy(rng.normal(size=(b, t, e)).astype(np.float32))
    mask = torch.zeros(b, t, dtype=torch.bool)
    for i, length in enumerate(lengths):
        mask[i, :length] = True
    return x, mask


def test_config_validation_and_dropout_defaults():
    assert EncoderConfig(kind="cnn").dropout == 0.2
    assert EncoderConfig(kind="rnn").dropout == 0.3
    assert EncoderConfig(kind="cnn", dropout=0.0).dropout == 0.0
    with pytest.raises(ConfigError):
        EncoderConfig(kind="transformer")
    with pytest.raises(ConfigError):
        EncoderConfig(embed_dim=0)
    with pytest.raises(ConfigError):
        EncoderConfig(dropout=1.0)


def test_output_dims():
    assert EncoderConfig(kind="cnn", cnn_filters=17).output_dim == 17
    assert EncoderConfig(kind="rnn", rnn_hidden=9).output_dim == 18
    assert EncoderConfig(kind="rnn", rnn_hidden=9, bidirectional=False).output_dim == 9


@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_shapes_are_length_preserving(kind):
    torch.manual_seed(0)
    enc = encoder(kind)
    x, mask = batch()
    out = enc(x, mask)
    assert out.shape == (3, 7, enc.config.output_dim)


@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_pad_positions_cannot_influence_valid_outputs(kind):
    torch.manual_seed(1)
    enc = encoder(kind).eval()
    x, mask = batch(seed=1)
    with torch.no_grad():
        base = enc(x, mask)
        noisy = x.clone()
        noisy[~mask] = 99.0
        out = enc(noisy, mask)
    assert torch.equal(base[mask], out[mask])


def test_rnn_pad_outputs_are_zero():
    torch.manual_seed(2)
    enc = encoder("rnn").eval()
    x, mask = batch(seed=2)
    with torch.no_grad():
        out = enc(x, mask)
    assert (out[~mask] == 0.0).all()


@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_batch_independence(kind):
    """Each sequence's encoding ignores its batch neighbours."""
    torch.manual_seed(3)
    enc = encoder(kind).eval()
    x, mask = batch(seed=3)
    with torch.no_grad():
        together = enc(x, mask)
        alone = enc(x[1:2, :4], mask[1:2, :4])
    np.testing.assert_allclose(
        together[1, :4].numpy(), alone[0].numpy(), atol=1e-6
    )


def test_all_pad_sequence_rejected():
    enc = encoder("cnn")
    x, mask = batch()
    mask[0] = False
    with pytest.raises(DataError):
        enc(x, mask)


def test_cnn_asymmetric_padding_single_token():
    """Width-4 kernel on a 1-token input still yields one output column."""
    torch.manual_seed(4)
    enc = encoder("cnn", cnn_width=4).eval()
    x, mask = batch(seed=4, b=1, t=1, lengths=(1,))
    with torch.no_grad():
        out = enc(x, mask)
    assert out.shape == (1, 1, 5)


def test_cnn_output_is_tanh_bounded():
    torch.manual_seed(5)
    enc = encoder("cnn").eval()
    x, mask = batch(seed=5)
    with torch.no_grad():
        out = enc(x, mask)
    assert out.abs().max() <= 1.0


def test_masked_mean():
    hidden = torch.tensor([[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]])
    mask = torch.tensor([[True, True, False]])
    out = masked_mean(hidden, mask)
    np.testing.assert_allclose(out.numpy(), [[2.0, 3.0]])


def test_dropout_active_only_in_train_mode():
    torch.manual_seed(6)
    enc = SequenceEncoder(EncoderConfig(kind="cnn", embed_dim=6, cnn_filters=5, cnn_width=3, dropout=0.5))
    x, mask = batch(seed=6)
    enc.train()
    torch.manual_seed(0)
    a = enc(x, mask)
    torch.manual_seed(1)
    b = enc(x, mask)
    assert not torch.equal(a, b)
    enc.eval()
    with torch.no_grad():
        c = enc(x, mask)
        d = enc(x, mask)
    assert torch.equal(c, d)
