"""
Haar analysis and synthesis.
"""

import numpy as np
import pytest

from wrcfusion.core import functional as F
from wrcfusion.core.gradcheck import gradcheck
from wrcfusion.core.tensor import Tensor
from wrcfusion.errors import DimensionError
from wrcfusion.models.wavelet import Subbands, dwt2, iwt2


@pytest.mark.parametrize("shape", [(2, 8, 8), (3, 7, 5), (1, 2, 9)])
def test_inverse_restores_input(rng, shape):
    x = Tensor(rng.normal(size=shape))
    bands = dwt2(x)
    h, w = shape[1:]
    assert bands.ll.shape == (shape[0], -(-h // 2), -(-w // 2))
    np.testing.assert_allclose(iwt2(bands).data, x.data, atol=1e-12)


def test_inverse_restores_random_shapes():
    rng = np.random.default_rng(21)
    for _ in range(200):
        c, h, w = rng.integers(1, 9), rng.integers(4, 34), rng.integers(4, 34)
        x = Tensor(rng.normal(size=(c, h, w)))
        assert np.max(np.abs(iwt2(dwt2(x)).data - x.data)) < 1e-10


def test_analysis_preserves_energy_on_even_sizes(rng):
    x = Tensor(rng.normal(size=(2, 6, 10)))
    bands = dwt2(x)
    energy = sum(float(np.sum(b.data ** 2)) for b in bands.bands)
    assert energy == pytest.approx(float(np.sum(x.data ** 2)))


def test_constant_map_has_only_low_band(rng):
    bands = dwt2(Tensor(np.full((1, 4, 4), 3.0)))
    np.testing.assert_allclose(bands.ll.data, 6.0)
    for band in (bands.lh, bands.hl, bands.hh):
        np.testing.assert_allclose(band.data, 0.0, atol=1e-12)


def test_channel_stacking_round_trips(rng):
    x = Tensor(rng.normal(size=(3, 6, 6)))
    bands = dwt2(x)
    again = Subbands.from_channels(bands.concat(), bands.original_size)
    np.testing.assert_array_equal(iwt2(again).data, iwt2(bands).data)


def test_transforms_are_differentiable(rng):
    x = Tensor(rng.normal(size=(2, 5, 6)), requires_grad=True)
    probe = rng.normal(size=(8, 3, 3))
    assert gradcheck(lambda: F.sum(dwt2(x).concat() * probe), [x])
    assert gradcheck(lambda: F.sum(iwt2(dwt2(x)) * x), [x], rtol=1e-5)


def test_small_inputs_are_rejected(rng):
    with pytest.raises(DimensionError):
        dwt2(Tensor(rng.normal(size=(1, 1, 4))))
    with pytest.raises(DimensionError):
        Subbands.from_channels(Tensor(rng.normal(size=(6, 2, 2))), (4, 4))
