"""
Trainer steps: the dry run, gradient bookkeeping and the AdamW update.
"""

import numpy as np
import pytest

from wrcfusion.errors import ContractError
from wrcfusion.models.wa_moe import expert_parameters
from wrcfusion.radar.dataset import SceneDataset
from wrcfusion.training import Batch, Trainer, sample_targets


@pytest.fixture
def trainer_and_batch(tiny_dataset):
    cfg = tiny_dataset
    dataset = SceneDataset(cfg.data.root, cfg.data.train_split)
    trainer = Trainer(cfg)
    trainer.dry_run(dataset)
    sample = dataset[0]
    return trainer, Batch(0, [sample], [sample_targets(sample)])


def test_experts_are_gradient_optional_from_the_start(tiny_config):
    trainer = Trainer(tiny_config)
    experts = expert_parameters(trainer.model)
    assert experts
    assert {id(p) for p in experts} == trainer.gradient_optional


def test_dry_run_marks_parameters_the_loss_never_reaches(trainer_and_batch):
    trainer, _ = trainer_and_batch
    confidence = trainer.model.reference.confidence
    assert id(confidence.weight) in trainer.gradient_optional
    assert id(confidence.bias) in trainer.gradient_optional
    assert id(trainer.model.fusion.proj.weight) not in trainer.gradient_optional
    assert all(p.grad is None for p in trainer.optimizer.params)


def test_unreached_parameters_still_decay(trainer_and_batch):
    trainer, batch = trainer_and_batch
    weight = trainer.model.reference.confidence.weight
    before = weight.data.copy()
    record = trainer.train_step(batch, 1e-3)
    assert np.isfinite(record["loss"])
    np.testing.assert_array_equal(weight.grad, np.zeros_like(before))
    np.testing.assert_allclose(weight.data, before * (1.0 - 1e-3 * trainer.cfg.train.weight_decay))


def test_missing_gradient_outside_the_optional_set_is_an_error(trainer_and_batch):
    trainer, batch = trainer_and_batch
    trainer.gradient_optional.discard(id(trainer.model.reference.confidence.weight))
    with pytest.raises(ContractError, match="missing gradients"):
        trainer.train_step(batch, 1e-3)
