import time

import pytest

from linksyn.datagen import DataGenConfig, generate_dataset, load_dataset, sample_random_mechanism
from linksyn.diffusion import DenoiserModel, ModelConfig, TrainConfig, prepare_training_data, train_model
from linksyn.seeds import make_rng

MECH_POOL_SEED = 2024


@pytest.fixture(scope="session")
def mechanism_pool_1000():
    """1,000 randomly generated valid mechanisms, shared by the datagen
    property tests and the acceptance criteria."""
    config = DataGenConfig(count=1, min_nodes=4, max_nodes=8, seed=MECH_POOL_SEED)
    t0 = time.time()
    graphs = [sample_random_mechanism(config, make_rng(MECH_POOL_SEED, i)) for i in range(1000)]
    return {"graphs": graphs, "gen_seconds": time.time() - t0}


@pytest.fixture(scope="session")
def small_dataset_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.jsonl"
    config = DataGenConfig(count=80, min_nodes=4, max_nodes=8, seed=42)
    summary = generate_dataset(config, path)
    assert summary.written == 80
    return path


@pytest.fixture(scope="session")
def small_records(small_dataset_path):
    return load_dataset(small_dataset_path)


@pytest.fixture(scope="session")
def tiny_model(small_records):
    """A briefly trained model for pipeline tests (quality is irrelevant)."""
    data = prepare_training_data(small_records)
    config = ModelConfig(T=40, hidden=96, summary_dim=32, encoder_hidden=32,
                         adj_pos_weight=data.adj_pos_weight)
    model = DenoiserModel.init_random(config, seed=11)
    train_model(model, data, TrainConfig(steps=120, batch_size=32, lr=1e-3, seed=12))
    return model


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_model, tmp_path_factory):
    from linksyn.diffusion import save_model
    path = tmp_path_factory.mktemp("ckpt") / "tiny.ckpt"
    save_model(path, tiny_model, None, {"step": 120, "train_seed": 12})
    return path
