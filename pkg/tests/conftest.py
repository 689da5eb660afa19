import numpy as np
import pytest

from textcloak import planted
from textcloak.classifier import BoeMlp, TrainConfig, train
from textcloak.embeddings import EmbeddingTable


@pytest.fixture(scope="session")
def toy_setup():
    """Separable planted corpus; candidate search and classifier use
    different embedding scales (the neighbor threshold binds only the
    candidate space)."""
    return planted.make_setup(
        n_docs=500, doc_len=16, seed=11, clf_kw_scale=3.0, clf_style_scale=1.5
    )


@pytest.fixture(scope="session")
def toy_model(toy_setup):
    model = BoeMlp(toy_setup.clf_table, len(toy_setup.label_names), hidden=64)
    report = train(model, toy_setup.split, TrainConfig(epochs=50, lr=0.5, batch_size=32, seed=5))
    assert report.final_test_acc >= 0.95
    return model


@pytest.fixture(scope="session")
def sharp_setup():
    """Planted corpus at small embedding scale for the constructed model."""
    return planted.make_setup(n_docs=240, doc_len=12, seed=7, kw_scale=0.02, style_scale=0.01)


@pytest.fixture(scope="session")
def sharp_model(sharp_setup):
    return planted.keyword_model(sharp_setup.table, doc_len=12)


@pytest.fixture()
def words_table():
    """Hand-placed vectors: 'amazing' is the only neighbor of 'awesome' within 0.5."""
    vectors = {
        "awesome": np.array([0.0, 0.0]),
        "amazing": np.array([0.3, 0.0]),
        "great": np.array([0.6, 0.0]),
        "blue": np.array([1.0, 0.0]),
        "red": np.array([0.0, 2.0]),
    }
    return EmbeddingTable(vectors, 2)
