import pytest
import torch

from wordstyle.corpus import generate_synthetic_corpus
from wordstyle.training import TrainingConfig, train

# Tiny tensors gain nothing from intra-op threads; pinning avoids thread
# thrash on small CI boxes and keeps timings stable.
torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """A small generated corpus shared by read-only tests."""
    root = tmp_path_factory.mktemp("toy_corpus")
    utterances = generate_synthetic_corpus(root, 16, seed=11)
    return root, utterances


@pytest.fixture(scope="session")
def tiny_train(tmp_path_factory, toy_corpus):
    """A briefly trained model + checkpoint directory for behavioral tests.

    Far too few steps to sound like anything; enough for 'trained model'
    smoke checks (context sensitivity, stats, CLI plumbing).
    """
    out_dir = tmp_path_factory.mktemp("tiny_model")
    _, utterances = toy_corpus
    config = TrainingConfig(
        batch_size=4, max_steps=60, warmup_steps=20, decay_steps=1000, seed=5
    )
    result = train(utterances, config, out_dir=out_dir)
    return out_dir, result
