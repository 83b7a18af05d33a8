"""Shared fixtures for the radapt test suite"""
import numpy as np
import pytest

from utils.embedding_store import EmbeddingSet, RelevanceJudgments, TaskTag
from utils.logging_manager import logging_manager


@pytest.fixture(autouse=True)
def _detach_log_handlers():
    yield
    logging_manager.shutdown()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_set():
    """EmbeddingSet factory: make_set(['a', 'b'], [[...], [...]])"""
    def build(ids, vectors, tag='test'):
        vectors = np.asarray(vectors, dtype=np.float64)
        return EmbeddingSet(tag, vectors.shape[1], tuple(ids), vectors)
    return build


@pytest.fixture
def basis_docs(make_set):
    return make_set(['d1', 'd2', 'd3'], np.eye(3))


@pytest.fixture
def two_task_tags():
    return TaskTag({
        'q1': ('t0', 'g0'), 'q2': ('t0', 'g0'),
        'q3': ('t1', 'g1'), 'q4': ('t1', 'g1'),
    })


@pytest.fixture
def simple_qrels():
    return RelevanceJudgments({
        'q1': {'d1': 1, 'd2': 0},
        'q2': {'d2': 2},
    })
