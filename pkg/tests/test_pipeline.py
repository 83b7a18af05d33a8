"""Tests for stage orchestration on small synthetic datasets"""
import numpy as np
import pytest

from utils.adapter_core import init_adapter
from utils.embedding_store import RelevanceJudgments
from utils.exceptions import ConfigError, TrainingError
from utils.losses import AlignmentBatch, alignment_loss
from utils.negative_mining import NegativeSet
from utils.optimizer import TrainConfig
from utils.pipeline import (
    PipelineConfig, PipelineInputs, build_contrastive_batch, run_adaptation_stage, run_alignment_stage,
    run_pipeline
)
from utils.synthetic import SyntheticSpec, make_synthetic

FAST_ALIGNMENT = TrainConfig.alignment(max_epochs=80, batch_size=32, learning_rate=2e-2)
FAST_ADAPTATION = TrainConfig.adaptation(max_epochs=4, batch_size=16, learning_rate=1e-3)


@pytest.fixture(scope='module')
def dataset():
    return make_synthetic(SyntheticSpec(n_docs=160, n_queries=60, strong_dim=16, weak_dim=8, noise_sigma=0.05,
                                        cluster_count=5, seed=7, task_count=2, group_count=2))


def asymmetric_inputs(data):
    return PipelineInputs(data.strong_queries, data.weak_docs, data.qrels, data.tags, data.strong_docs)


def fast_config(**overrides):
    settings = dict(k=3, pool_size=20, alignment_docs_per_task=60, depth=20,
                    alignment=FAST_ALIGNMENT, adaptation=FAST_ADAPTATION)
    settings.update(overrides)
    return PipelineConfig(**settings)


class TestAlignmentStage:

    def test_reduces_alignment_loss(self, dataset):
        adapter, report = run_alignment_stage(dataset.strong_docs, dataset.weak_docs, FAST_ALIGNMENT)
        ids = sorted(dataset.strong_docs.ids)
        batch = AlignmentBatch.from_vectors(dataset.strong_docs.rows(ids), dataset.weak_docs.rows(ids))
        start = init_adapter(16, 8, seed=FAST_ALIGNMENT.seed)
        assert alignment_loss(adapter, batch).value < alignment_loss(start, batch).value
        assert report.stop_epoch == 80
        assert adapter.metadata['alignment']['epochs_run'] == 80
        assert adapter.metadata['query_embedder'] == 'strong'
        assert adapter.metadata['doc_embedder'] == 'weak'
        assert adapter.metadata['init_scheme'] == 'least-squares'

    def test_identical_spaces_keep_identity_exactly(self, dataset):
        docs = dataset.strong_docs
        cfg = TrainConfig.alignment(max_epochs=5, weight_decay=0.0)
        adapter, report = run_alignment_stage(docs, docs, cfg, init=init_adapter(16, 16, 'identity-like'))
        np.testing.assert_array_equal(adapter.weights, np.eye(16))
        assert report.stop_epoch == 5

    def test_requires_matching_ids(self, dataset):
        with pytest.raises(TrainingError):
            run_alignment_stage(dataset.strong_docs.subset(['d000', 'd001']),
                                dataset.weak_docs.subset(['d000', 'd002']), FAST_ALIGNMENT)


class TestContrastiveBatch:

    def test_one_row_per_positive_with_cyclic_padding(self, make_set):
        queries = make_set(['q1', 'q2'], [[1.0, 0.0], [0.0, 1.0]])
        docs = make_set(['a', 'b', 'c', 'd'], [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]])
        qrels = RelevanceJudgments({'q1': {'a': 1, 'b': 2}, 'q2': {'b': 1}})
        negatives = NegativeSet({'q1': ['c', 'd'], 'q2': ['c']}, 'naive_topk')
        batch = build_contrastive_batch(queries, docs, qrels, negatives, ['q2', 'q1'])
        assert len(batch) == 3 and batch.k == 2
        np.testing.assert_array_equal(batch.positives, [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        np.testing.assert_array_equal(batch.negatives[2], [[1.0, 1.0], [1.0, 1.0]])

    def test_no_usable_queries(self, make_set):
        queries = make_set(['q1'], [[1.0, 0.0]])
        with pytest.raises(TrainingError):
            build_contrastive_batch(queries, queries, RelevanceJudgments({'q1': {'x': 0}}),
                                    NegativeSet({}, 'random'), ['q1'])


class TestAdaptationStage:

    def test_without_validation_disables_early_stopping(self, make_set):
        queries = make_set(['q1'], [[1.0, 0.0]])
        docs = make_set(['a', 'b'], [[1.0, 0.0], [0.0, 1.0]])
        batch = build_contrastive_batch(queries, docs, RelevanceJudgments({'q1': {'a': 1}}),
                                        NegativeSet({'q1': ['b']}, 'random'), ['q1'])
        adapter, report = run_adaptation_stage(init_adapter(2, 2), batch, None, FAST_ADAPTATION)
        assert report.stop_epoch == FAST_ADAPTATION.max_epochs
        assert 'adaptation' in adapter.metadata


class TestRunPipeline:

    @pytest.mark.parametrize('mode', ['two-stage', 'align-only', 'adapter-only'])
    def test_adapter_modes(self, dataset, mode):
        result = run_pipeline(asymmetric_inputs(dataset), fast_config(mode=mode))
        assert result.adapter is not None
        assert result.adapter.weights.shape == (16, 8)
        assert result.adapter.metadata['mode'] == mode
        assert set(result.run.query_ids()) == set(result.splits.test)
        assert result.report.missing == []
        assert set(result.report.overall) == {'ndcg_at_10', 'recall_at_100', 'map_at_100', 'mrr_at_100'}
        assert [r.stage for r in result.train_reports] == {
            'two-stage': ['alignment', 'adaptation'],
            'align-only': ['alignment'],
            'adapter-only': ['adaptation'],
        }[mode]

    def test_adapter_only_uses_random_negatives(self, dataset):
        result = run_pipeline(asymmetric_inputs(dataset), fast_config(mode='adapter-only'))
        assert result.negatives.strategy == 'random'
        assert result.adapter.metadata['sampler'] == 'random'
        assert result.adapter.metadata['init_scheme'] == 'scaled-random'

    def test_zero_shot_on_symmetric_embeddings(self, dataset):
        inputs = PipelineInputs(dataset.weak_queries, dataset.weak_docs, dataset.qrels, dataset.tags)
        result = run_pipeline(inputs, fast_config(mode='zero-shot'))
        assert result.adapter is None and result.train_reports == []
        assert 0.0 <= result.report.overall['ndcg_at_10'] <= 1.0

    def test_align_only_beats_weak_zero_shot(self, dataset):
        aligned = run_pipeline(asymmetric_inputs(dataset), fast_config(mode='align-only'))
        weak = run_pipeline(PipelineInputs(dataset.weak_queries, dataset.weak_docs, dataset.qrels, dataset.tags),
                            fast_config(mode='zero-shot'))
        assert aligned.report.overall['ndcg_at_10'] > weak.report.overall['ndcg_at_10']

    def test_negatives_never_contain_positives(self, dataset):
        result = run_pipeline(asymmetric_inputs(dataset), fast_config(mode='two-stage'))
        result.negatives.check_against(dataset.qrels)
        assert set(result.negatives.query_ids()) <= set(result.splits.train) | set(result.splits.val)

    def test_train_groups_restrict_training(self, dataset):
        result = run_pipeline(asymmetric_inputs(dataset), fast_config(mode='adapter-only', train_groups={'g0'}))
        assert all(dataset.tags.group(qid) == 'g0' for qid in result.negatives.query_ids())
        assert result.adapter.metadata['train_groups'] == ['g0']
        assert set(result.run.query_ids()) == set(result.splits.test)

    def test_repeated_runs_write_identical_bytes(self, dataset, tmp_path):
        for name in ('first', 'second'):
            run_pipeline(asymmetric_inputs(dataset), fast_config(mode='two-stage'), tmp_path / name)
        for artifact in ('adapter.eraw', 'adapter.eraw.json', 'run.trec', 'metrics.json',
                         'splits.json', 'negatives.jsonl'):
            assert (tmp_path / 'first' / artifact).read_bytes() == (tmp_path / 'second' / artifact).read_bytes()
        assert (tmp_path / 'first' / 'alignment_log.jsonl').exists()
        assert (tmp_path / 'first' / 'adaptation_log.jsonl').exists()

    def test_alignment_modes_need_document_query_vectors(self, dataset):
        inputs = PipelineInputs(dataset.strong_queries, dataset.weak_docs, dataset.qrels, dataset.tags)
        with pytest.raises(ConfigError):
            run_pipeline(inputs, fast_config(mode='align-only'))

    @pytest.mark.parametrize('overrides', [{'mode': 'fine-tune'}, {'sampler': 'hardest'}])
    def test_unknown_choices(self, overrides):
        with pytest.raises(ConfigError):
            PipelineConfig(**overrides)

    def test_adapter_only_defaults(self):
        config = PipelineConfig(mode='adapter-only', seed=4).adaptation_config()
        assert config.learning_rate == 1e-3 and config.weight_decay == 1e-4 and config.seed == 4
