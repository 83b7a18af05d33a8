"""
Stage orchestration: split, align, mine, adapt, retrieve and evaluate

Method modes compose the same stages:
    two-stage     alignment then adaptation
    align-only    alignment only
    adapter-only  adaptation only, random init and random negatives
    zero-shot     no adapter, symmetric embeddings
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import (
    ALIGNMENT_DOCS_PER_TASK, DEFAULT_SAMPLER, DEFAULT_SEED, DEFAULT_TRAIN_RATIO, MINING_PERC,
    MINING_POOL_SIZE, NEGATIVES_PER_QUERY, RETRIEVAL_DEPTH
)
from utils.adapter_core import Adapter, alignment_start, init_adapter, save_adapter
from utils.embedding_store import EmbeddingSet, RelevanceJudgments, RetrievalRun, TaskTag, write_run
from utils.exceptions import ConfigError, TrainingError
from utils.logging_manager import logging_manager
from utils.losses import AlignmentBatch, ContrastiveBatch, alignment_loss, infonce_loss, make_loss
from utils.metrics import MetricsReport, evaluate
from utils.negative_mining import (
    NegativeSet, STRATEGIES, mine_naive_topk, mine_random, mine_topk_percpos, save_negatives
)
from utils.optimizer import ShuffledBatches, TrainConfig, TrainReport, train_loop
from utils.retrieval import retrieve_topk, score_pairs
from utils.splits import SplitSpec, Splits, sample_alignment_docs, save_splits, split_dataset

logger = logging.getLogger('radapt.training')

MODES = ('two-stage', 'align-only', 'adapter-only', 'zero-shot')


def run_alignment_stage(q_embeds: EmbeddingSet, d_embeds: EmbeddingSet, cfg: Optional[TrainConfig] = None,
                        init: Optional[Adapter] = None, scheme: Optional[str] = None) -> Tuple[Adapter, TrainReport]:
    """Fit W so that E_q(d) W points at E_d(d) for unlabeled documents"""
    cfg = cfg or TrainConfig.alignment()
    if set(q_embeds.ids) != set(d_embeds.ids) or len(q_embeds) != len(d_embeds):
        raise TrainingError("alignment sets must cover identical document ids")
    ids = sorted(q_embeds.ids)
    batch = AlignmentBatch.from_vectors(q_embeds.rows(ids), d_embeds.rows(ids))
    init = init or alignment_start(batch.q_side, batch.d_side, scheme, cfg.seed)

    adapter, report = train_loop(init, ShuffledBatches(batch, cfg.seed), alignment_loss, cfg, stage='alignment')
    logging_manager.log_stage('alignment', report.summary())
    return adapter.with_metadata(alignment=report.summary(), query_embedder=q_embeds.embedder_tag,
                                 doc_embedder=d_embeds.embedder_tag), report


def build_contrastive_batch(queries: EmbeddingSet, docs: EmbeddingSet, qrels: RelevanceJudgments,
                            negatives: NegativeSet, query_ids: Sequence[str]) -> ContrastiveBatch:
    """One example per (query, positive) carrying that query's negatives"""
    used = [qid for qid in sorted(query_ids) if qid in negatives and qrels.positives(qid)]
    if not used:
        raise TrainingError("no labeled queries with negatives")
    k = max(len(negatives.negatives(qid)) for qid in used)

    q_rows, p_rows, n_rows = [], [], []
    for qid in used:
        listed = negatives.negatives(qid)
        if not listed:
            raise TrainingError(f"query {qid!r} has no negatives")
        if len(listed) < k:
            logger.warning(f"query {qid!r}: {len(listed)} negatives, repeating to {k}")
            listed = [listed[i % len(listed)] for i in range(k)]
        negative_rows = docs.rows(listed)
        for positive in qrels.positives(qid):
            q_rows.append(queries.vector(qid))
            p_rows.append(docs.vector(positive))
            n_rows.append(negative_rows)
    return ContrastiveBatch(np.array(q_rows), np.array(p_rows), np.array(n_rows))


def run_adaptation_stage(adapter: Adapter, labeled: ContrastiveBatch, validation: Optional[ContrastiveBatch],
                         cfg: Optional[TrainConfig] = None) -> Tuple[Adapter, TrainReport]:
    """Contrastive fine-tuning with early stopping on validation InfoNCE"""
    cfg = cfg or TrainConfig.adaptation()
    loss = make_loss(cfg.loss, cfg.temperature, cfg.margin)
    evaluator = None
    if validation is not None and len(validation):
        def evaluator(candidate: Adapter) -> float:
            return infonce_loss(candidate, validation, cfg.temperature).value
    elif cfg.patience is not None:
        logger.warning("no validation queries; early stopping disabled for this run")
        cfg = cfg.updated(patience=None)

    trained, report = train_loop(adapter, ShuffledBatches(labeled, cfg.seed), loss, cfg, evaluator,
                                 stage='adaptation')
    logging_manager.log_stage('adaptation', report.summary())
    return trained.with_metadata(adaptation=report.summary()), report


@dataclass
class PipelineInputs:
    """queries: E_q(q); docs: E_d(d); doc_queries: E_q(d) for alignment"""
    queries: EmbeddingSet
    docs: EmbeddingSet
    qrels: RelevanceJudgments
    tags: TaskTag
    doc_queries: Optional[EmbeddingSet] = None


@dataclass
class PipelineConfig:
    mode: str = 'two-stage'
    sampler: str = DEFAULT_SAMPLER
    k: int = NEGATIVES_PER_QUERY
    train_ratio: float = DEFAULT_TRAIN_RATIO
    seed: int = DEFAULT_SEED
    train_groups: Optional[Collection[str]] = None
    pool_size: int = MINING_POOL_SIZE
    perc: float = MINING_PERC
    alignment_docs_per_task: int = ALIGNMENT_DOCS_PER_TASK
    depth: int = RETRIEVAL_DEPTH
    alignment: Optional[TrainConfig] = None
    adaptation: Optional[TrainConfig] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.sampler not in STRATEGIES:
            raise ConfigError(f"unknown sampler {self.sampler!r}; expected one of {STRATEGIES}")

    def alignment_config(self) -> TrainConfig:
        return (self.alignment or TrainConfig.alignment()).updated(seed=self.seed)

    def adaptation_config(self) -> TrainConfig:
        if self.adaptation is not None:
            return self.adaptation.updated(seed=self.seed)
        if self.mode == 'adapter-only':
            return TrainConfig.embedding_adapter(seed=self.seed)
        return TrainConfig.adaptation(seed=self.seed)


@dataclass
class PipelineResult:
    mode: str
    splits: Splits
    run: RetrievalRun
    report: MetricsReport
    adapter: Optional[Adapter] = None
    negatives: Optional[NegativeSet] = None
    train_reports: List[TrainReport] = field(default_factory=list)

    def write(self, directory: Union[str, Path]) -> Dict[str, Path]:
        """Persist every artifact of the run under directory"""
        directory = Path(directory)
        paths = {
            'splits': directory / 'splits.json',
            'run': directory / 'run.trec',
            'metrics': directory / 'metrics.json',
        }
        save_splits(self.splits, paths['splits'])
        write_run(self.run, paths['run'], self.mode)
        self.report.write(paths['metrics'])
        if self.adapter is not None:
            paths['adapter'] = directory / 'adapter.eraw'
            save_adapter(self.adapter, paths['adapter'])
        if self.negatives is not None:
            paths['negatives'] = directory / 'negatives.jsonl'
            save_negatives(self.negatives, paths['negatives'])
        for train_report in self.train_reports:
            paths[f'{train_report.stage}_log'] = directory / f'{train_report.stage}_log.jsonl'
            train_report.write_jsonl(paths[f'{train_report.stage}_log'])
        return paths


def in_groups(ids: Sequence[str], tags: TaskTag, groups: Optional[Collection[str]]) -> List[str]:
    if groups is None:
        return list(ids)
    return [i for i in ids if tags.group(i) in groups]


def mine_negatives(sampler: str, queries: EmbeddingSet, docs: EmbeddingSet, qrels: RelevanceJudgments,
                   adapter: Optional[Adapter], query_ids: Sequence[str], cfg: PipelineConfig) -> NegativeSet:
    """Negatives for the given labeled queries, scored with the current adapter"""
    if sampler == 'random':
        return mine_random(docs.ids, qrels, cfg.k, cfg.seed, query_ids=query_ids)

    run = retrieve_topk(queries.subset(query_ids), docs, adapter, max(cfg.pool_size, cfg.k + 1))
    if sampler == 'naive_topk':
        return mine_naive_topk(run, qrels, cfg.k, query_ids=query_ids)

    # positives that fell outside the pool are scored directly
    missing = []
    for qid in query_ids:
        positives = qrels.positives(qid)
        if not set(run.ranked_ids(qid)) & set(positives):
            missing += [(qid, doc_id) for doc_id in positives if doc_id in docs]
    positive_scores: Dict[str, float] = {}
    for (qid, _), score in score_pairs(queries, docs, missing, adapter).items():
        positive_scores[qid] = max(score, positive_scores.get(qid, -np.inf))
    return mine_topk_percpos(run, qrels, cfg.pool_size, cfg.perc, cfg.k, corpus_ids=docs.ids,
                             positive_scores=positive_scores, seed=cfg.seed, query_ids=query_ids)


def run_pipeline(inputs: PipelineInputs, cfg: PipelineConfig,
                 output_dir: Optional[Union[str, Path]] = None) -> PipelineResult:
    """split -> [align] -> [mine -> adapt] -> retrieve -> eval"""
    queries, docs, qrels, tags = inputs.queries, inputs.docs, inputs.qrels, inputs.tags
    labeled = [qid for qid in qrels.query_ids() if qrels.positives(qid) and qid in queries]
    splits = split_dataset(labeled, tags, SplitSpec(cfg.train_ratio, cfg.seed))
    logger.info(f"Pipeline {cfg.mode}: {len(splits.train)} train / {len(splits.val)} val / {len(splits.test)} test")

    adapter: Optional[Adapter] = None
    negatives: Optional[NegativeSet] = None
    train_reports: List[TrainReport] = []

    if cfg.mode in ('two-stage', 'align-only'):
        if inputs.doc_queries is None:
            raise ConfigError(f"mode {cfg.mode} needs query-embedder vectors of the documents")
        align_ids = sample_alignment_docs(docs.ids, tags, cfg.alignment_docs_per_task, cfg.seed,
                                          groups=cfg.train_groups)
        adapter, report = run_alignment_stage(inputs.doc_queries.subset(align_ids), docs.subset(align_ids),
                                              cfg.alignment_config())
        train_reports.append(report)

    sampler = cfg.sampler if cfg.mode == 'two-stage' else None
    if cfg.mode in ('two-stage', 'adapter-only'):
        if cfg.mode == 'adapter-only':
            adapter = init_adapter(queries.dim, docs.dim, 'scaled-random', cfg.seed)
            sampler = 'random'
        train_ids = in_groups(splits.train, tags, cfg.train_groups)
        val_ids = in_groups(splits.val, tags, cfg.train_groups)
        if not train_ids:
            raise TrainingError("no training queries in the selected groups")

        negatives = mine_negatives(sampler, queries, docs, qrels, adapter, train_ids + val_ids, cfg)
        train_batch = build_contrastive_batch(queries, docs, qrels, negatives, train_ids)
        val_batch = build_contrastive_batch(queries, docs, qrels, negatives, val_ids) if val_ids else None
        adapter, report = run_adaptation_stage(adapter, train_batch, val_batch, cfg.adaptation_config())
        train_reports.append(report)

    if adapter is not None:
        adapter = adapter.with_metadata(mode=cfg.mode, sampler=sampler, k=cfg.k, seed=cfg.seed,
                                        train_ratio=cfg.train_ratio,
                                        train_groups=sorted(cfg.train_groups) if cfg.train_groups else None)
    run = retrieve_topk(queries.subset(splits.test), docs, adapter, cfg.depth)
    report = evaluate(run, qrels.restrict(splits.test), tags)

    result = PipelineResult(cfg.mode, splits, run, report, adapter, negatives, train_reports)
    if output_dir is not None:
        result.write(output_dir)
    return result

