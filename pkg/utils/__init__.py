"""
Utils package for the retrieval adapter toolkit
Contains the core modules and the shared logging/monitoring/error services
"""

from .exceptions import RadaptError
from .embedding_store import (
    EmbeddingSet, RelevanceJudgments, RetrievalRun, TaskTag,
    load_embeddings, save_embeddings, load_qrels, save_qrels, write_run, load_run, load_tags, save_tags
)
from .adapter_core import Adapter, init_adapter, apply_adapter, cosine_sim, l2_normalize, save_adapter, load_adapter
from .losses import AlignmentBatch, ContrastiveBatch, alignment_loss, infonce_loss, triplet_loss
from .optimizer import AdamWState, TrainConfig, TrainReport, adamw_step, lr_at, train_loop
from .negative_mining import NegativeSet, mine_topk_percpos, mine_naive_topk, mine_random
from .retrieval import retrieve_topk
from .metrics import MetricsReport, ndcg_at_k, recall_at_k, map_at_k, mrr_at_k, aggregate, render_table
from .splits import SplitSpec, split_dataset, sample_alignment_docs
from .synthetic import SyntheticSpec, make_synthetic
from .logging_manager import logging_manager
from .monitoring import performance_tracker
from .error_handler import error_handler

__all__ = [
    'RadaptError',
    'EmbeddingSet',
    'RelevanceJudgments',
    'RetrievalRun',
    'TaskTag',
    'load_embeddings',
    'save_embeddings',
    'load_qrels',
    'save_qrels',
    'write_run',
    'load_run',
    'load_tags',
    'save_tags',
    'Adapter',
    'init_adapter',
    'apply_adapter',
    'cosine_sim',
    'l2_normalize',
    'save_adapter',
    'load_adapter',
    'AlignmentBatch',
    'ContrastiveBatch',
    'alignment_loss',
    'infonce_loss',
    'triplet_loss',
    'AdamWState',
    'TrainConfig',
    'TrainReport',
    'adamw_step',
    'lr_at',
    'train_loop',
    'NegativeSet',
    'mine_topk_percpos',
    'mine_naive_topk',
    'mine_random',
    'retrieve_topk',
    'MetricsReport',
    'ndcg_at_k',
    'recall_at_k',
    'map_at_k',
    'mrr_at_k',
    'aggregate',
    'render_table',
    'SplitSpec',
    'split_dataset',
    'sample_alignment_docs',
    'SyntheticSpec',
    'make_synthetic',
    'logging_manager',
    'performance_tracker',
    'error_handler'
]
