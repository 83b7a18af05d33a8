"""
Stage commands: synth, split, align, mine, adapt and the end-to-end pipeline
"""
import argparse
import json
import logging
from pathlib import Path

from config.settings import (
    ALIGNMENT_DOCS_PER_TASK, DEFAULT_SAMPLER, DEFAULT_TRAIN_RATIO, MINING_PERC, MINING_POOL_SIZE,
    NEGATIVES_PER_QUERY, RETRIEVAL_DEPTH
)
from commands.options import Options, add_common_arguments, add_training_arguments, read_embeddings
from utils.adapter_core import ALIGNMENT_STARTS, init_adapter, load_adapter, save_adapter
from utils.embedding_store import load_qrels, load_tags
from utils.exceptions import ConfigError
from utils.negative_mining import STRATEGIES, load_negatives, save_negatives
from utils.optimizer import TrainConfig
from utils.pipeline import (
    MODES, PipelineConfig, PipelineInputs, build_contrastive_batch, mine_negatives,
    run_adaptation_stage, run_alignment_stage, run_pipeline
)
from utils.splits import SplitSpec, load_splits, sample_alignment_docs, save_splits, split_dataset
from utils.synthetic import SyntheticSpec, make_synthetic

logger = logging.getLogger('radapt.training')


class StageCommands:
    """Commands that build data and train adapters"""

    def register(self, subparsers: argparse._SubParsersAction):
        synth = subparsers.add_parser('synth', help='generate a synthetic dataset')
        synth.add_argument('--out', help='output directory')
        synth.add_argument('--n-docs', type=int)
        synth.add_argument('--n-queries', type=int)
        synth.add_argument('--strong-dim', type=int)
        synth.add_argument('--weak-dim', type=int)
        synth.add_argument('--noise-sigma', type=float)
        synth.add_argument('--clusters', type=int)
        synth.add_argument('--instruction-shift', type=float)
        synth.add_argument('--near-duplicate-rate', type=float)
        synth.add_argument('--weak-query-noise', type=float)
        synth.add_argument('--task-count', type=int)
        synth.add_argument('--group-count', type=int)
        synth.add_argument('--identity-projection', action='store_true')
        synth.set_defaults(handler=self.synth)

        split = subparsers.add_parser('split', help='split labeled queries into train/val/test')
        split.add_argument('--qrels')
        split.add_argument('--tags')
        split.add_argument('--train-ratio', type=float)
        split.add_argument('--out', help='splits JSON file')
        split.set_defaults(handler=self.split)

        align = subparsers.add_parser('align', help='alignment stage on unlabeled documents')
        align.add_argument('--q-embeds', help='query-embedder vectors of the documents')
        align.add_argument('--d-embeds', help='document-embedder vectors of the documents')
        align.add_argument('--tags', help='sample --per-task documents from each task')
        align.add_argument('--per-task', type=int)
        align.add_argument('--train-groups', help='comma-separated groups to sample from')
        align.add_argument('--init', choices=ALIGNMENT_STARTS)
        align.add_argument('--format', choices=('packed', 'lines'))
        align.add_argument('--out', help='adapter file')
        align.add_argument('--log', help='per-epoch JSONL training log')
        add_training_arguments(align, with_early_stopping=False)
        align.set_defaults(handler=self.align)

        mine = subparsers.add_parser('mine', help='mine negatives for labeled queries')
        self._add_labeled_inputs(mine)
        mine.add_argument('--adapter', help='score candidates with this adapter (zero-shot if absent)')
        mine.add_argument('--sampler', choices=STRATEGIES)
        mine.add_argument('--k', type=int)
        mine.add_argument('--pool-size', type=int)
        mine.add_argument('--perc', type=float)
        mine.add_argument('--out', help='negatives JSONL file')
        mine.set_defaults(handler=self.mine)

        adapt = subparsers.add_parser('adapt', help='adaptation stage on labeled queries')
        self._add_labeled_inputs(adapt)
        adapt.add_argument('--adapter', help='starting adapter (scaled-random init if absent)')
        adapt.add_argument('--negatives', help='negatives JSONL from `mine`')
        adapt.add_argument('--out', help='adapter file')
        adapt.add_argument('--log', help='per-epoch JSONL training log')
        add_training_arguments(adapt)
        adapt.set_defaults(handler=self.adapt)

        pipeline = subparsers.add_parser('pipeline', help='split, align, mine, adapt, retrieve and eval')
        pipeline.add_argument('--queries', help='query-embedder vectors of the queries')
        pipeline.add_argument('--docs', help='document-embedder vectors of the corpus')
        pipeline.add_argument('--doc-queries', help='query-embedder vectors of the corpus (alignment)')
        pipeline.add_argument('--qrels')
        pipeline.add_argument('--tags')
        pipeline.add_argument('--format', choices=('packed', 'lines'))
        pipeline.add_argument('--mode', choices=MODES)
        pipeline.add_argument('--sampler', choices=STRATEGIES)
        pipeline.add_argument('--k', type=int)
        pipeline.add_argument('--pool-size', type=int)
        pipeline.add_argument('--perc', type=float)
        pipeline.add_argument('--train-ratio', type=float)
        pipeline.add_argument('--train-groups')
        pipeline.add_argument('--per-task', type=int)
        pipeline.add_argument('--depth', type=int)
        pipeline.add_argument('--align-lr', type=float)
        pipeline.add_argument('--align-epochs', type=int)
        pipeline.add_argument('--out', help='output directory')
        add_training_arguments(pipeline)
        pipeline.set_defaults(handler=self.pipeline)

        for parser in (synth, split, align, mine, adapt, pipeline):
            add_common_arguments(parser)

    @staticmethod
    def _add_labeled_inputs(parser: argparse.ArgumentParser):
        parser.add_argument('--queries', help='query embeddings')
        parser.add_argument('--docs', help='document embeddings')
        parser.add_argument('--qrels')
        parser.add_argument('--splits', help='use the train and val queries of this splits file')
        parser.add_argument('--format', choices=('packed', 'lines'))

    def synth(self, options: Options) -> int:
        out = options.require('out')
        spec = SyntheticSpec(
            n_docs=options.get('n_docs', 2000, int),
            n_queries=options.get('n_queries', 200, int),
            strong_dim=options.get('strong_dim', 64, int),
            weak_dim=options.get('weak_dim', 32, int),
            noise_sigma=options.get('noise_sigma', 0.1, float),
            cluster_count=options.get('clusters', 20, int),
            seed=options.seed,
            weak_query_noise=options.get('weak_query_noise', 1.0, float),
            instruction_shift=options.get('instruction_shift', 0.0, float),
            near_duplicate_rate=options.get('near_duplicate_rate', 0.0, float),
            task_count=options.get('task_count', 2, int),
            group_count=options.get('group_count', 2, int),
            identity_projection=options.get('identity_projection', False),
        )
        paths = make_synthetic(spec).save(out)
        print(json.dumps({name: str(path) for name, path in paths.items()}, indent=2))
        return 0

    def split(self, options: Options) -> int:
        qrels = load_qrels(options.require('qrels'))
        tags = load_tags(options.require('tags'))
        spec = SplitSpec(options.get('train_ratio', DEFAULT_TRAIN_RATIO, float), options.seed)
        labeled = [qid for qid in qrels.query_ids() if qrels.positives(qid)]
        splits = split_dataset(labeled, tags, spec)
        save_splits(splits, options.require('out'))
        print(f"train {len(splits.train)}  val {len(splits.val)}  test {len(splits.test)}")
        return 0

    def align(self, options: Options) -> int:
        q_embeds = read_embeddings(options, 'q_embeds')
        d_embeds = read_embeddings(options, 'd_embeds')
        if options.get('tags'):
            ids = sample_alignment_docs(sorted(set(q_embeds.ids) & set(d_embeds.ids)),
                                        load_tags(options.get('tags')),
                                        options.get('per_task', ALIGNMENT_DOCS_PER_TASK, int), options.seed,
                                        groups=options.get_list('train_groups'))
            q_embeds, d_embeds = q_embeds.subset(ids), d_embeds.subset(ids)

        cfg = options.train_config(TrainConfig.alignment())
        adapter, report = run_alignment_stage(q_embeds, d_embeds, cfg, scheme=options.get('init'))
        save_adapter(adapter, options.require('out'))
        if options.get('log'):
            report.write_jsonl(options.get('log'))
        print(f"alignment: {report.stop_epoch} epochs, final loss {report.epochs[-1].train_loss:.6f}")
        return 0

    def _labeled_ids(self, options: Options, qrels):
        if options.get('splits'):
            splits = load_splits(options.get('splits'))
            return splits.train, splits.val
        return [qid for qid in qrels.query_ids() if qrels.positives(qid)], []

    def mine(self, options: Options) -> int:
        queries = read_embeddings(options, 'queries')
        docs = read_embeddings(options, 'docs')
        qrels = load_qrels(options.require('qrels'))
        adapter = load_adapter(options.get('adapter')) if options.get('adapter') else None
        train_ids, val_ids = self._labeled_ids(options, qrels)
        cfg = PipelineConfig(
            sampler=options.get('sampler', DEFAULT_SAMPLER),
            k=options.get('k', NEGATIVES_PER_QUERY, int),
            pool_size=options.get('pool_size', MINING_POOL_SIZE, int),
            perc=options.get('perc', MINING_PERC, float),
            seed=options.seed,
        )
        ids = [qid for qid in train_ids + val_ids if qid in queries]
        negatives = mine_negatives(cfg.sampler, queries, docs, qrels, adapter, ids, cfg)
        negatives.check_against(qrels)
        save_negatives(negatives, options.require('out'))
        print(f"{negatives.strategy}: {len(negatives)} queries, {sum(negatives.backfilled.values())} backfilled")
        return 0

    def adapt(self, options: Options) -> int:
        queries = read_embeddings(options, 'queries')
        docs = read_embeddings(options, 'docs')
        qrels = load_qrels(options.require('qrels'))
        negatives = load_negatives(options.require('negatives'))
        train_ids, val_ids = self._labeled_ids(options, qrels)

        cfg = options.train_config(TrainConfig.adaptation())
        if options.get('adapter'):
            adapter = load_adapter(options.get('adapter'))
        else:
            adapter = init_adapter(queries.dim, docs.dim, 'scaled-random', cfg.seed)
        train = build_contrastive_batch(queries, docs, qrels, negatives, train_ids)
        val = build_contrastive_batch(queries, docs, qrels, negatives, val_ids) if val_ids else None
        if val is None and cfg.patience is not None:
            raise ConfigError("early stopping needs validation queries; pass --splits or --patience 0")

        adapter, report = run_adaptation_stage(adapter, train, val, cfg)
        save_adapter(adapter.with_metadata(sampler=negatives.strategy, k=negatives.params.get('k')),
                     options.require('out'))
        if options.get('log'):
            report.write_jsonl(options.get('log'))
        print(f"adaptation: {report.stop_epoch} epochs, best epoch {report.best_epoch}")
        return 0

    def pipeline(self, options: Options) -> int:
        doc_queries = read_embeddings(options, 'doc_queries') if options.get('doc_queries') else None
        inputs = PipelineInputs(
            queries=read_embeddings(options, 'queries'),
            docs=read_embeddings(options, 'docs'),
            qrels=load_qrels(options.require('qrels')),
            tags=load_tags(options.require('tags')),
            doc_queries=doc_queries,
        )
        mode = options.get('mode', 'two-stage')
        seed = options.seed
        alignment = TrainConfig.alignment(seed=seed)
        alignment = alignment.updated(**{k: v for k, v in {
            'learning_rate': options.get('align_lr', None, float),
            'max_epochs': options.get('align_epochs', None, int),
        }.items() if v is not None})
        base = TrainConfig.embedding_adapter() if mode == 'adapter-only' else TrainConfig.adaptation()
        groups = options.get_list('train_groups')

        cfg = PipelineConfig(
            mode=mode,
            sampler=options.get('sampler', DEFAULT_SAMPLER),
            k=options.get('k', NEGATIVES_PER_QUERY, int),
            train_ratio=options.get('train_ratio', DEFAULT_TRAIN_RATIO, float),
            seed=seed,
            train_groups=set(groups) if groups else None,
            pool_size=options.get('pool_size', MINING_POOL_SIZE, int),
            perc=options.get('perc', MINING_PERC, float),
            alignment_docs_per_task=options.get('per_task', ALIGNMENT_DOCS_PER_TASK, int),
            depth=options.get('depth', RETRIEVAL_DEPTH, int),
            alignment=alignment,
            adaptation=options.train_config(base),
        )
        out = Path(options.require('out'))
        result = run_pipeline(inputs, cfg, out)
        print(f"{mode}: " + '  '.join(f"{name} {100 * value:.2f}" for name, value in result.report.overall.items()))
        return 0
