"""
Evaluation commands: retrieve, eval and report
"""
import argparse
import json
from pathlib import Path

from config.settings import METRIC_NAMES, RETRIEVAL_DEPTH
from commands.options import Options, add_common_arguments, read_embeddings
from utils.adapter_core import load_adapter
from utils.embedding_store import load_qrels, load_run, load_tags, write_run
from utils.exceptions import ConfigError
from utils.metrics import MetricsReport, evaluate, render_table
from utils.retrieval import retrieve_topk
from utils.splits import load_splits


class EvaluationCommands:
    """Commands that score and compare retrieval runs"""

    def register(self, subparsers: argparse._SubParsersAction):
        retrieve = subparsers.add_parser('retrieve', help='brute-force top-k retrieval')
        retrieve.add_argument('--queries')
        retrieve.add_argument('--docs')
        retrieve.add_argument('--adapter', help='adapter file; zero-shot when absent')
        retrieve.add_argument('--splits', help='retrieve only the test queries of this splits file')
        retrieve.add_argument('--k', type=int)
        retrieve.add_argument('--format', choices=('packed', 'lines'))
        retrieve.add_argument('--tag', help='run tag written in the last column')
        retrieve.add_argument('--out', help='TREC run file')
        retrieve.set_defaults(handler=self.retrieve)

        evaluate_parser = subparsers.add_parser('eval', help='score a run against qrels')
        evaluate_parser.add_argument('--run')
        evaluate_parser.add_argument('--qrels')
        evaluate_parser.add_argument('--tags')
        evaluate_parser.add_argument('--out', help='metrics JSON file')
        evaluate_parser.set_defaults(handler=self.evaluate)

        report = subparsers.add_parser('report', help='render metric reports side by side')
        report.add_argument('reports', nargs='*', metavar='METHOD=PATH', help='metrics JSON per method')
        report.add_argument('--metric', choices=METRIC_NAMES)
        report.add_argument('--out', help='also write the table here')
        report.set_defaults(handler=self.report)

        for parser in (retrieve, evaluate_parser, report):
            add_common_arguments(parser)

    def retrieve(self, options: Options) -> int:
        queries = read_embeddings(options, 'queries')
        docs = read_embeddings(options, 'docs')
        if options.get('splits'):
            test = [qid for qid in load_splits(options.get('splits')).test if qid in queries]
            queries = queries.subset(test)
        adapter = load_adapter(options.get('adapter')) if options.get('adapter') else None
        run = retrieve_topk(queries, docs, adapter, options.get('k', RETRIEVAL_DEPTH, int))
        tag = options.get('tag', 'adapter' if adapter is not None else 'zero-shot')
        write_run(run, options.require('out'), tag)
        print(f"{len(run)} queries retrieved ({tag})")
        return 0

    def evaluate(self, options: Options) -> int:
        run = load_run(options.require('run'))
        qrels = load_qrels(options.require('qrels'))
        tags = load_tags(options.require('tags'))
        report = evaluate(run, qrels, tags)
        if options.get('out'):
            report.write(options.get('out'))
        print(json.dumps(report.overall, sort_keys=True, indent=2))
        return 0

    def report(self, options: Options) -> int:
        entries = options.args.reports or options.get_list('reports') or []
        if not entries:
            raise ConfigError("report needs at least one METHOD=PATH argument")
        reports = {}
        for entry in entries:
            method, sep, path = entry.partition('=')
            if not sep or not method or not path:
                raise ConfigError(f"expected METHOD=PATH, got {entry!r}")
            reports[method] = MetricsReport.read(path)

        table = render_table(reports, options.get('metric', 'ndcg_at_10'))
        if options.get('out'):
            Path(options.get('out')).write_text(table, encoding='utf-8')
        print(table, end='')
        return 0
