"""
Ranked-retrieval metrics with task -> group -> overall macro averaging
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pytrec_eval

from config.settings import MAP_CUTOFF, METRIC_NAMES, MRR_CUTOFF, NDCG_CUTOFF, RECALL_CUTOFF
from utils.embedding_store import RelevanceJudgments, RetrievalRun, TaskTag
from utils.exceptions import MetricsError, StoreWriteError

logger = logging.getLogger('radapt.retrieval')

PerQuery = Dict[str, float]


def _scored_queries(run: RetrievalRun, qrels: RelevanceJudgments) -> List[str]:
    """Run queries that have at least one positive; the rest are reported"""
    scored, excluded = [], []
    for qid in run.query_ids():
        (scored if qrels.positives(qid) else excluded).append(qid)
    if excluded:
        logger.warning(f"{len(excluded)} queries without positive judgments excluded from metrics")
    return scored


def _check_cutoff(k: int):
    if int(k) != k or k < 1:
        raise MetricsError(f"cutoff must be a positive integer, got {k}")


def ndcg_at_k(run: RetrievalRun, qrels: RelevanceJudgments, k: int = NDCG_CUTOFF) -> PerQuery:
    """Exponential-gain nDCG; unjudged documents have grade 0"""
    _check_cutoff(k)
    result = {}
    for qid in _scored_queries(run, qrels):
        grades = qrels.grades(qid)
        dcg = sum((2.0 ** grades.get(doc_id, 0) - 1.0) / math.log2(rank + 1)
                  for rank, doc_id in enumerate(run.ranked_ids(qid)[:k], start=1))
        ideal = sorted(grades.values(), reverse=True)[:k]
        idcg = sum((2.0 ** g - 1.0) / math.log2(rank + 1) for rank, g in enumerate(ideal, start=1))
        result[qid] = dcg / idcg
    return result


def _trec_measure(run: RetrievalRun, qrels: RelevanceJudgments, measure: str, k: int) -> PerQuery:
    """One trec_eval measure over the run cut at depth k, via pytrec_eval"""
    _check_cutoff(k)
    scored = _scored_queries(run, qrels)
    if not scored:
        return {}
    # rank-derived scores keep the run's own order, tie rule included
    ranked = {qid: {doc_id: float(k - rank) for rank, doc_id in enumerate(run.ranked_ids(qid)[:k])}
              for qid in scored if run.ranked_ids(qid)}
    evaluator = pytrec_eval.RelevanceEvaluator({qid: dict(qrels.grades(qid)) for qid in scored}, {measure})
    values = evaluator.evaluate(ranked)
    key = measure.replace('.', '_')
    return {qid: float(values.get(qid, {}).get(key, 0.0)) for qid in scored}


def recall_at_k(run: RetrievalRun, qrels: RelevanceJudgments, k: int = RECALL_CUTOFF) -> PerQuery:
    return _trec_measure(run, qrels, f'recall.{int(k)}', k)


def map_at_k(run: RetrievalRun, qrels: RelevanceJudgments, k: int = MAP_CUTOFF) -> PerQuery:
    """Average precision at k, normalized by all relevant documents"""
    return _trec_measure(run, qrels, f'map_cut.{int(k)}', k)


def mrr_at_k(run: RetrievalRun, qrels: RelevanceJudgments, k: int = MRR_CUTOFF) -> PerQuery:
    """Reciprocal rank of the first relevant document within k"""
    return _trec_measure(run, qrels, 'recip_rank', k)


METRICS: Dict[str, Callable[[RetrievalRun, RelevanceJudgments], PerQuery]] = {
    'ndcg_at_10': lambda run, qrels: ndcg_at_k(run, qrels, NDCG_CUTOFF),
    'recall_at_100': lambda run, qrels: recall_at_k(run, qrels, RECALL_CUTOFF),
    'map_at_100': lambda run, qrels: map_at_k(run, qrels, MAP_CUTOFF),
    'mrr_at_100': lambda run, qrels: mrr_at_k(run, qrels, MRR_CUTOFF),
}


def evaluate_run(run: RetrievalRun, qrels: RelevanceJudgments,
                 metrics: Sequence[str] = METRIC_NAMES) -> Dict[str, Dict[str, float]]:
    """Per-query {metric: value} for every scored query"""
    unknown = [name for name in metrics if name not in METRICS]
    if unknown:
        raise MetricsError(f"unknown metrics {unknown}; expected some of {sorted(METRICS)}")
    values = {name: METRICS[name](run, qrels) for name in metrics}
    return {qid: {name: values[name][qid] for name in metrics} for qid in sorted(values[metrics[0]])}


@dataclass
class MetricsReport:
    per_query: Dict[str, Dict[str, float]]
    per_task: Dict[str, Dict[str, float]]
    per_group: Dict[str, Dict[str, float]]
    overall: Dict[str, float]
    counts: Dict[str, Dict[str, int]]
    excluded: List[str] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)
    averaging: str = 'query -> task -> group -> overall (unweighted means)'

    def to_dict(self) -> Dict:
        return {
            'per_query': self.per_query,
            'per_task': self.per_task,
            'per_group': self.per_group,
            'overall': self.overall,
            'counts': self.counts,
            'excluded': self.excluded,
            'missing': self.missing,
            'averaging': self.averaging,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def write(self, path: Union[str, Path]) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_json(), encoding='utf-8')
        except OSError as e:
            raise StoreWriteError(f"cannot write metrics report {path}: {e}") from e

    @classmethod
    def read(cls, path: Union[str, Path]) -> 'MetricsReport':
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
            return cls(**data)
        except (json.JSONDecodeError, TypeError) as e:
            raise MetricsError(f"{path}: not a metrics report ({e})") from None


def _mean_rows(rows: Sequence[Mapping[str, float]], names: Sequence[str]) -> Dict[str, float]:
    return {name: float(np.mean([row[name] for row in rows])) for name in names}


def aggregate(per_query: Mapping[str, Mapping[str, float]], tags: TaskTag,
              qrels: Optional[RelevanceJudgments] = None, excluded: Sequence[str] = ()) -> MetricsReport:
    """Macro-average per task, then per group, then over groups"""
    if not per_query:
        raise MetricsError("no scored queries to aggregate")
    untagged = sorted(qid for qid in per_query if qid not in tags)
    if untagged:
        raise MetricsError(f"untagged queries: {untagged[:5]}")
    names = sorted(next(iter(per_query.values())))

    by_task = tags.by_task(sorted(per_query))
    per_task = {task: _mean_rows([per_query[q] for q in qids], names) for task, qids in by_task.items()}

    group_of_task = {task: tags.group(qids[0]) for task, qids in by_task.items()}
    tasks_by_group: Dict[str, List[str]] = {}
    for task in sorted(per_task):
        tasks_by_group.setdefault(group_of_task[task], []).append(task)
    per_group = {group: _mean_rows([per_task[t] for t in tasks], names)
                 for group, tasks in tasks_by_group.items()}
    overall = _mean_rows(list(per_group.values()), names)

    counts = {}
    for group, tasks in tasks_by_group.items():
        qids = [q for t in tasks for q in by_task[t]]
        judged = sum(len(qrels.grades(q)) for q in qids) if qrels is not None else 0
        counts[group] = {'tasks': len(tasks), 'queries': len(qids), 'judged_docs': judged}

    return MetricsReport(
        per_query={q: dict(v) for q, v in sorted(per_query.items())},
        per_task=per_task, per_group=per_group, overall=overall,
        counts=counts, excluded=sorted(excluded),
    )


def evaluate(run: RetrievalRun, qrels: RelevanceJudgments, tags: TaskTag,
             metrics: Sequence[str] = METRIC_NAMES) -> MetricsReport:
    """evaluate_run + aggregate, recording queries excluded for lack of positives

    Judged queries absent from the run are not scored; they are listed in report.missing
    """
    excluded = [qid for qid in run.query_ids() if not qrels.positives(qid)]
    ranked = set(run.query_ids())
    missing = [qid for qid in qrels.query_ids() if qrels.positives(qid) and qid not in ranked]
    if missing:
        logger.warning(f"{len(missing)} judged queries are absent from the run and were not scored")
    report = aggregate(evaluate_run(run, qrels, metrics), tags, qrels, excluded)
    report.missing = missing
    logger.info(f"Evaluation | {json.dumps(report.overall, sort_keys=True)}")
    return report


def render_table(reports: Mapping[str, MetricsReport], metric: str = 'ndcg_at_10') -> str:
    """Fixed-width table, one row per method, columns Avg + groups, values in percent"""
    if not reports:
        raise MetricsError("no reports to render")
    groups = sorted({g for report in reports.values() for g in report.per_group})
    method_width = max(len('Method'), *(len(name) for name in reports))
    widths = [max(6, len(g)) for g in ['Avg'] + groups]

    def row(cells: Sequence[str]) -> str:
        head, *rest = cells
        return ' '.join([head.ljust(method_width)] + [c.rjust(w) for c, w in zip(rest, widths)])

    lines = [f"{metric} (%)", row(['Method', 'Avg'] + groups)]
    lines.append('-' * len(lines[-1]))
    for method, report in reports.items():
        if metric not in report.overall:
            raise MetricsError(f"report {method!r} has no {metric}")
        cells = [f"{100 * report.overall[metric]:.2f}"]
        cells += [f"{100 * report.per_group[g][metric]:.2f}" if g in report.per_group else '-' for g in groups]
        lines.append(row([method] + cells))
    return '\n'.join(lines) + '\n'
