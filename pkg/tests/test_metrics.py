"""Tests for per-query metrics, macro aggregation and the comparison table"""
import math

import pytest
import pytrec_eval

from utils.embedding_store import RelevanceJudgments, RetrievalRun, TaskTag
from utils.exceptions import MetricsError
from utils.metrics import (
    MetricsReport, aggregate, evaluate, evaluate_run, map_at_k, mrr_at_k, ndcg_at_k, recall_at_k,
    render_table
)


def ranked(qid, doc_ids):
    """Run with strictly decreasing scores in the given order"""
    return RetrievalRun({qid: tuple((d, 1.0 - i / 100) for i, d in enumerate(doc_ids))})


def reference_metrics(order, grades, k):
    """Literal textbook definitions used as an oracle"""
    relevant = [d for d, g in grades.items() if g > 0]
    top = order[:k]
    dcg = 0.0
    for i in range(len(top)):
        dcg += (2 ** grades.get(top[i], 0) - 1) / math.log2(i + 2)
    ideal_grades = sorted(grades.values(), reverse=True)[:k]
    idcg = 0.0
    for i in range(len(ideal_grades)):
        idcg += (2 ** ideal_grades[i] - 1) / math.log2(i + 2)
    recall = len([d for d in top if d in relevant]) / len(relevant)
    precisions = []
    for i in range(len(top)):
        if top[i] in relevant:
            precisions.append(len([d for d in top[:i + 1] if d in relevant]) / (i + 1))
    average_precision = sum(precisions) / len(relevant)
    reciprocal = 0.0
    for i in range(len(top)):
        if top[i] in relevant:
            reciprocal = 1 / (i + 1)
            break
    return dcg / idcg, recall, average_precision, reciprocal


class TestHandValues:

    def test_single_relevant_at_rank_two(self):
        run = ranked('q', ['d1', 'd2', 'd3'])
        qrels = RelevanceJudgments({'q': {'d2': 1}})
        assert ndcg_at_k(run, qrels, 10)['q'] == pytest.approx(0.63093, abs=1e-5)
        assert mrr_at_k(run, qrels, 10)['q'] == 0.5

    def test_average_precision(self):
        run = ranked('q', ['d1', 'd2', 'd3', 'd4'])
        qrels = RelevanceJudgments({'q': {'d1': 1, 'd3': 1}})
        assert map_at_k(run, qrels, 10)['q'] == pytest.approx(0.8333, abs=1e-4)

    def test_map_counts_relevant_missing_from_run(self):
        run = ranked('q', ['d1'])
        qrels = RelevanceJudgments({'q': {'d1': 1, 'd9': 1}})
        assert map_at_k(run, qrels, 10)['q'] == pytest.approx(0.5)
        assert recall_at_k(run, qrels, 10)['q'] == pytest.approx(0.5)

    def test_graded_gain(self):
        run = ranked('q', ['d1', 'd2'])
        qrels = RelevanceJudgments({'q': {'d1': 1, 'd2': 2}})
        expected = (1 + 3 / math.log2(3)) / (3 + 1 / math.log2(3))
        assert ndcg_at_k(run, qrels, 10)['q'] == pytest.approx(expected)

    def test_cutoff_applies(self):
        run = ranked('q', ['d1', 'd2', 'd3'])
        qrels = RelevanceJudgments({'q': {'d3': 1}})
        assert mrr_at_k(run, qrels, 2)['q'] == 0.0
        assert recall_at_k(run, qrels, 2)['q'] == 0.0
        assert ndcg_at_k(run, qrels, 2)['q'] == 0.0

    def test_queries_without_positives_are_excluded(self):
        run = RetrievalRun({'q': (('d1', 1.0),), 'r': (('d1', 1.0),)})
        qrels = RelevanceJudgments({'q': {'d1': 1}, 'r': {'d1': 0}})
        assert set(ndcg_at_k(run, qrels)) == {'q'}

    def test_empty_ranking_scores_zero(self):
        qrels = RelevanceJudgments({'q': {'d1': 1}})
        assert ndcg_at_k(RetrievalRun({'q': ()}), qrels)['q'] == 0.0

    def test_bad_cutoff(self):
        with pytest.raises(MetricsError):
            ndcg_at_k(ranked('q', ['d1']), RelevanceJudgments({'q': {'d1': 1}}), 0)


class TestAgainstReference:

    def test_random_micro_instances(self, rng):
        for trial in range(1000):
            n_docs = int(rng.integers(1, 9))
            docs = [f'd{i}' for i in range(n_docs)]
            order = [docs[i] for i in rng.permutation(n_docs)][:int(rng.integers(0, n_docs + 1))]
            grades = {d: int(rng.integers(0, 3)) for d in docs if rng.random() < 0.7}
            if not any(g > 0 for g in grades.values()):
                grades[docs[0]] = 1
            k = int(rng.integers(1, 6))
            run, qrels = ranked('q', order), RelevanceJudgments({'q': grades})

            expected = reference_metrics(order, grades, k)
            actual = (ndcg_at_k(run, qrels, k)['q'], recall_at_k(run, qrels, k)['q'],
                      map_at_k(run, qrels, k)['q'], mrr_at_k(run, qrels, k)['q'])
            assert actual == pytest.approx(expected, abs=1e-12), f"trial {trial}"

    def test_binary_ndcg_matches_trec_eval(self, rng):
        for trial in range(300):
            docs = [f'd{i}' for i in range(int(rng.integers(1, 9)))]
            order = [docs[i] for i in rng.permutation(len(docs))]
            grades = {d: int(rng.integers(0, 2)) for d in docs}
            grades[docs[-1]] = 1
            k = int(rng.integers(1, 6))
            run = ranked('q', order)

            evaluator = pytrec_eval.RelevanceEvaluator({'q': grades}, {f'ndcg_cut.{k}'})
            expected = evaluator.evaluate({'q': dict(run.rankings['q'])})['q'][f'ndcg_cut_{k}']
            actual = ndcg_at_k(run, RelevanceJudgments({'q': grades}), k)['q']
            assert actual == pytest.approx(expected, abs=1e-9), f"trial {trial}"

    def test_promoting_a_relevant_document_never_hurts(self, rng):
        for _ in range(200):
            docs = [f'd{i}' for i in range(6)]
            order = [docs[i] for i in rng.permutation(6)]
            grades = {d: int(rng.integers(0, 3)) for d in docs}
            grades['d0'] = 2
            position = order.index('d0')
            if position == 0:
                continue
            promoted = list(order)
            promoted[position - 1], promoted[position] = promoted[position], promoted[position - 1]
            if grades[promoted[position]] >= grades['d0']:
                continue
            qrels = RelevanceJudgments({'q': grades})
            for metric in (ndcg_at_k, recall_at_k, map_at_k, mrr_at_k):
                before = metric(ranked('q', order), qrels, 5)['q']
                after = metric(ranked('q', promoted), qrels, 5)['q']
                assert after >= before - 1e-12


class TestAggregate:

    @pytest.fixture
    def tags(self):
        return TaskTag({
            'a1': ('t0', 'g0'), 'a2': ('t0', 'g0'),
            'b1': ('t1', 'g1'),
            'c1': ('t2', 'g1'), 'c2': ('t2', 'g1'), 'c3': ('t2', 'g1'),
        })

    def test_macro_average_task_then_group(self, tags):
        per_query = {
            'a1': {'m': 0.2}, 'a2': {'m': 0.4},
            'b1': {'m': 1.0},
            'c1': {'m': 0.0}, 'c2': {'m': 0.0}, 'c3': {'m': 0.0},
        }
        report = aggregate(per_query, tags)
        assert report.per_task['t0']['m'] == pytest.approx(0.3)
        assert report.per_group['g1']['m'] == pytest.approx(0.5)
        assert report.overall['m'] == pytest.approx(0.4)
        assert report.counts['g1'] == {'tasks': 2, 'queries': 4, 'judged_docs': 0}

    def test_untagged_query(self, tags):
        with pytest.raises(MetricsError):
            aggregate({'zz': {'m': 1.0}}, tags)

    def test_nothing_to_aggregate(self, tags):
        with pytest.raises(MetricsError):
            aggregate({}, tags)

    def test_evaluate_records_exclusions(self, two_task_tags):
        run = RetrievalRun({'q1': (('d1', 0.9),), 'q3': (('d5', 0.9),), 'q4': (('d7', 0.2),)})
        qrels = RelevanceJudgments({'q1': {'d1': 1}, 'q3': {'d6': 1}, 'q4': {'d7': 0}})
        report = evaluate(run, qrels, two_task_tags)
        assert report.excluded == ['q4']
        assert report.per_group == {
            'g0': {'map_at_100': 1.0, 'mrr_at_100': 1.0, 'ndcg_at_10': 1.0, 'recall_at_100': 1.0},
            'g1': {'map_at_100': 0.0, 'mrr_at_100': 0.0, 'ndcg_at_10': 0.0, 'recall_at_100': 0.0},
        }
        assert report.overall['ndcg_at_10'] == pytest.approx(0.5)

    def test_evaluate_lists_judged_queries_missing_from_run(self, two_task_tags):
        run = RetrievalRun({'q1': (('d1', 0.9),)})
        qrels = RelevanceJudgments({'q1': {'d1': 1}, 'q2': {'d3': 1}, 'q4': {'d7': 0}})
        report = evaluate(run, qrels, two_task_tags)
        assert report.missing == ['q2']
        assert sorted(report.per_query) == ['q1']
        assert report.to_dict()['missing'] == ['q2']

    def test_unknown_metric(self):
        with pytest.raises(MetricsError):
            evaluate_run(ranked('q', ['d1']), RelevanceJudgments({'q': {'d1': 1}}), ['p_at_5'])

    def test_report_round_trip(self, tmp_path, tags):
        report = aggregate({'a1': {'m': 0.25}}, tags)
        report.write(tmp_path / 'metrics.json')
        assert MetricsReport.read(tmp_path / 'metrics.json') == report
        assert (tmp_path / 'metrics.json').read_text() == report.to_json()

    def test_read_rejects_other_json(self, tmp_path):
        (tmp_path / 'x.json').write_text('{"hello": 1}')
        with pytest.raises(MetricsError):
            MetricsReport.read(tmp_path / 'x.json')


class TestRenderTable:

    def test_rows_and_missing_groups(self):
        full = MetricsReport({}, {}, {'g0': {'ndcg_at_10': 0.3}, 'g1': {'ndcg_at_10': 0.5}},
                             {'ndcg_at_10': 0.4}, {})
        partial = MetricsReport({}, {}, {'g0': {'ndcg_at_10': 0.123456}}, {'ndcg_at_10': 0.123456}, {})
        lines = render_table({'zero-shot': full, 'tuned': partial}).splitlines()
        assert lines[0] == 'ndcg_at_10 (%)'
        assert lines[1].split() == ['Method', 'Avg', 'g0', 'g1']
        assert set(lines[2]) == {'-'} and len(lines[2]) == len(lines[1])
        assert lines[3].split() == ['zero-shot', '40.00', '30.00', '50.00']
        assert lines[4].split() == ['tuned', '12.35', '12.35', '-']
        assert len({len(line) for line in lines[1:]}) == 1

    def test_missing_metric(self):
        report = MetricsReport({}, {}, {}, {'recall_at_100': 0.1}, {})
        with pytest.raises(MetricsError):
            render_table({'m': report}, 'ndcg_at_10')

    def test_no_reports(self):
        with pytest.raises(MetricsError):
            render_table({})
