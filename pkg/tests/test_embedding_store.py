"""Tests for embedding, qrels, run and tag storage"""
import struct

import numpy as np
import pytest

from utils.embedding_store import (
    EmbeddingSet, RetrievalRun, TaskTag, load_embeddings, load_qrels, load_run,
    load_tags, save_embeddings, save_qrels, save_tags, write_run
)
from utils.exceptions import (
    EmbeddingFormatError, QrelsFormatError, RunFormatError, StoreWriteError, TagFormatError
)


class TestEmbeddingSet:

    def test_lookup_returns_written_row(self, make_set):
        embeddings = make_set(['a', 'b'], [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(embeddings.vector('b'), [3.0, 4.0])
        assert 'a' in embeddings and 'z' not in embeddings
        assert len(embeddings) == 2

    def test_duplicate_ids_rejected(self, make_set):
        with pytest.raises(EmbeddingFormatError, match='row 2'):
            make_set(['a', 'a'], [[1.0], [2.0]])

    def test_non_finite_rejected(self, make_set):
        with pytest.raises(EmbeddingFormatError, match='row 2'):
            make_set(['a', 'b'], [[1.0, 0.0], [np.nan, 0.0]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(EmbeddingFormatError):
            EmbeddingSet('t', 3, ('a',), np.zeros((1, 2)))

    def test_vectors_are_read_only(self, make_set):
        embeddings = make_set(['a'], [[1.0, 2.0]])
        with pytest.raises(ValueError):
            embeddings.vectors[0, 0] = 5.0

    def test_subset_keeps_requested_order(self, make_set):
        embeddings = make_set(['a', 'b', 'c'], [[1.0], [2.0], [3.0]])
        subset = embeddings.subset(['c', 'a'])
        assert subset.ids == ('c', 'a')
        np.testing.assert_array_equal(subset.vectors[:, 0], [3.0, 1.0])

    def test_unknown_id_raises_key_error(self, make_set):
        with pytest.raises(KeyError):
            make_set(['a'], [[1.0]]).vector('missing')


class TestEmbeddingFiles:

    @pytest.mark.parametrize('fmt', ['packed', 'lines'])
    def test_round_trip_of_float32_values(self, tmp_path, make_set, fmt):
        original = make_set(['q-1', 'q-2', 'ünï'], [[0.5, -1.25, 3.0], [0.0, 2.0, -0.125], [1.0, 1.0, 1.0]])
        path = tmp_path / f'vectors.{fmt}'
        save_embeddings(original, path, fmt)
        loaded = load_embeddings(path, fmt)
        assert loaded.ids == original.ids
        assert loaded.dim == 3
        np.testing.assert_array_equal(loaded.vectors, original.vectors)

    def test_packed_layout(self, tmp_path, make_set):
        path = tmp_path / 'one.erae'
        save_embeddings(make_set(['ab'], [[1.0, 2.0]]), path)
        blob = path.read_bytes()
        assert blob[:4] == b'ERAE'
        assert struct.unpack_from('<BIQ', blob, 4) == (1, 2, 1)
        assert struct.unpack_from('<H', blob, 17) == (2,)
        assert blob[19:21] == b'ab'
        assert struct.unpack_from('<2f', blob, 21) == (1.0, 2.0)
        assert len(blob) == 29

    def test_empty_packed_set_round_trips(self, tmp_path):
        empty = EmbeddingSet('empty', 4, (), np.empty((0, 4)))
        save_embeddings(empty, tmp_path / 'empty.erae')
        loaded = load_embeddings(tmp_path / 'empty.erae')
        assert len(loaded) == 0 and loaded.dim == 4

    def test_empty_lines_file_needs_dim(self, tmp_path):
        path = tmp_path / 'empty.jsonl'
        path.write_text('')
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(path, 'lines')
        assert load_embeddings(path, 'lines', dim=5).dim == 5

    def test_lines_width_mismatch_names_row(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"id": "a", "vector": [1, 2]}\n{"id": "b", "vector": [1, 2, 3]}\n')
        with pytest.raises(EmbeddingFormatError, match='row 2'):
            load_embeddings(path, 'lines')

    def test_lines_invalid_json_names_row(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"id": "a", "vector": [1]}\nnot json\n')
        with pytest.raises(EmbeddingFormatError, match='row 2'):
            load_embeddings(path, 'lines')

    def test_lines_invalid_utf8_names_row(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_bytes(b'{"id": "a", "vector": [1]}\n{"id": "\xff", "vector": [1]}\n')
        with pytest.raises(EmbeddingFormatError, match='row 2.*UTF-8'):
            load_embeddings(path, 'lines')

    def test_lines_huge_integer_names_row(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"id": "a", "vector": [%s]}\n' % ('9' * 400))
        with pytest.raises(EmbeddingFormatError, match='row 1'):
            load_embeddings(path, 'lines')

    def test_lines_overflowing_float_is_non_finite(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"id": "a", "vector": [1e400]}\n')
        with pytest.raises(EmbeddingFormatError, match='non-finite'):
            load_embeddings(path, 'lines')

    def test_bad_magic(self, tmp_path, make_set):
        path = tmp_path / 'x.erae'
        save_embeddings(make_set(['a'], [[1.0]]), path)
        path.write_bytes(b'NOPE' + path.read_bytes()[4:])
        with pytest.raises(EmbeddingFormatError, match='malformed header'):
            load_embeddings(path)

    def test_truncated_packed_file(self, tmp_path, make_set):
        path = tmp_path / 'x.erae'
        save_embeddings(make_set(['a', 'b'], [[1.0, 2.0], [3.0, 4.0]]), path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(path)

    def test_trailing_bytes_rejected(self, tmp_path, make_set):
        path = tmp_path / 'x.erae'
        save_embeddings(make_set(['a'], [[1.0]]), path)
        path.write_bytes(path.read_bytes() + b'\x00')
        with pytest.raises(EmbeddingFormatError, match='trailing'):
            load_embeddings(path)

    def test_value_outside_float32_rejected_on_save(self, tmp_path, make_set):
        with pytest.raises(EmbeddingFormatError, match='row 1'):
            save_embeddings(make_set(['a'], [[1e300]]), tmp_path / 'x.erae')

    def test_unknown_format(self, tmp_path, make_set):
        with pytest.raises(EmbeddingFormatError):
            save_embeddings(make_set(['a'], [[1.0]]), tmp_path / 'x', 'csv')

    def test_unwritable_destination(self, tmp_path, make_set):
        blocker = tmp_path / 'file'
        blocker.write_text('')
        with pytest.raises(StoreWriteError):
            save_embeddings(make_set(['a'], [[1.0]]), blocker / 'child.erae')


class TestQrels:

    def test_parse_and_positives(self, tmp_path):
        path = tmp_path / 'qrels.txt'
        path.write_text('q1 0 d2 1\nq1 0 d1 2\nq1 0 d3 0\nq2 0 d9 0\n')
        qrels = load_qrels(path)
        assert qrels.positives('q1') == ['d1', 'd2']
        assert qrels.grades('q1')['d3'] == 0
        assert qrels.queries_without_positives() == ['q2']

    def test_duplicate_pair_names_line(self, tmp_path):
        path = tmp_path / 'qrels.txt'
        path.write_text('q1 0 d1 1\nq1 0 d1 2\n')
        with pytest.raises(QrelsFormatError, match='line 2'):
            load_qrels(path)

    @pytest.mark.parametrize('line', ['q1 0 d1 x', 'q1 0 d1 -1', 'q1 0 d1', 'q1 0 d1 1 extra'])
    def test_malformed_lines(self, tmp_path, line):
        path = tmp_path / 'qrels.txt'
        path.write_text(line + '\n')
        with pytest.raises(QrelsFormatError, match='line 1'):
            load_qrels(path)

    def test_invalid_utf8_names_line(self, tmp_path):
        path = tmp_path / 'qrels.txt'
        path.write_bytes(b'q1 0 d1 1\nq\xff 0 d2 1\n')
        with pytest.raises(QrelsFormatError, match='line 2.*UTF-8'):
            load_qrels(path)

    def test_round_trip(self, tmp_path, simple_qrels):
        save_qrels(simple_qrels, tmp_path / 'q.txt')
        assert load_qrels(tmp_path / 'q.txt').entries == simple_qrels.entries


class TestRuns:

    def test_from_scores_applies_tie_rule(self):
        run = RetrievalRun.from_scores({'q': {'b': 0.5, 'a': 0.5, 'c': 0.9}})
        assert run.ranked_ids('q') == ['c', 'a', 'b']

    def test_out_of_order_rejected(self):
        with pytest.raises(RunFormatError):
            RetrievalRun({'q': (('a', 0.1), ('b', 0.2))})

    def test_tie_in_wrong_id_order_rejected(self):
        with pytest.raises(RunFormatError):
            RetrievalRun({'q': (('b', 0.5), ('a', 0.5))})

    def test_duplicate_doc_rejected(self):
        with pytest.raises(RunFormatError):
            RetrievalRun({'q': (('a', 0.5), ('a', 0.4))})

    def test_write_and_load_preserve_scores_exactly(self, tmp_path):
        scores = {'q1': {'d1': 0.1 + 0.2, 'd2': 1 / 3}, 'q2': {'d3': -0.7}}
        run = RetrievalRun.from_scores(scores)
        write_run(run, tmp_path / 'run.trec', 'test-run')
        assert load_run(tmp_path / 'run.trec').rankings == run.rankings

    def test_written_line_layout(self, tmp_path):
        write_run(RetrievalRun({'q1': (('d1', 0.5),)}), tmp_path / 'run.trec', 'tag')
        assert (tmp_path / 'run.trec').read_text() == 'q1 Q0 d1 1 0.5 tag\n'

    def test_tag_with_space_rejected(self, tmp_path):
        with pytest.raises(RunFormatError):
            write_run(RetrievalRun({}), tmp_path / 'run.trec', 'two words')

    def test_load_rejects_short_line(self, tmp_path):
        (tmp_path / 'run.trec').write_text('q1 Q0 d1 1 0.5\n')
        with pytest.raises(RunFormatError, match='line 1'):
            load_run(tmp_path / 'run.trec')

    def test_load_rejects_invalid_utf8(self, tmp_path):
        (tmp_path / 'run.trec').write_bytes(b'q1 Q0 d\xe9 1 0.5 tag\n')
        with pytest.raises(RunFormatError, match='line 1.*UTF-8'):
            load_run(tmp_path / 'run.trec')


class TestTags:

    def test_round_trip(self, tmp_path, two_task_tags):
        save_tags(two_task_tags, tmp_path / 'tags.tsv')
        loaded = load_tags(tmp_path / 'tags.tsv')
        assert loaded.assignment == two_task_tags.assignment
        assert loaded.tasks() == ['t0', 't1']
        assert loaded.group_of_task() == {'t0': 'g0', 't1': 'g1'}

    def test_duplicate_id_rejected(self, tmp_path):
        (tmp_path / 'tags.tsv').write_text('a\tt\tg\na\tt\tg\n')
        with pytest.raises(TagFormatError, match='line 2'):
            load_tags(tmp_path / 'tags.tsv')

    def test_wrong_field_count(self, tmp_path):
        (tmp_path / 'tags.tsv').write_text('a\tt\n')
        with pytest.raises(TagFormatError):
            load_tags(tmp_path / 'tags.tsv')

    def test_invalid_utf8_names_line(self, tmp_path):
        (tmp_path / 'tags.tsv').write_bytes(b'a\tt\tg\n\xc3\tt\tg\n')
        with pytest.raises(TagFormatError, match='line 2'):
            load_tags(tmp_path / 'tags.tsv')

    def test_windows_line_endings(self, tmp_path):
        (tmp_path / 'tags.tsv').write_bytes(b'a\tt0\tg0\r\nb\tt1\tg1\r\n')
        assert load_tags(tmp_path / 'tags.tsv').assignment == {'a': ('t0', 'g0'), 'b': ('t1', 'g1')}

    def test_by_task(self, two_task_tags):
        assert two_task_tags.by_task(['q3', 'q1', 'q2']) == {'t1': ['q3'], 't0': ['q1', 'q2']}

    def test_relevance_restrict(self, simple_qrels):
        assert simple_qrels.restrict(['q2']).query_ids() == ['q2']

    def test_task_tag_accessors(self):
        tags = TaskTag({'x': ('task', 'group')})
        assert tags.task('x') == 'task' and tags.group('x') == 'group'
