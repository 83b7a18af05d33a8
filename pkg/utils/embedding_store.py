"""
Embedding Store for the retrieval adapter toolkit
Loads, validates, and persists embedding sets, relevance judgments, runs and task tags
"""
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import EMBEDDING_MAGIC, FORMAT_VERSION
from utils.exceptions import (
    EmbeddingFormatError, QrelsFormatError, RunFormatError, StoreWriteError, TagFormatError
)

logger = logging.getLogger('radapt.store')

PathLike = Union[str, Path]
FORMATS = ('packed', 'lines')

_HEADER = struct.Struct('<4sBIQ')
_ID_LENGTH = struct.Struct('<H')


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Id-indexed matrix of vectors produced by one embedder"""
    embedder_tag: str
    dim: int
    ids: Tuple[str, ...]
    vectors: np.ndarray
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        if not isinstance(self.dim, (int, np.integer)) or self.dim <= 0:
            raise EmbeddingFormatError(f"dim must be a positive integer, got {self.dim!r}")

        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.size == 0 and not ids:
            vectors = vectors.reshape(len(ids), int(self.dim))
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise EmbeddingFormatError(
                f"vectors must have shape (n, {self.dim}), got {vectors.shape}")
        if vectors.shape[0] != len(ids):
            raise EmbeddingFormatError(
                f"{len(ids)} ids but {vectors.shape[0]} vectors")

        index: Dict[str, int] = {}
        for row, identifier in enumerate(ids):
            if identifier in index:
                raise EmbeddingFormatError(f"duplicate id {identifier!r}", row=row + 1)
            index[identifier] = row

        bad_rows = np.flatnonzero(~np.isfinite(vectors).all(axis=1))
        if bad_rows.size:
            raise EmbeddingFormatError("non-finite value", row=int(bad_rows[0]) + 1)

        vectors.setflags(write=False)
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'ids', ids)
        object.__setattr__(self, 'vectors', vectors)
        object.__setattr__(self, '_index', index)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, identifier: str) -> bool:
        return identifier in self._index

    def index_of(self, identifier: str) -> int:
        try:
            return self._index[identifier]
        except KeyError:
            raise KeyError(f"id {identifier!r} not in embedding set {self.embedder_tag!r}") from None

    def vector(self, identifier: str) -> np.ndarray:
        """Row written for this id"""
        return self.vectors[self.index_of(identifier)]

    def rows(self, identifiers: Iterable[str]) -> np.ndarray:
        return self.vectors[[self.index_of(i) for i in identifiers]].reshape(-1, self.dim)

    def subset(self, identifiers: Sequence[str]) -> 'EmbeddingSet':
        """New set holding only the given ids, in the given order"""
        identifiers = list(identifiers)
        return EmbeddingSet(self.embedder_tag, self.dim, tuple(identifiers), self.rows(identifiers))


@dataclass(frozen=True)
class RelevanceJudgments:
    """Per-query map from document id to integer grade"""
    entries: Mapping[str, Mapping[str, int]]

    def __post_init__(self):
        frozen = {}
        for qid, docs in self.entries.items():
            grades = {}
            for doc_id, grade in docs.items():
                if int(grade) != grade or grade < 0:
                    raise QrelsFormatError(f"grade for ({qid}, {doc_id}) must be a non-negative integer")
                grades[str(doc_id)] = int(grade)
            frozen[str(qid)] = grades
        object.__setattr__(self, 'entries', frozen)

    def __contains__(self, qid: str) -> bool:
        return qid in self.entries

    def query_ids(self) -> List[str]:
        return sorted(self.entries)

    def grades(self, qid: str) -> Mapping[str, int]:
        return self.entries.get(qid, {})

    def positives(self, qid: str) -> List[str]:
        """Documents with grade > 0, sorted by id"""
        return sorted(d for d, g in self.grades(qid).items() if g > 0)

    def queries_without_positives(self) -> List[str]:
        return [qid for qid in self.query_ids() if not self.positives(qid)]

    def restrict(self, query_ids: Iterable[str]) -> 'RelevanceJudgments':
        keep = set(query_ids)
        return RelevanceJudgments({q: g for q, g in self.entries.items() if q in keep})


@dataclass(frozen=True)
class RetrievalRun:
    """Per-query ranked (doc_id, score) lists, descending score, ties by ascending id"""
    rankings: Mapping[str, Tuple[Tuple[str, float], ...]]

    def __post_init__(self):
        frozen = {}
        for qid, ranked in self.rankings.items():
            ranked = tuple((str(d), float(s)) for d, s in ranked)
            seen = set()
            for position, (doc_id, score) in enumerate(ranked):
                if doc_id in seen:
                    raise RunFormatError(f"duplicate document {doc_id!r} for query {qid!r}")
                seen.add(doc_id)
                if position and not _ranks_before(ranked[position - 1], (doc_id, score)):
                    raise RunFormatError(
                        f"query {qid!r}: {doc_id!r} out of order at rank {position + 1}")
            frozen[str(qid)] = ranked
        object.__setattr__(self, 'rankings', frozen)

    @classmethod
    def from_scores(cls, scores: Mapping[str, Mapping[str, float]]) -> 'RetrievalRun':
        """Build a run from unordered score maps, applying the tie rule"""
        return cls({
            qid: tuple(sorted(docs.items(), key=lambda item: (-item[1], item[0])))
            for qid, docs in scores.items()
        })

    def __len__(self) -> int:
        return len(self.rankings)

    def query_ids(self) -> List[str]:
        return sorted(self.rankings)

    def ranked_ids(self, qid: str) -> List[str]:
        return [doc_id for doc_id, _ in self.rankings.get(qid, ())]

    def restrict(self, query_ids: Iterable[str]) -> 'RetrievalRun':
        keep = set(query_ids)
        return RetrievalRun({q: r for q, r in self.rankings.items() if q in keep})


@dataclass(frozen=True)
class TaskTag:
    """Assignment of every id to exactly one (task, group)"""
    assignment: Mapping[str, Tuple[str, str]]

    def __post_init__(self):
        object.__setattr__(self, 'assignment', {
            str(i): (str(task), str(group)) for i, (task, group) in self.assignment.items()
        })

    def __contains__(self, identifier: str) -> bool:
        return identifier in self.assignment

    def task(self, identifier: str) -> str:
        return self.assignment[identifier][0]

    def group(self, identifier: str) -> str:
        return self.assignment[identifier][1]

    def tasks(self) -> List[str]:
        return sorted({task for task, _ in self.assignment.values()})

    def group_of_task(self) -> Dict[str, str]:
        return {task: group for task, group in self.assignment.values()}

    def by_task(self, identifiers: Iterable[str]) -> Dict[str, List[str]]:
        buckets: Dict[str, List[str]] = {}
        for identifier in identifiers:
            buckets.setdefault(self.task(identifier), []).append(identifier)
        return buckets


def _ranks_before(first: Tuple[str, float], second: Tuple[str, float]) -> bool:
    return first[1] > second[1] or (first[1] == second[1] and first[0] < second[0])


def _check_format(fmt: str):
    if fmt not in FORMATS:
        raise EmbeddingFormatError(f"unknown embedding format {fmt!r}; expected one of {FORMATS}")


def _open_for_write(path: PathLike, mode: str = 'w'):
    target = Path(path)
    try:
        if target.parent and not target.parent.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
        if 'b' in mode:
            return open(target, mode)
        return open(target, mode, encoding='utf-8', newline='\n')
    except OSError as e:
        raise StoreWriteError(f"cannot write {target}: {e}") from e


def _text_lines(path: PathLike, error: Callable[[str, int], Exception]) -> Iterator[Tuple[int, str]]:
    """(line number, decoded line) pairs; bytes that are not UTF-8 raise error(message, line)"""
    with open(path, 'rb') as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                text = raw.decode('utf-8')
            except UnicodeDecodeError as e:
                raise error(f"{path}: invalid UTF-8 at byte {e.start}", line_number) from None
            yield line_number, text.rstrip('\r\n')


def load_embeddings(path: PathLike, fmt: str = 'packed', embedder_tag: Optional[str] = None,
                    dim: Optional[int] = None) -> EmbeddingSet:
    """Load an embedding set; rows keep file order"""
    _check_format(fmt)
    path = Path(path)
    tag = embedder_tag or path.stem

    if fmt == 'packed':
        file_dim, ids, vectors = _read_packed(path.read_bytes())
    else:
        file_dim, ids, vectors = _read_lines(path, dim)

    embeddings = EmbeddingSet(tag, file_dim, tuple(ids), vectors)
    logger.info(f"Loaded {len(embeddings)} x {embeddings.dim} embeddings from {path} ({fmt})")
    return embeddings


def _read_packed(blob: bytes) -> Tuple[int, List[str], np.ndarray]:
    if len(blob) < _HEADER.size:
        raise EmbeddingFormatError("malformed header: file shorter than header")

    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(f"malformed header: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(f"malformed header: unsupported version {version}")
    if dim == 0:
        raise EmbeddingFormatError("malformed header: dim must be positive")

    vector_bytes = 4 * dim
    offset = _HEADER.size
    if count * (_ID_LENGTH.size + vector_bytes) > len(blob) - offset:
        raise EmbeddingFormatError(f"malformed header: {count} records cannot fit in {len(blob)} bytes")
    ids: List[str] = []
    vectors = np.empty((count, dim), dtype=np.float64)

    for row in range(count):
        if offset + _ID_LENGTH.size > len(blob):
            raise EmbeddingFormatError("truncated record", row=row + 1)
        (id_length,) = _ID_LENGTH.unpack_from(blob, offset)
        offset += _ID_LENGTH.size
        if offset + id_length + vector_bytes > len(blob):
            raise EmbeddingFormatError("truncated record", row=row + 1)
        try:
            ids.append(blob[offset:offset + id_length].decode('utf-8'))
        except UnicodeDecodeError:
            raise EmbeddingFormatError("id is not valid UTF-8", row=row + 1) from None
        offset += id_length
        vectors[row] = np.frombuffer(blob, dtype='<f4', count=dim, offset=offset)
        offset += vector_bytes

    if offset != len(blob):
        raise EmbeddingFormatError(f"{len(blob) - offset} trailing bytes after {count} records")

    bad_rows = np.flatnonzero(~np.isfinite(vectors).all(axis=1))
    if bad_rows.size:
        raise EmbeddingFormatError("non-finite value", row=int(bad_rows[0]) + 1)
    return dim, ids, vectors


def _read_lines(path: Path, dim: Optional[int]) -> Tuple[int, List[str], np.ndarray]:
    ids: List[str] = []
    rows: List[List[float]] = []
    row = 0

    with open(path, 'rb') as handle:
        for raw in handle:
            if not raw.strip():
                continue
            row += 1
            try:
                record = json.loads(raw.decode('utf-8'))
            except UnicodeDecodeError as e:
                raise EmbeddingFormatError(f"{path}: invalid UTF-8 at byte {e.start}", row=row) from None
            except json.JSONDecodeError as e:
                raise EmbeddingFormatError(f"invalid JSON: {e.msg}", row=row) from None
            except (ValueError, RecursionError) as e:
                raise EmbeddingFormatError(f"invalid JSON: {e}", row=row) from None
            if not isinstance(record, dict) or not isinstance(record.get('id'), str):
                raise EmbeddingFormatError("record needs a string 'id'", row=row)
            vector = record.get('vector')
            if not isinstance(vector, list) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector):
                raise EmbeddingFormatError("record needs a numeric 'vector' array", row=row)
            if dim is None:
                dim = len(vector)
                if dim == 0:
                    raise EmbeddingFormatError("empty vector", row=row)
            if len(vector) != dim:
                raise EmbeddingFormatError(f"expected {dim} entries, found {len(vector)}", row=row)
            try:
                values = [float(x) for x in vector]
            except OverflowError:
                raise EmbeddingFormatError("value too large for a float", row=row) from None
            if not all(math.isfinite(x) for x in values):
                raise EmbeddingFormatError("non-finite value", row=row)
            ids.append(record['id'])
            rows.append(values)

    if dim is None:
        raise EmbeddingFormatError("empty lines file carries no dimension; pass dim explicitly")
    return dim, ids, np.array(rows, dtype=np.float64).reshape(len(rows), dim)


def save_embeddings(embeddings: EmbeddingSet, path: PathLike, fmt: str = 'packed') -> None:
    """Persist an embedding set; vectors are stored as 32-bit floats"""
    _check_format(fmt)
    with np.errstate(over='ignore'):
        narrowed = embeddings.vectors.astype('<f4')
    bad_rows = np.flatnonzero(~np.isfinite(narrowed).all(axis=1))
    if bad_rows.size:
        raise EmbeddingFormatError("value not representable as 32-bit float", row=int(bad_rows[0]) + 1)

    if fmt == 'packed':
        chunks = [_HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, embeddings.dim, len(embeddings))]
        for identifier, vector in zip(embeddings.ids, narrowed):
            encoded = identifier.encode('utf-8')
            if len(encoded) > 0xFFFF:
                raise EmbeddingFormatError(f"id longer than 65535 bytes: {identifier[:32]}...")
            chunks.append(_ID_LENGTH.pack(len(encoded)))
            chunks.append(encoded)
            chunks.append(vector.tobytes())
        with _open_for_write(path, 'wb') as handle:
            handle.write(b''.join(chunks))
    else:
        with _open_for_write(path) as handle:
            for identifier, vector in zip(embeddings.ids, narrowed):
                record = {'id': identifier, 'vector': [float(x) for x in vector]}
                handle.write(json.dumps(record) + '\n')

    logger.info(f"Saved {len(embeddings)} x {embeddings.dim} embeddings to {path} ({fmt})")


def load_qrels(path: PathLike) -> RelevanceJudgments:
    """Parse TREC qrels lines `qid 0 docid grade`"""
    entries: Dict[str, Dict[str, int]] = {}
    for line_number, raw in _text_lines(path, QrelsFormatError):
        if not raw.strip():
            continue
        fields = raw.split()
        if len(fields) != 4:
            raise QrelsFormatError(f"expected 4 fields, found {len(fields)}", line=line_number)
        qid, _, doc_id, grade_text = fields
        try:
            grade = int(grade_text)
        except ValueError:
            raise QrelsFormatError(f"grade {grade_text!r} is not an integer", line=line_number) from None
        if grade < 0:
            raise QrelsFormatError(f"negative grade {grade}", line=line_number)
        docs = entries.setdefault(qid, {})
        if doc_id in docs:
            raise QrelsFormatError(f"duplicate pair ({qid}, {doc_id})", line=line_number)
        docs[doc_id] = grade

    qrels = RelevanceJudgments(entries)
    missing = qrels.queries_without_positives()
    if missing:
        logger.warning(f"{len(missing)} queries in {path} have no positive judgment")
    return qrels


def save_qrels(qrels: RelevanceJudgments, path: PathLike) -> None:
    with _open_for_write(path) as handle:
        for qid in qrels.query_ids():
            for doc_id, grade in sorted(qrels.grades(qid).items()):
                handle.write(f"{qid} 0 {doc_id} {grade}\n")


def write_run(run: RetrievalRun, path: PathLike, tag: str) -> None:
    """Write TREC run lines `qid Q0 docid rank score tag`"""
    if not tag or any(ch.isspace() for ch in tag):
        raise RunFormatError(f"run tag must be a non-empty token, got {tag!r}")
    with _open_for_write(path) as handle:
        for qid in run.query_ids():
            for rank, (doc_id, score) in enumerate(run.rankings[qid], start=1):
                handle.write(f"{qid} Q0 {doc_id} {rank} {score!r} {tag}\n")


def load_run(path: PathLike) -> RetrievalRun:
    """Read a TREC run; stored rank order is kept and re-validated"""
    rows: Dict[str, List[Tuple[int, str, float]]] = {}
    for line_number, raw in _text_lines(path, RunFormatError):
        if not raw.strip():
            continue
        fields = raw.split()
        if len(fields) != 6:
            raise RunFormatError(f"expected 6 fields, found {len(fields)}", line=line_number)
        qid, _, doc_id, rank_text, score_text, _ = fields
        try:
            rank, score = int(rank_text), float(score_text)
        except ValueError:
            raise RunFormatError("rank must be an integer and score a real", line=line_number) from None
        if not math.isfinite(score):
            raise RunFormatError("non-finite score", line=line_number)
        rows.setdefault(qid, []).append((rank, doc_id, score))

    return RetrievalRun({
        qid: tuple((doc_id, score) for _, doc_id, score in sorted(entries))
        for qid, entries in rows.items()
    })


def load_tags(path: PathLike) -> TaskTag:
    """Read `id<TAB>task<TAB>group` lines"""
    assignment: Dict[str, Tuple[str, str]] = {}
    for line_number, raw in _text_lines(path, TagFormatError):
        if not raw.strip():
            continue
        fields = raw.split('\t')
        if len(fields) != 3:
            raise TagFormatError(f"expected 3 tab-separated fields, found {len(fields)}", line=line_number)
        identifier, task, group = fields
        if identifier in assignment:
            raise TagFormatError(f"id {identifier!r} tagged twice", line=line_number)
        assignment[identifier] = (task, group)
    return TaskTag(assignment)


def save_tags(tags: TaskTag, path: PathLike) -> None:
    with _open_for_write(path) as handle:
        for identifier in sorted(tags.assignment):
            task, group = tags.assignment[identifier]
            handle.write(f"{identifier}\t{task}\t{group}\n")
