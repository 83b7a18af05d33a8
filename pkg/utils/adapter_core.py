"""
Adapter core for the retrieval adapter toolkit
The linear query-side adapter, L2 normalization and cosine similarity
"""
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from config.settings import ADAPTER_MAGIC, FORMAT_VERSION, NORM_EPS
from utils.exceptions import AdapterFormatError, DimensionMismatchError, StoreWriteError
from utils.rng import keyed_rng

logger = logging.getLogger('radapt.training')

INIT_SCHEMES = ('identity-like', 'scaled-random')
ALIGNMENT_STARTS = INIT_SCHEMES + ('least-squares',)
_HEADER = struct.Struct('<4sBII')


@dataclass(frozen=True, eq=False)
class Adapter:
    """Linear map W of shape (query_dim, doc_dim) applied to query embeddings"""
    weights: np.ndarray
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        if weights.ndim != 2 or weights.shape[0] == 0 or weights.shape[1] == 0:
            raise AdapterFormatError(f"adapter weights must be a non-empty matrix, got shape {weights.shape}")
        if not np.isfinite(weights).all():
            raise AdapterFormatError("adapter weights contain non-finite entries")
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'metadata', dict(self.metadata))

    @property
    def query_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def doc_dim(self) -> int:
        return self.weights.shape[1]

    def with_weights(self, weights: np.ndarray) -> 'Adapter':
        return Adapter(weights, self.metadata)

    def with_metadata(self, **updates) -> 'Adapter':
        return Adapter(self.weights, {**self.metadata, **updates})


def default_scheme(query_dim: int, doc_dim: int) -> str:
    """Identity start when the spaces have equal width, scaled-random otherwise"""
    return 'identity-like' if query_dim == doc_dim else 'scaled-random'


def init_adapter(query_dim: int, doc_dim: int, scheme: Optional[str] = None, seed: int = 0) -> Adapter:
    """Create an adapter with a truncated/padded identity or a seeded uniform matrix"""
    if query_dim <= 0 or doc_dim <= 0:
        raise AdapterFormatError(f"adapter dimensions must be positive, got ({query_dim}, {doc_dim})")
    scheme = scheme or default_scheme(query_dim, doc_dim)

    if scheme == 'identity-like':
        weights = np.eye(query_dim, doc_dim, dtype=np.float64)
    elif scheme == 'scaled-random':
        limit = math.sqrt(6.0 / (query_dim + doc_dim))
        weights = keyed_rng(seed, 'adapter-init').uniform(-limit, limit, size=(query_dim, doc_dim))
    else:
        raise AdapterFormatError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")

    return Adapter(weights, {'init_scheme': scheme, 'seed': int(seed)})


def least_squares_adapter(q_rows: np.ndarray, d_rows: np.ndarray, seed: int = 0) -> Adapter:
    """argmin ||QW - D||_F over paired rows; scaled-random when the fit collapses to zero"""
    q_rows = np.asarray(q_rows, dtype=np.float64)
    d_rows = np.asarray(d_rows, dtype=np.float64)
    if q_rows.ndim != 2 or d_rows.ndim != 2 or q_rows.shape[0] != d_rows.shape[0] or q_rows.shape[0] == 0:
        raise DimensionMismatchError(
            f"least-squares start needs paired non-empty rows, got {q_rows.shape} and {d_rows.shape}")
    weights = np.linalg.lstsq(q_rows, d_rows, rcond=None)[0]
    if not np.isfinite(weights).all() or np.linalg.norm(weights) <= NORM_EPS:
        logger.warning("least-squares start is degenerate, using scaled-random")
        return init_adapter(q_rows.shape[1], d_rows.shape[1], 'scaled-random', seed)
    return Adapter(weights, {'init_scheme': 'least-squares', 'seed': int(seed)})


def alignment_start(q_rows: np.ndarray, d_rows: np.ndarray, scheme: Optional[str] = None,
                    seed: int = 0) -> Adapter:
    """Starting adapter for the alignment stage: identity for equal widths, the least-squares fit otherwise"""
    q_rows = np.asarray(q_rows, dtype=np.float64)
    d_rows = np.asarray(d_rows, dtype=np.float64)
    query_dim, doc_dim = q_rows.shape[-1], d_rows.shape[-1]
    scheme = scheme or ('identity-like' if query_dim == doc_dim else 'least-squares')
    if scheme == 'least-squares':
        return least_squares_adapter(q_rows, d_rows, seed)
    return init_adapter(query_dim, doc_dim, scheme, seed)


def l2_normalize(v: np.ndarray, eps: float = NORM_EPS) -> Tuple[np.ndarray, bool]:
    """Return (v / ||v||, False), or (v, True) when the norm is at or below eps"""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= eps:
        return v.copy(), True
    return v / norm, False


def normalize_rows(matrix: np.ndarray, eps: float = NORM_EPS) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise l2_normalize; degenerate rows are returned unchanged and flagged"""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    degenerate = norms <= eps
    safe = np.where(degenerate, 1.0, norms)
    return matrix / safe[:, None], degenerate


def _check_query_width(adapter: Adapter, width: int):
    if width != adapter.query_dim:
        raise DimensionMismatchError(
            f"query vector has length {width}, adapter expects {adapter.query_dim}")


def apply_adapter(adapter: Adapter, q: np.ndarray) -> np.ndarray:
    """l2_normalize(q^T W)"""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got shape {q.shape}")
    _check_query_width(adapter, q.shape[0])
    adapted, degenerate = l2_normalize(q @ adapter.weights)
    if degenerate:
        logger.debug("apply_adapter produced a degenerate vector")
    return adapted


def apply_adapter_rows(adapter: Adapter, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Adapt and normalize every row; returns (rows, degenerate mask)"""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2:
        raise DimensionMismatchError(f"expected a matrix of queries, got shape {queries.shape}")
    _check_query_width(adapter, queries.shape[1])
    return normalize_rows(queries @ adapter.weights)


def cosine_sim(u: np.ndarray, v: np.ndarray, eps: float = NORM_EPS) -> float:
    """u.v / (|u||v|), or 0 when either norm is at or below eps"""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatchError(f"cosine_sim needs equal-length vectors, got {u.shape} and {v.shape}")
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu <= eps or nv <= eps:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def save_adapter(adapter: Adapter, path: Union[str, Path]) -> None:
    """Write the ERAW matrix file and its JSON provenance sidecar"""
    path = Path(path)
    payload = _HEADER.pack(ADAPTER_MAGIC, FORMAT_VERSION, adapter.query_dim, adapter.doc_dim)
    payload += adapter.weights.astype('<f8').tobytes(order='C')
    sidecar = json.dumps(_jsonable(adapter.metadata), sort_keys=True, indent=2) + '\n'
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
        sidecar_path(path).write_text(sidecar, encoding='utf-8')
    except OSError as e:
        raise StoreWriteError(f"cannot write adapter {path}: {e}") from e
    logger.info(f"Saved {adapter.query_dim}x{adapter.doc_dim} adapter to {path}")


def load_adapter(path: Union[str, Path]) -> Adapter:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise AdapterFormatError(f"{path}: file shorter than header")
    magic, version, query_dim, doc_dim = _HEADER.unpack_from(blob, 0)
    if magic != ADAPTER_MAGIC:
        raise AdapterFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise AdapterFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * query_dim * doc_dim
    if len(blob) != expected:
        raise AdapterFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")

    weights = np.frombuffer(blob, dtype='<f8', offset=_HEADER.size).reshape(query_dim, doc_dim)
    metadata: Dict[str, Any] = {}
    if sidecar_path(path).exists():
        metadata = json.loads(sidecar_path(path).read_text(encoding='utf-8'))
    return Adapter(weights, metadata)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value
