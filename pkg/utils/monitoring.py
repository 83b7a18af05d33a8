"""
Performance monitoring for the retrieval adapter toolkit
Tracks stage timings and process memory/CPU usage
"""
import json
import logging
import time
from collections import deque
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

import psutil

from config.settings import SLOW_STAGE_SECONDS

logger = logging.getLogger('radapt.performance')


class PerformanceTracker:
    """Track stage execution times and resource usage"""

    def __init__(self, slow_stage_threshold: float = SLOW_STAGE_SECONDS):
        self.stage_times = deque(maxlen=1000)
        self.slow_stage_threshold = slow_stage_threshold
        self.peak_rss_mb = 0.0
        self.start_time = time.time()
        self._process = psutil.Process()

    def resource_snapshot(self) -> Dict[str, float]:
        """Current process RSS (MB) and CPU percent since the last call"""
        try:
            rss_mb = self._process.memory_info().rss / (1024 * 1024)
            cpu_percent = self._process.cpu_percent(interval=None)
        except (psutil.NoSuchProcess, psutil.AccessDenied):
            return {'rss_mb': 0.0, 'cpu_percent': 0.0}
        self.peak_rss_mb = max(self.peak_rss_mb, rss_mb)
        return {'rss_mb': round(rss_mb, 2), 'cpu_percent': cpu_percent}

    def track_stage(self, stage: str, execution_time: float, context: Optional[Dict[str, Any]] = None):
        """Record one stage execution and log it as a JSON payload"""
        record = {
            'stage': stage,
            'seconds': round(execution_time, 4),
            **self.resource_snapshot(),
            'context': context or {},
        }
        self.stage_times.append(record)
        logger.info(json.dumps(record, sort_keys=True))

        if execution_time > self.slow_stage_threshold:
            logger.warning(f"Slow stage detected: {stage} took {execution_time:.2f}s")

    @contextmanager
    def timed(self, stage: str, **context) -> Iterator[None]:
        started = time.perf_counter()
        try:
            yield
        finally:
            self.track_stage(stage, time.perf_counter() - started, context)

    def get_performance_summary(self) -> Dict[str, Any]:
        """Per-stage totals since startup"""
        totals: Dict[str, Dict[str, float]] = {}
        for record in self.stage_times:
            entry = totals.setdefault(record['stage'], {'runs': 0, 'seconds': 0.0})
            entry['runs'] += 1
            entry['seconds'] += record['seconds']

        return {
            'uptime_seconds': round(time.time() - self.start_time, 2),
            'peak_rss_mb': round(self.peak_rss_mb, 2),
            'stages': totals,
        }


# Global performance tracker instance
performance_tracker = PerformanceTracker()
