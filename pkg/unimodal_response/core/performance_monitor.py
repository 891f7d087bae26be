"""
Stage timing and memory monitor for pipeline runs.
"""
import logging
import time
from contextlib import contextmanager
from typing import Any, Dict, List

import psutil

logger = logging.getLogger(__name__)


class PerformanceMonitor:
    """Record wall time and resident memory per pipeline stage.

    Figures are logged only; they never enter result files.
    """

    def __init__(self):
        self.start_time = time.time()
        self.process = psutil.Process()
        self.stages: List[Dict[str, Any]] = []

    def _memory_mb(self) -> float:
        return self.process.memory_info().rss / 1024 / 1024

    @contextmanager
    def stage(self, name: str):
        started = time.perf_counter()
        memory_before = self._memory_mb()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - started
            memory_after = self._memory_mb()
            self.stages.append({
                "stage": name,
                "seconds": elapsed,
                "memory_mb": round(memory_after, 1),
                "memory_delta_mb": round(memory_after - memory_before, 1),
            })
            logger.info("Stage %-12s %.3fs, RSS %.1f MB", name, elapsed, memory_after)

    def get_performance_report(self) -> Dict[str, Any]:
        return {
            "runtime_seconds": time.time() - self.start_time,
            "cpu_percent": psutil.cpu_percent(interval=None),
            "memory_mb": round(self._memory_mb(), 1),
            "stages": list(self.stages),
        }

    def log_summary(self):
        report = self.get_performance_report()
        logger.info("Run finished in %.1fs, peak stage %s, RSS %.1f MB",
                    report["runtime_seconds"],
                    max(self.stages, key=lambda s: s["seconds"])["stage"] if self.stages else "-",
                    report["memory_mb"])
