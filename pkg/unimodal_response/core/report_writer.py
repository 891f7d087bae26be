"""
Writing report bundles to JSON and CSV files.
"""
import csv
import json
import logging
import math
import os
from typing import Any, Iterable, List, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


def to_plain(value: Any) -> Any:
    """JSON-ready copy: complex -> {"re", "im"}, numpy scalars/arrays -> Python, tuples -> lists."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _finite(value.real), "im": _finite(value.imag)}
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _finite(float(value))
    return value


def _finite(x: float):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


class ReportWriter:
    """Writes the artifacts of one run into a directory.

    File names are fixed per artifact so repeated runs overwrite in place.
    """

    def __init__(self, base_dir=None):
        """Create the writer.

        Args:
            base_dir (str, optional): Output directory. Defaults to ./results.
        """
        self.base_dir = base_dir if base_dir is not None else os.path.join(os.getcwd(), "results")
        os.makedirs(self.base_dir, exist_ok=True)
        self.written: List[str] = []

    def path(self, filename: str) -> str:
        return os.path.join(self.base_dir, filename)

    def write_json(self, filename: str, payload: dict) -> str:
        document = {"schema_version": SCHEMA_VERSION}
        document.update(to_plain(payload))
        target = self.path(filename)
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(document, handle, indent=2, sort_keys=True, ensure_ascii=False)
            handle.write("\n")
        self.written.append(target)
        logger.info("Wrote %s", target)
        return target

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        target = self.path(filename)
        with open(target, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                                 for v in row])
        self.written.append(target)
        logger.info("Wrote %s", target)
        return target
