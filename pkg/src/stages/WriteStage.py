"""
WriteStage - Writes predictions and metric tables under an output directory.

Predictions are buffered and appended to a JSONL file; per-epoch logs are
appended line by line; tables are written as Parquet (pyarrow engine, snappy
compression).
"""

import json
import logging
import os
from typing import Any, Dict, List, Sequence

try:
    import pandas as pd
    import pyarrow  # noqa: F401
    PARQUET_AVAILABLE = True
except ImportError:
    PARQUET_AVAILABLE = False
    logging.warning("pyarrow/pandas not available, Parquet writing disabled")

logger = logging.getLogger(__name__)


class WriteStage:
    """
    Buffered writer.

    Features:
    - Prediction records flushed to predictions.jsonl when the buffer fills
    - Line-by-line JSONL logs and Parquet metric tables
    - Plain JSON and text reports
    """

    def initialize(self, conf: Dict[str, Any]):
        """
        Args:
            conf: {'out_dir': str, 'buffer_size': int}
        """
        self.out_dir = conf['out_dir']
        self.buffer_size = int(conf.get('buffer_size', 100))
        os.makedirs(self.out_dir, exist_ok=True)

        self.predictions_path = os.path.join(self.out_dir, 'predictions.jsonl')
        self.buffer: List[Dict[str, Any]] = []
        self._started = False

        self.processed = 0
        self.records_written = 0
        self.flush_count = 0

        logger.info(f"WriteStage initialized (out_dir={self.out_dir})")

    def process(self, record: Dict[str, Any]):
        self.buffer.append(record)
        self.processed += 1
        if len(self.buffer) >= self.buffer_size:
            self.flush()

    def flush(self):
        mode = 'a' if self._started else 'w'
        with open(self.predictions_path, mode, encoding='utf-8') as f:
            for record in self.buffer:
                f.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
                f.write('\n')
        self._started = True
        self.records_written += len(self.buffer)
        self.flush_count += 1
        logger.debug(f"Flushed {len(self.buffer)} records (total: {self.records_written})")
        self.buffer.clear()

    def close(self):
        if self.buffer or not self._started:
            self.flush()
        logger.info(f"WriteStage: wrote {self.records_written} records in {self.flush_count} flushes")

    def start_log(self, name: str) -> str:
        """Create (or truncate) a JSONL log under the output directory."""
        path = os.path.join(self.out_dir, name)
        open(path, 'w', encoding='utf-8').close()
        return path

    def append_log(self, name: str, row: Dict[str, Any]):
        with open(os.path.join(self.out_dir, name), 'a', encoding='utf-8') as f:
            f.write(json.dumps(row, sort_keys=True))
            f.write('\n')

    def write_table(self, name: str, rows: Sequence[Dict[str, Any]]) -> str:
        """Write rows as <name>.parquet; returns the path."""
        parquet_path = os.path.join(self.out_dir, f'{name}.parquet')
        if not PARQUET_AVAILABLE:
            logger.error("Parquet writing not available")
            return parquet_path
        df = pd.DataFrame(list(rows))
        df.to_parquet(parquet_path, engine='pyarrow', compression='snappy', index=False)
        logger.info(f"Wrote {len(df)} rows to {parquet_path}")
        return parquet_path

    def write_json(self, name: str, payload: Any) -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        logger.info(f"Wrote {path}")
        return path

    def write_text(self, name: str, lines: Sequence[str]) -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            for line in lines:
                f.write(line)
                f.write('\n')
        return path
