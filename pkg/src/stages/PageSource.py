"""
PageSource - Emits pages from a corpus on disk.

Reads JSONL corpora line by line, directories of PageDocuments file by file,
or FUNSD dataset directories. A page that fails validation is logged and
skipped; in strict mode the error propagates instead.
"""

import logging
import os
from typing import Any, Dict, Iterator, Optional

from errors import DataError, P2GError
from dataio.pages import corpus_entries, detect_format
from layout.doc_model import Page

logger = logging.getLogger(__name__)


class PageSource:
    """
    Corpus reader with per-page error isolation.

    Features:
    - JSONL, directory and FUNSD corpora (format detected from the path)
    - Word or entity level for FUNSD
    - Optional page limit
    - Counters for emitted and rejected pages
    """

    LOG_EVERY = 100

    def initialize(self, conf: Dict[str, Any]):
        """
        Args:
            conf: {'path': str, 'format': 'auto'|'jsonl'|'dir'|'funsd',
                   'level': 'word'|'entity', 'strict': bool, 'max_pages': int}
        """
        self.path = conf['path']
        self.format = conf.get('format', 'auto')
        self.level = conf.get('level', 'word')
        self.strict = bool(conf.get('strict', False))
        self.max_pages = int(conf.get('max_pages', 0))

        if not os.path.exists(self.path):
            raise DataError(f"corpus not found: {self.path}")
        if self.format == 'auto':
            self.format = detect_format(self.path)

        self.total_emitted = 0
        self.failed = 0

        logger.info("PageSource initialized")
        logger.info(f"  Corpus: {self.path} ({self.format}, level={self.level})")

    def pages(self) -> Iterator[Page]:
        for page in self._read():
            if self.max_pages and self.total_emitted >= self.max_pages:
                break
            self.total_emitted += 1
            if self.total_emitted % self.LOG_EVERY == 0:
                self._log_statistics()
            yield page
        self._log_statistics()

    def _read(self) -> Iterator[Page]:
        for where, load in corpus_entries(self.path, self.format, self.level):
            page = self._guard(where, load)
            if page is not None:
                yield page

    def _guard(self, where: str, load) -> Optional[Page]:
        try:
            return load()
        except P2GError as e:
            if self.strict:
                raise
            self.failed += 1
            logger.warning(f"Skipping {where}: {e}")
            return None

    def _log_statistics(self):
        logger.info(f"PageSource: emitted {self.total_emitted}, failed {self.failed}")
