"""Row-block streams: restartable sources of ``(rows, block)`` pairs.

Every call to ``iter(stream)`` is one pass over the matrix.  ``rows`` is a
``range`` of row indices and ``block`` the matching dense rows.  Passes may
visit blocks in any order but must cover every row exactly once.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import ArgumentError, StreamError


class DenseRowStream:
    """Streams an in-memory array in row blocks, optionally in a fixed
    permuted block order."""

    def __init__(self, A, block_rows: int = 64, order=None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ArgumentError("row stream needs a 2-D array")
        if block_rows < 1:
            raise ArgumentError("block_rows must be >= 1")
        self.matrix = A
        self.shape = A.shape
        starts = list(range(0, A.shape[0], block_rows))
        self._ranges = [range(s, min(s + block_rows, A.shape[0])) for s in starts]
        if order is not None:
            self._ranges = [self._ranges[i] for i in order]

    def __iter__(self):
        for r in self._ranges:
            yield r, self.matrix[r.start:r.stop]


class MatrixMarketRowStream(DenseRowStream):
    """File-backed stream for a Matrix Market file.

    The file is converted once to a row-major ``.npy`` file that is then
    memory-mapped, so passes read rows from disk instead of keeping a copy.
    """

    def __init__(self, path, block_rows: int = 64, cache_dir=None):
        from .mmio import read_matrix

        M = read_matrix(path)
        fd, self.cache_path = tempfile.mkstemp(suffix=".npy", dir=cache_dir)
        os.close(fd)
        np.save(self.cache_path, np.ascontiguousarray(M))
        del M
        super().__init__(np.load(self.cache_path, mmap_mode="r"), block_rows)

    def close(self):
        self.matrix = None
        if os.path.exists(self.cache_path):
            os.remove(self.cache_path)


class CountingRowStream:
    """Wraps a stream and counts passes (calls to ``iter``)."""

    def __init__(self, stream):
        self.inner = stream
        self.shape = stream.shape
        self.passes = 0

    def __iter__(self):
        self.passes += 1
        return iter(self.inner)


def checked_pass(stream, n_cols=None):
    """Iterate one pass, validating block widths and row coverage.

    Yields the same ``(rows, block)`` pairs.  Raises StreamError if a block
    has the wrong width or shape, if a row repeats, or if the pass ends
    before every row was seen.
    """
    n_rows = stream.shape[0]
    if n_cols is None:
        n_cols = stream.shape[1]
    seen = np.zeros(n_rows, dtype=bool)
    for rows, block in stream:
        block = np.asarray(block, dtype=float)
        if block.ndim != 2 or block.shape[1] != n_cols:
            raise StreamError(f"row block has width {block.shape[-1]}, expected {n_cols}")
        if block.shape[0] != len(rows):
            raise StreamError(f"block with {block.shape[0]} rows labelled as {len(rows)} rows")
        if rows.start < 0 or rows.stop > n_rows:
            raise StreamError(f"row range {rows} outside 0..{n_rows}")
        if seen[rows.start:rows.stop].any():
            raise StreamError(f"rows {rows} streamed twice in one pass")
        seen[rows.start:rows.stop] = True
        yield rows, block
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise StreamError(f"pass ended before row {missing} was streamed")
