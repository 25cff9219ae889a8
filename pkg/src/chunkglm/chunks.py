"""Re-iterable fixed-size chunk providers over tables, arrays, and CSV files.

A source hands out blocks of at most ``chunk_size`` rows in a stable
order, can be reset to the first block, and never requires the full
row set in memory (for the CSV backend only the current block is ever
materialized). Ingestion is deterministic: CSV cells are parsed with
IEEE-754 correctly-rounded ``float``, so a CSV round trip of a table
reproduces it bitwise.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    NotRewindableError,
    ParseError,
    ReadError,
    SchemaError,
    ShapeError,
)

DEFAULT_CHUNK_SIZE = 10_000


@dataclass(frozen=True)
class ChunkSchema:
    """Names the response, covariate, and optional weights columns.

    ``intercept`` prepends a constant-1 column, so the design has
    ``len(covariates) + intercept`` columns.
    """

    response: str
    covariates: tuple[str, ...]
    weights: str | None = None
    intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [self.response, *self.covariates]
        if self.weights is not None:
            names.append(self.weights)
        if len(set(names)) != len(names):
            raise SchemaError(f"schema columns must be distinct, got {names}")
        if not self.covariates:
            raise SchemaError("at least one covariate column is required")

    @property
    def n_columns(self) -> int:
        return len(self.covariates) + int(self.intercept)


@dataclass(frozen=True)
class Chunk:
    """One block of rows: design block x, responses y, weights m."""

    x: np.ndarray
    y: np.ndarray
    m: np.ndarray
    row_offset: int

    def __len__(self) -> int:
        return self.x.shape[0]


class ChunkSource:
    """Base class: sequential chunks, resettable, single reader at a time."""

    chunk_size: int
    n_columns: int

    def __init__(self, chunk_size: int):
        if chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
        self.chunk_size = chunk_size
        self.n_rows: int | None = None
        self.peak_chunk_rows = 0
        self._offset = 0
        self._exhausted = False

    def next_chunk(self) -> Chunk | None:
        if self._exhausted:
            return None
        chunk = self._read_block()
        if chunk is None:
            self._exhausted = True
            self.n_rows = self._offset
            return None
        self._offset += len(chunk)
        self.peak_chunk_rows = max(self.peak_chunk_rows, len(chunk))
        return chunk

    def reset(self) -> None:
        self._rewind()
        self._offset = 0
        self._exhausted = False

    def chunks(self):
        """One full pass: reset, then yield chunks until exhausted."""
        self.reset()
        while (chunk := self.next_chunk()) is not None:
            yield chunk

    def count_rows(self) -> int:
        """Row count, running one full pass if it is not known yet."""
        if self.n_rows is None:
            for _ in self.chunks():
                pass
        return self.n_rows

    def _read_block(self) -> Chunk | None:
        raise NotImplementedError

    def _rewind(self) -> None:
        raise NotImplementedError


class MemorySource(ChunkSource):
    """Chunks over arrays already in memory (tests and simulations)."""

    def __init__(self, x, y, m=None, chunk_size: int = DEFAULT_CHUNK_SIZE):
        super().__init__(chunk_size)
        self._x = np.ascontiguousarray(x, dtype=float)
        self._y = np.asarray(y, dtype=float)
        if self._x.ndim != 2:
            raise ShapeError(f"design must be 2-d, got shape {self._x.shape}")
        n = self._x.shape[0]
        if self._y.shape != (n,):
            raise ShapeError(f"response must have shape ({n},), got {self._y.shape}")
        self._m = np.ones(n) if m is None else np.asarray(m, dtype=float)
        if self._m.shape != (n,):
            raise ShapeError(f"weights must have shape ({n},), got {self._m.shape}")
        self.n_columns = self._x.shape[1]
        self.n_rows = n

    @classmethod
    def from_table(cls, table: Mapping, schema: ChunkSchema,
                   chunk_size: int = DEFAULT_CHUNK_SIZE) -> "MemorySource":
        missing = [c for c in (schema.response, *schema.covariates,
                               *([schema.weights] if schema.weights else []))
                   if c not in table]
        if missing:
            raise SchemaError(f"columns missing from table: {missing}")
        y = _numeric_column(schema.response, table[schema.response])
        n = y.shape[0]
        cols = []
        if schema.intercept:
            cols.append(np.ones(n))
        for name in schema.covariates:
            col = _numeric_column(name, table[name])
            if col.shape[0] != n:
                raise ShapeError(
                    f"column {name!r} has {col.shape[0]} rows, expected {n}"
                )
            cols.append(col)
        m = None
        if schema.weights is not None:
            m = _numeric_column(schema.weights, table[schema.weights])
        return cls(np.column_stack(cols), y, m, chunk_size)

    def _read_block(self) -> Chunk | None:
        lo = self._offset
        if lo >= self._x.shape[0]:
            return None
        hi = min(lo + self.chunk_size, self._x.shape[0])
        return Chunk(x=self._x[lo:hi], y=self._y[lo:hi], m=self._m[lo:hi],
                     row_offset=lo)

    def _rewind(self) -> None:
        pass


def _numeric_column(name: str, values) -> np.ndarray:
    try:
        return np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        for i, v in enumerate(values):
            try:
                float(v)
            except (TypeError, ValueError):
                raise ParseError(i, name) from None
        raise


class CsvSource(ChunkSource):
    """Streams a header-first comma-separated file, one block at a time."""

    def __init__(self, source, schema: ChunkSchema,
                 chunk_size: int = DEFAULT_CHUNK_SIZE):
        super().__init__(chunk_size)
        self.schema = schema
        self.n_columns = schema.n_columns
        if isinstance(source, (str, os.PathLike)):
            self._path = Path(source)
            self._file = None
        else:
            self._path = None
            self._file = source
        self._open_reader()

    def _open_reader(self):
        try:
            if self._path is not None:
                self._handle = open(self._path, "r", newline="")
            else:
                self._handle = self._file
            self._reader = csv.reader(self._handle)
            header = next(self._reader, None)
        except OSError as exc:
            raise ReadError(f"cannot read CSV source: {exc}") from exc
        if header is None:
            raise SchemaError("CSV file is empty; a header row is required")
        self._header = [h.strip() for h in header]
        needed = [self.schema.response, *self.schema.covariates]
        if self.schema.weights is not None:
            needed.append(self.schema.weights)
        missing = [c for c in needed if c not in self._header]
        if missing:
            raise SchemaError(f"columns missing from CSV header: {missing}")
        self._y_idx = self._header.index(self.schema.response)
        self._x_idx = [self._header.index(c) for c in self.schema.covariates]
        self._m_idx = (self._header.index(self.schema.weights)
                       if self.schema.weights is not None else None)
        self._line = 1  # header consumed

    def _read_block(self) -> Chunk | None:
        p_cov = len(self._x_idx)
        xs = np.empty((self.chunk_size, p_cov))
        ys = np.empty(self.chunk_size)
        ms = np.empty(self.chunk_size)
        count = 0
        try:
            while count < self.chunk_size:
                cells = next(self._reader, None)
                if cells is None:
                    break
                self._line += 1
                if len(cells) != len(self._header):
                    raise ParseError(
                        self._line, "<row>",
                        f"row {self._line} has {len(cells)} fields, "
                        f"expected {len(self._header)}",
                    )
                ys[count] = self._cell(cells, self._y_idx, self.schema.response)
                for j, idx in enumerate(self._x_idx):
                    xs[count, j] = self._cell(cells, idx,
                                              self.schema.covariates[j])
                ms[count] = (1.0 if self._m_idx is None
                             else self._cell(cells, self._m_idx,
                                             self.schema.weights))
                count += 1
        except OSError as exc:
            raise ReadError(f"I/O failure while streaming CSV: {exc}") from exc
        if count == 0:
            return None
        x = xs[:count]
        if self.schema.intercept:
            x = np.column_stack([np.ones(count), x])
        return Chunk(x=np.ascontiguousarray(x), y=ys[:count].copy(),
                     m=ms[:count].copy(), row_offset=self._offset)

    def _cell(self, cells, idx, name) -> float:
        try:
            return float(cells[idx])
        except ValueError:
            raise ParseError(self._line, name) from None

    def _rewind(self) -> None:
        if self._path is not None:
            self._handle.close()
            self._open_reader()
            return
        if not self._handle.seekable():
            raise NotRewindableError(
                "the CSV stream is not seekable and cannot be reset"
            )
        self._handle.seek(0)
        self._reader = csv.reader(self._handle)
        next(self._reader)  # header
        self._line = 1

    def close(self) -> None:
        if self._path is not None:
            self._handle.close()


def open_source(data, schema: ChunkSchema,
                chunk_size: int = DEFAULT_CHUNK_SIZE) -> ChunkSource:
    """Open a chunk source over a CSV path, a file-like, or a column table."""
    if isinstance(data, (str, os.PathLike)) or isinstance(data, io.IOBase) \
            or hasattr(data, "read"):
        return CsvSource(data, schema, chunk_size)
    if isinstance(data, Mapping):
        return MemorySource.from_table(data, schema, chunk_size)
    raise TypeError(
        f"cannot open a chunk source over {type(data).__name__}; "
        "expected a path, a readable stream, or a column mapping"
    )


def array_source(x, y, m=None, chunk_size: int = DEFAULT_CHUNK_SIZE,
                 intercept: bool = False) -> MemorySource:
    """In-memory source straight from arrays, optionally adding an intercept."""
    x = np.asarray(x, dtype=float)
    if intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])
    return MemorySource(x, y, m, chunk_size)


def write_csv(path, table: Mapping, columns=None) -> None:
    """Write a column table as CSV with round-trip-exact float formatting."""
    names = list(columns) if columns is not None else list(table)
    arrays = [np.asarray(table[c]) for c in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(arrays[0].shape[0]):
            writer.writerow([repr(float(a[i])) for a in arrays])
