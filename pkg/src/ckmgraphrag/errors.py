"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class CkmRagError(Exception):
    """Base class. ``exit_code`` is what the CLI returns when it escapes."""

    exit_code = 1


class ConfigError(CkmRagError):
    exit_code = 2

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(CkmRagError):
    """Unreadable or malformed input/output files."""

    exit_code = 3


class MalformedRowError(DataError):
    def __init__(self, row: int, reason: str):
        self.row = row
        super().__init__(f"row {row}: {reason}")


class ChunkingError(CkmRagError):
    def __init__(self, line_no: int, tokens: int, chunk_size: int):
        self.line_no = line_no
        super().__init__(
            f"line {line_no} has {tokens} tokens, exceeding chunk size {chunk_size}"
        )


class ExtractionError(CkmRagError):
    def __init__(self, chunk_index: int, line_no: int, reason: str):
        self.chunk_index = chunk_index
        self.line_no = line_no
        super().__init__(f"chunk {chunk_index}, line {line_no}: {reason}")


class NoRecordsError(CkmRagError):
    """An LLM extraction response contained no parseable records."""


class MergeConflictError(CkmRagError):
    pass


class GraphFormatError(DataError):
    pass


class BackendError(CkmRagError):
    exit_code = 4


class UnparseableResponseError(BackendError):
    pass


class EmptyResultError(CkmRagError):
    exit_code = 5


class NoEvidenceError(EmptyResultError):
    pass
