"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failure families to
process exit statuses without a lookup table of its own:

    2  input problems (missing files, unparsable cells, empty tables)
    3  schema problems (header mismatch, malformed schema documents)
    4  pipeline problems (degenerate data, mismatched reports, bad bundles)
    5  the external synthesizer did not finish in time
"""

from __future__ import annotations


class DerecSimError(Exception):
    exit_code = 4


# -- input (2) ----------------------------------------------------------------


class InputError(DerecSimError):
    exit_code = 2


class MissingInput(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class EmptyTable(InputError):
    pass


# -- schema (3) ---------------------------------------------------------------


class SchemaError(DerecSimError):
    exit_code = 3


class SchemaMismatch(SchemaError):
    pass


# -- pipeline (4) -------------------------------------------------------------


class PipelineError(DerecSimError):
    exit_code = 4


class DisjointSubjects(PipelineError):
    pass


class UnknownSubject(PipelineError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class NoContextualColumns(PipelineError):
    pass


class BundleInvariantError(PipelineError):
    pass


class EmptyCondition(PipelineError):
    pass


class EmptySample(PipelineError):
    pass


class PairMismatch(PipelineError):
    pass


class MissingArtifact(PipelineError):
    pass


class SpecInvalid(PipelineError):
    pass


class EmptyReport(PipelineError):
    pass


# -- external synthesizer (5) -------------------------------------------------


class SynthesizerTimeout(DerecSimError):
    exit_code = 5
