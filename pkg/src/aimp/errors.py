"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures without a
lookup table:

    0 success, 1 verification failure, 2 configuration/spec error,
    3 stage execution failure, 4 network error, 5 internal/IO error
"""

from __future__ import annotations


class AimpError(Exception):
    exit_code = 5


# -- configuration / spec errors (2) ------------------------------------------


class ConfigError(AimpError):
    exit_code = 2


class TurtleSyntaxError(ConfigError):
    def __init__(self, line: int, col: int, message: str):
        self.line = line
        self.col = col
        self.message = message
        super().__init__(f"line {line}, column {col}: {message}")


class UnknownPrefix(TurtleSyntaxError):
    def __init__(self, name: str, line: int, col: int = 0):
        self.name = name
        super().__init__(line, col, f"unknown prefix {name!r}")


class PipelineSyntaxError(ConfigError):
    def __init__(self, line: int | None, message: str):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class DuplicateStage(ConfigError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"stage {name!r} declared more than once")


class DuplicateOut(ConfigError):
    def __init__(self, path: str, stage_a: str, stage_b: str):
        self.path = path
        self.stage_a = stage_a
        self.stage_b = stage_b
        super().__init__(f"output {path!r} declared by both {stage_a!r} and {stage_b!r}")


class BadPath(ConfigError):
    def __init__(self, path: str, reason: str = "invalid path"):
        self.path = path
        super().__init__(f"{path!r}: {reason}")


class CycleDetected(ConfigError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("dependency cycle: " + " -> ".join(cycle))


class MissingDep(ConfigError):
    def __init__(self, path: str, stage: str | None = None):
        self.path = path
        self.stage = stage
        who = f" (stage {stage!r})" if stage else ""
        super().__init__(f"missing dependency {path!r}{who}")


class MissingParam(ConfigError):
    def __init__(self, key: str, stage: str | None = None):
        self.key = key
        self.stage = stage
        who = f" (stage {stage!r})" if stage else ""
        super().__init__(f"parameter {key!r} not found in params file{who}")


class IncompleteLock(ConfigError):
    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"lock file has no successful record for stage {stage!r}")


class MissingMandatory(ConfigError):
    def __init__(self, dataset_id: str, field: str):
        self.dataset_id = dataset_id
        self.field = field
        super().__init__(f"dataset {dataset_id}: mandatory field {field!r} missing")


class ManualIncomplete(ConfigError):
    def __init__(self, fields: list[str]):
        self.fields = fields
        super().__init__("manual metadata incomplete, fill in: " + ", ".join(fields))


class InvalidGraph(ConfigError):
    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid provenance graph: {shown}{more}")


# graph construction errors are raised eagerly by add_node/add_edge/merge


class GraphError(ConfigError):
    pass


class DuplicateId(GraphError):
    def __init__(self, iri: str):
        self.iri = iri
        super().__init__(f"node {iri} already present")


class UnknownNode(GraphError):
    def __init__(self, iri: str):
        self.iri = iri
        super().__init__(f"no node with id {iri}")


class DuplicateEdge(GraphError):
    def __init__(self, subject: str, predicate: str, obj: str):
        self.edge = (subject, predicate, obj)
        super().__init__(f"edge ({subject}, {predicate}, {obj}) already present")


class RelationDomainViolation(GraphError):
    def __init__(self, predicate: str, expected: str, actual: str):
        self.predicate = predicate
        self.expected = expected
        self.actual = actual
        super().__init__(f"{predicate}: expected {expected}, got {actual}")


class VocabularyError(GraphError):
    pass


class PrefixConflict(GraphError):
    def __init__(self, prefix: str, a: str, b: str):
        self.prefix = prefix
        super().__init__(f"prefix {prefix!r} bound to both <{a}> and <{b}>")


class AttributeConflict(GraphError):
    def __init__(self, iri: str, key: str):
        self.iri = iri
        self.key = key
        super().__init__(f"node {iri}: conflicting values for attribute {key}")


# -- verification failures (1) -------------------------------------------------


class VerificationError(AimpError):
    exit_code = 1


class SelfInconsistent(VerificationError):
    def __init__(self, embedded: str, computed: str):
        self.embedded = embedded
        self.computed = computed
        super().__init__(f"embedded identity {embedded} does not match recomputed {computed}")


class CorruptObject(VerificationError):
    def __init__(self, digest: str, actual: str | None = None):
        self.digest = digest
        self.actual = actual
        super().__init__(f"object {digest} is corrupt" + (f" (re-hashes to {actual})" if actual else ""))


class DigestMismatch(VerificationError):
    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(f"digest mismatch: expected {expected}, got {actual}")


# -- stage execution failures (3) ----------------------------------------------


class ExecutionError(AimpError):
    exit_code = 3

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ExecutionFailed(ExecutionError):
    def __init__(self, stage: str, exit_code: int, report=None):
        self.stage = stage
        self.returncode = exit_code
        super().__init__(f"stage {stage!r} exited with status {exit_code}", report)


class MissingOut(ExecutionError):
    def __init__(self, stage: str, path: str, report=None):
        self.stage = stage
        self.path = path
        super().__init__(f"stage {stage!r} succeeded but did not produce {path!r}", report)


# -- network (4) -----------------------------------------------------------------


class NetworkError(AimpError):
    exit_code = 4


class HttpStatus(NetworkError):
    def __init__(self, code: int, url: str = ""):
        self.code = code
        self.url = url
        super().__init__(f"HTTP {code}" + (f" from {url}" if url else ""))


class Unauthorized(HttpStatus):
    pass


# -- internal / IO (5) -----------------------------------------------------------


class IoError(AimpError):
    exit_code = 5

    def __init__(self, path, reason: str = ""):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}" if reason else self.path)


class NotFound(AimpError):
    exit_code = 5

    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"object {digest} not in store")


class LoadError(AimpError):
    exit_code = 2
