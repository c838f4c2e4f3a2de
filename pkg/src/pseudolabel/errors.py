"""Exception hierarchy.

``UserError`` subclasses signal bad inputs (CLI exit code 1); everything
else under ``PipelineError`` is a runtime failure (exit code 2).
"""


class PipelineError(Exception):
    pass


class UserError(PipelineError):
    pass


class TemplateError(UserError):
    pass


class FormatError(UserError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DuplicateIdError(FormatError):
    pass


class OverlapError(UserError):
    pass


class UnknownPostError(UserError):
    pass


class InsufficientClassError(UserError):
    def __init__(self, level, count, k):
        self.level = level
        self.count = count
        self.k = k
        super().__init__(f"class {level} has {count} gold rows, need at least k={k}")


class BudgetError(PipelineError):
    """Raised when a budget (token cap or completion length) cannot be honoured."""

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class DuplicateAnnotationError(UserError):
    pass


class EnsembleError(UserError):
    pass


class MissingMemberError(EnsembleError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"predictions missing for members: {', '.join(self.missing)}")


class EmptyInputError(UserError):
    pass


class LengthMismatchError(UserError):
    pass


class ShapeError(UserError):
    pass


class DegenerateDataError(UserError):
    pass


class TransportError(PipelineError):
    pass


class ProtocolError(PipelineError):
    pass


class ParseError(PipelineError):
    pass


class PreconditionError(PipelineError):
    pass


class AnnotationError(PipelineError):
    def __init__(self, post_id, annotator_id, cause):
        self.post_id = post_id
        self.annotator_id = annotator_id
        self.cause = cause
        super().__init__(f"{annotator_id} failed on post {post_id}: {cause}")
