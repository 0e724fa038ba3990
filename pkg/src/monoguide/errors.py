"""Exception hierarchy.

Two families matter to callers: :class:`GeometryError` for numerically
impossible configurations and :class:`DataError` for malformed input files.
The CLI maps both to exit code 2.
"""


class MonoGuideError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(MonoGuideError, ValueError):
    pass


class PointBehindCamera(GeometryError):
    pass


class InvalidDepth(GeometryError):
    pass


class SingularIntrinsics(GeometryError):
    pass


class DegenerateHeight(GeometryError):
    pass


class DegenerateQuad(GeometryError):
    pass


class DataError(MonoGuideError, ValueError):
    pass


class UnknownClass(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ShapeMismatch(DataError):
    pass


class OutOfRange(DataError):
    pass


class UnknownMatrixKey(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ParseError(DataError):
    """Malformed input line. ``line`` and ``field`` are 1-based."""

    def __init__(self, message, line=None, field=None, source=None):
        self.message = message
        self.line = line
        self.field = field
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)

    def __reduce__(self):
        # keep the location when crossing process boundaries
        return type(self), (self.message, self.line, self.field, self.source)
