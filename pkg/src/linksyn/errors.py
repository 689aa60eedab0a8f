"""Exception hierarchy shared across the package.

Every domain failure raised by linksyn derives from LinksynError, so callers
(CLI, tests) can separate our failures from programming errors.
"""
from __future__ import annotations


class LinksynError(Exception):
    """Base class for all linksyn domain errors."""


# --- mechanism graph / encoding ---

class MalformedGraph(LinksynError):
    """A mechanism graph violates a structural invariant."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


class IllegalAlphabet(LinksynError):
    """A feature-matrix entry lies outside its slot's legal value set."""

    def __init__(self, row: int, col: int, value: float):
        super().__init__(f"illegal value {value!r} at row {row}, col {col}")
        self.row = row
        self.col = col
        self.value = value


class NonPrefixValidity(LinksynError):
    """A valid row appears after an invalid row."""

    def __init__(self, row: int):
        super().__init__(f"valid row {row} follows an invalid row")
        self.row = row


class PrefixTooShort(LinksynError):
    """Requested prefix would drop the motor pair (needs >= 2 nodes)."""


# --- kinematics ---

class Overconstrained(LinksynError):
    """A joint is tied to more than two known joints (or carries an unusable link)."""

    def __init__(self, node: int, message: str | None = None):
        super().__init__(message or f"node {node} is overconstrained")
        self.node = node


class NonDyadic(LinksynError):
    """Unknown joints remain but none has exactly two known neighbors."""

    def __init__(self, remaining: tuple[int, ...]):
        super().__init__(f"non-dyadic structure; unsolved nodes {list(remaining)}")
        self.remaining = remaining


class BranchDefect(LinksynError):
    """Triangle inequality violated at some motor angle: the linkage locks."""

    def __init__(self, node: int, angle_index: int | None = None,
                 theta: float | None = None, cos_phi: float | None = None):
        where = "" if theta is None else f" at theta={theta:.6f} (angle {angle_index})"
        super().__init__(f"branch defect solving node {node}{where}")
        self.node = node
        self.angle_index = angle_index
        self.theta = theta
        self.cos_phi = cos_phi


class DegenerateBase(LinksynError):
    """The two known joints of a trilateration step coincide."""

    def __init__(self, node: int, angle_index: int | None = None, theta: float | None = None):
        where = "" if theta is None else f" at theta={theta:.6f} (angle {angle_index})"
        super().__init__(f"degenerate base solving node {node}{where}")
        self.node = node
        self.angle_index = angle_index
        self.theta = theta


# --- curves ---

class DegenerateCurve(LinksynError):
    """Curve has no spatial extent (or zero arc length)."""


# --- neural network / diffusion ---

class DimMismatch(LinksynError):
    """Array shapes disagree with the declared layer sizes."""


class BadSchedule(LinksynError):
    """Noise-schedule parameters outside their legal ranges."""


class StepOutOfRange(LinksynError):
    """Diffusion timestep outside [0, T)."""


class EmptyBatch(LinksynError):
    """A training batch contained no items."""


# --- data generation / files ---

class GenerationExhausted(LinksynError):
    """Random mechanism construction failed within the attempt budget."""


class ParseError(LinksynError):
    """A serialized mechanism or dataset file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        detail = message
        if line is not None:
            detail = f"line {line}: {detail}"
        if field is not None:
            detail = f"{detail} (field {field!r})"
        super().__init__(detail)
        self.line = line
        self.field = field


class InvariantViolation(LinksynError):
    """A loaded record fails its integrity re-check."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"record {index}: {message}")
        self.index = index
