"""Exception types shared across the workbench.

Every failure mode that callers are expected to branch on gets its own
class; messages always carry the offending key so ingestion aborts are
actionable.
"""

from __future__ import annotations


class RouterLabError(Exception):
    """Base class for all workbench errors."""


# --- log store / ingestion -------------------------------------------------

class InvalidRecordError(RouterLabError):
    """A log record or price entry violates its field invariants."""


class MissingPriceError(RouterLabError):
    def __init__(self, model: str):
        super().__init__(f"no price entry for model {model!r}")
        self.model = model


class DuplicateRecordError(RouterLabError):
    def __init__(self, key: tuple[str, int, str]):
        super().__init__(f"duplicate record for (dataset, index, model) = {key!r}")
        self.key = key


class IncompleteSampleError(RouterLabError):
    def __init__(self, sample: tuple[str, int], missing: list[str]):
        super().__init__(
            f"sample {sample!r} has no record for models {missing!r}; "
            "the store is dense and partial coverage is rejected"
        )
        self.sample = sample
        self.missing = missing


class TooFewSamplesError(RouterLabError):
    def __init__(self, dataset: str, count: int, minimum: int):
        super().__init__(
            f"dataset {dataset!r} has {count} samples; need at least {minimum} to split"
        )
        self.dataset = dataset
        self.count = count


# --- embedding container ----------------------------------------------------

class FormatError(RouterLabError):
    """Embedding/checkpoint file does not conform to the binary container."""


class RowCountMismatchError(RouterLabError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"embedding table has {actual} rows, store has {expected} samples")
        self.expected = expected
        self.actual = actual


class NonFiniteValueError(RouterLabError):
    """NaN or Inf encountered where finite values are required."""


# --- soft labels -------------------------------------------------------------

class NoCorrectModelError(RouterLabError):
    """Row has no correct model; it carries no training target and must be skipped."""


class UnsupportedArityError(RouterLabError):
    def __init__(self, arity: int):
        super().__init__(
            f"optimality verification supports 2-4 correct models, got {arity}"
        )
        self.arity = arity


# --- routers -----------------------------------------------------------------

class EmptySplitError(RouterLabError):
    """A split required to be non-empty has no samples."""


class EmptyTrainSetError(RouterLabError):
    """Neighbor-based router trained with zero usable samples."""


class AllCentroidsEmptyError(RouterLabError):
    """No model received a single assigned sample during centroid training."""


class DimMismatchError(RouterLabError):
    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"{what}: expected dim {expected}, got {actual}")


class NonFiniteLossError(RouterLabError):
    def __init__(self, step: int):
        super().__init__(f"training loss became non-finite at step {step}")
        self.step = step


class DivergedGradientError(RouterLabError):
    def __init__(self, step: int, norm: float):
        super().__init__(f"gradient norm {norm:.3e} diverged at step {step}")
        self.step = step
        self.norm = norm


# --- metrics / evaluation -----------------------------------------------------

class DecisionCountMismatchError(RouterLabError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"got {actual} decisions for {expected} test samples")


class ZeroDurationError(RouterLabError):
    """Throughput measured over a non-positive wall time."""


# --- pareto --------------------------------------------------------------------

class EmptyInputError(RouterLabError):
    """Operation requires at least one point."""


class InsufficientPointsError(RouterLabError):
    def __init__(self, needed: int, got: int):
        super().__init__(f"frontier fit needs {needed} points with distinct costs, got {got}")


# --- synth / config --------------------------------------------------------------

class InvalidConfigError(RouterLabError):
    """Synthetic benchmark configuration violates its invariants."""


# --- cli / artifacts ---------------------------------------------------------------

class MissingArtifactError(RouterLabError):
    def __init__(self, path: str):
        super().__init__(f"required artifact not found: {path}")
        self.path = path


class ArtifactHashError(RouterLabError):
    def __init__(self, path: str):
        super().__init__(f"artifact {path} does not match the hash recorded in the manifest")
        self.path = path
