from enum import Enum

class Status(Enum):
    OFF = 14
    INIT = 12
    RUNNING = 6
    SKIPPED = 7
    EXITED = 11
    ERROR = 2

    def __repr__(self) -> str:
        status_words = {
            Status.RUNNING: "RUNNING",
            Status.SKIPPED: "SKIPPED",
            Status.EXITED: "EXITED",
            Status.INIT: "INITIALIZING",
            Status.OFF: "OFF",
            Status.ERROR: "ERROR",
        }
        return status_words[self]
    
    def __int__(self) -> int:
        return self.value
    
    def __eq__(self, other: 'Status') -> bool:
        if isinstance(other, type(self)) and other.value == self.value:
            return True
        else:
            return False
    
    def __hash__(self) -> int:
        return super().__hash__()


class Result(Enum):
    FAILURE = 0
    SUCCESS = 1
    ERROR = 2
    
    def __repr__(self) -> str:
        status_words = {
            Result.FAILURE: "FAILURE",
            Result.SUCCESS: "SUCCESS",
            Result.ERROR: "ERROR",
        }
        return status_words[self]

    def __int__(self) -> int:
        return self.value
    
    def __eq__(self, other: 'Result') -> bool:
        if isinstance(other, type(self)) and other.value == self.value:
            return True
        else:
            return False
    
    def __hash__(self) -> int:
        return super().__hash__()


# domain enums below serialize by value in reports and configs

class Family(str, Enum):
    RATIONAL_KPP = "RationalKPP"
    MONOTONE_SPLINE = "MonotoneSpline"
    USER_TABLE = "UserTable"
    LINEAR = "Linear"
    MINORANT = "Minorant"


class Side(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Strategy(str, Enum):
    KPP_UPPER = "KppUpper"
    CONTINUATION_UPPER = "ContinuationUpper"
    KAPPA_UPPER = "KappaUpper"
    COLLAPSE_PROBE = "CollapseProbe"


class Outcome(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    COLLAPSED = "Collapsed"
    ESCAPED = "Escaped"
    STAGNATED = "Stagnated"


class Classification(str, Enum):
    PULLED = "Pulled"
    PUSHED = "Pushed"
    INCONCLUSIVE = "Inconclusive"


class Model(str, Enum):
    CONTINUUM = "ContinuumPDE"
    LATTICE = "Lattice"


class Init(str, Enum):
    STEP = "Step"
    SEED_BUMP = "SeedBump"
    PROFILE_IMPORT = "ProfileImport"


class KernelKind(str, Enum):
    FINITE = "finite"
    GEOMETRIC = "geometric"
    TABLE = "table"
