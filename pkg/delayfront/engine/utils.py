from threading import Lock
from datetime import datetime
from pydantic import BaseModel
from typing import Dict, List, Optional

from .constants import Result



class ProbeRecord(BaseModel):
    name: str
    c: float
    exists: bool
    strategy: Optional[str] = None
    outcome: Optional[str] = None
    iterations: int = 0
    timestamp: datetime
    result: Result = None

    def __repr__(self) -> str:
        return f"ProbeRecord (name: {self.name}, c: {self.c:.6f}, exists: {self.exists}, strategy: {self.strategy}, outcome: {self.outcome})"



class ResultTable:
    """ProbeRecords by probe name; filled by the pipeline as each generation is joined."""
    def __init__(self) -> None:
        self._records: Dict[str, ProbeRecord] = dict()
        self._lock = Lock()

    def __setitem__(self, name: str, record: ProbeRecord) -> None:
        with self._lock:
            self._records[name] = record

    def __getitem__(self, name: str) -> ProbeRecord:
        with self._lock:
            return self._records[name]

    def keys(self) -> List[str]:
        with self._lock:
            return list(self._records)
