from __future__ import annotations
from threading import Thread, Lock, RLock
from typing import Any, Dict, List, Union, Optional
from logging import Logger
from datetime import datetime
from functools import wraps
import logging
import traceback
from pydantic import BaseModel, ConfigDict

from .constants import Status, Result


module_logger = logging.getLogger(__name__)


class TaskModel(BaseModel):
    '''
    A Pydantic Model for validation and serialization of a BaseTask
    '''
    model_config = ConfigDict(from_attributes=True)

    name: str
    type: Optional[str]
    status: str
    predecessors: List[str]
    successors: List[str]



class Loggable:
    def __init__(self, loggers: Union[Logger, List[Logger]] = None) -> None:
        if loggers is None:
            self.loggers: List[Logger] = list()
        else:
            if isinstance(loggers, Logger):
                self.loggers: List[Logger] = [loggers]
            else:
                self.loggers: List[Logger] = list(loggers)

    def add_loggers(self, loggers: Union[Logger, List[Logger]]) -> None:
        if isinstance(loggers, Logger):
            self.loggers.append(loggers)
        else:
            self.loggers.extend(loggers)

    def log(self, message: str, level="DEBUG") -> None:
        # without attached loggers, messages go to this module's logger; stdout is reserved for reports
        loggers = self.loggers if len(self.loggers) > 0 else [module_logger]
        for logger in loggers:
            if level == "DEBUG":
                logger.debug(message)
            elif level == "INFO":
                logger.info(message)
            elif level == "WARNING":
                logger.warning(message)
            elif level == "ERROR":
                logger.error(message)
            elif level == "CRITICAL":
                logger.critical(message)
            else:
                raise ValueError(f"Invalid log level: {level}")



class BaseTask(Loggable, Thread):
    """
    A unit of work in a ProbePipeline. The task runs once in its own thread;
    predecessors are guaranteed to have finished before it starts.
    """
    def __init__(
        self, name: str, predecessors: List[BaseTask] = None,
        loggers: Union[Logger, List[Logger]] = None
    ) -> None:
        self._status_lock = Lock()
        self._status = Status.OFF

        if predecessors is None:
            predecessors = list()

        self.predecessors = predecessors
        self.successors: List[BaseTask] = list()
        self.result: Optional[Result] = None
        self.exception: Optional[BaseException] = None

        Loggable.__init__(self, loggers)
        Thread.__init__(self, name=name)

    def __hash__(self) -> int:
        return hash(self.name)

    def __repr__(self) -> str:
        return f"'Task(name: {self.name})'"

    def model(self):
        return TaskModel(
            name = self.name,
            type = type(self).__name__,
            status = repr(self.status),
            predecessors = [n.name for n in self.predecessors],
            successors = [n.name for n in self.successors]
        )

    @property
    def status(self):
        while True:
            with self._status_lock:
                return self._status

    @status.setter
    def status(self, value: Status):
        while True:
            with self._status_lock:
                self._status = value
                break

    def log_exception(func):
        @wraps(func)
        def wrapper(self, *args, **kwargs):
            try:
                ret = func(self, *args, **kwargs)
                return ret
            except Exception as e:
                self.log(f"Error in method '{func.__name__}' of task '{self.name}': {traceback.format_exc()}", level="ERROR")
                self.exception = e
                self.status = Status.ERROR
                return
        return wrapper

    @log_exception
    def setup(self) -> None:
        """
        override to prepare inputs that do not depend on other tasks.
        """
        self.status = Status.INIT

    def execute(self) -> bool:
        """
        the work of the task; return True on success, False on failure.
        """
        raise NotImplementedError

    @log_exception
    def on_success(self) -> None:
        """override to react to execute() returning True."""
        pass

    @log_exception
    def on_failure(self) -> None:
        """override to react to execute() returning False."""
        pass

    @log_exception
    def on_error(self, e: Exception) -> None:
        """override to react to execute() raising; the traceback is already logged."""
        pass

    def run(self) -> None:
        self.status = Status.RUNNING

        try:
            if self.execute():
                self.result = Result.SUCCESS
                self.on_success()
            else:
                self.result = Result.FAILURE
                self.on_failure()

        except Exception as e:
            self.log(f"Error executing task '{self.name}': {traceback.format_exc()}", level="ERROR")
            self.exception = e
            self.result = Result.ERROR
            self.on_error(e)

        if self.status != Status.ERROR:
            self.status = Status.EXITED



class BaseMetadataStore(Loggable):
    """
    Base class for metadata stores.
    A metadata store records every CLI invocation as a run, together with its parameters,
    scalar metrics, string tags and the artifacts written to the run directory.
    """
    def __init__(self, name: str, uri: str, loggers: Union[Logger, List[Logger]] = None) -> None:
        super().__init__(loggers)
        self.name = name
        self.uri = uri
        self.resource_lock = RLock()

    def metadata_accessor(func):
        @wraps(func)
        def wrapper(self, *args, **kwargs):
            while True:
                with self.resource_lock:
                    result = func(self, *args, **kwargs)
                    return result
        return wrapper

    def setup(self) -> None:
        raise NotImplementedError

    @metadata_accessor
    def log_metrics(self, **kwargs) -> None:
        pass

    @metadata_accessor
    def log_params(self, **kwargs) -> None:
        pass

    @metadata_accessor
    def set_tags(self, **kwargs) -> None:
        pass

    @metadata_accessor
    def record_artifact(self, location: str, kind: str) -> None:
        pass

    @metadata_accessor
    def start_run(self, command: str) -> int:
        """
        Override to specify how to create a run in the metadata store.
        """
        raise NotImplementedError

    @metadata_accessor
    def end_run(self, exit_code: int) -> None:
        """
        Override to specify how to end a run in the metadata store.
        """
        raise NotImplementedError



class BaseResource(Loggable):
    """
    Base class for output resources. A resource owns a location and records every artifact
    it writes with the metadata store, if one is attached.
    """
    def __init__(
        self, name: str, resource_path: str, metadata_store: BaseMetadataStore = None,
        loggers: Union[Logger, List[Logger]] = None
    ) -> None:
        super().__init__(loggers)
        self.name = name
        self.resource_path = resource_path
        self.metadata_store = metadata_store
        self.resource_lock = RLock()

    def resource_accessor(func):
        @wraps(func)
        def wrapper(self, *args, **kwargs):
            while True:
                with self.resource_lock:
                    result = func(self, *args, **kwargs)
                    return result
        return wrapper

    def setup(self) -> None:
        raise NotImplementedError

    def record_artifact(self, location: str, kind: str) -> None:
        if self.metadata_store is not None:
            self.metadata_store.record_artifact(location, kind)
        self.log(f"'{self.name}' recorded {kind} artifact {location} at {datetime.now()}")

    def list_artifacts(self) -> List[str]:
        raise NotImplementedError

    def load_artifact(self, artifact_path: str) -> Any:
        raise NotImplementedError
