import os
from typing import Any, Iterable, List, Optional, Union
from datetime import datetime
from logging import Logger

from pydantic import BaseModel, ConfigDict
import networkx as nx

from .base import BaseTask, TaskModel
from .constants import Status, Result
from .errors import InvalidProbeDependencyError
from .utils import ProbeRecord, ResultTable



class PipelineModel(BaseModel):
    '''
    A Pydantic Model for validation and serialization of a ProbePipeline
    '''
    model_config = ConfigDict(from_attributes=True)

    jobs: int
    tasks: List[TaskModel]



class ProbeTask(BaseTask):
    """
    A task that probes one wave speed c. Predecessors are probes at lower speeds whose outputs
    may seed this probe (continuation). Subclasses implement execute() and store what they
    computed in self.output.
    """
    def __init__(
        self, name: str, c: float, predecessors: List["ProbeTask"] = None,
        requires_seed: bool = False, loggers: Union[Logger, List[Logger]] = None
    ) -> None:
        super().__init__(name, predecessors, loggers)
        self.c = float(c)
        self.requires_seed = requires_seed
        self.output: Any = None

    def __repr__(self) -> str:
        return f"'ProbeTask(name: {self.name}, c: {self.c:.6f})'"

    def seeds(self) -> List[Any]:
        return [p.output for p in self.predecessors if p.result == Result.SUCCESS and p.output is not None]

    def record(self) -> ProbeRecord:
        strategy = getattr(self.output, "strategy", None)
        outcome = getattr(self.output, "outcome", None)
        report = getattr(self.output, "report", None)
        return ProbeRecord(
            name = self.name,
            c = self.c,
            exists = bool(getattr(self.output, "exists", False)),
            strategy = getattr(strategy, "value", strategy),
            outcome = getattr(outcome, "value", outcome),
            iterations = getattr(report, "iterations", 0),
            timestamp = datetime.now(),
            result = self.result
        )

    def on_success(self) -> None:
        self.log(f"speed task '{self.name}' succeeded at c = {self.c:.6f}", level="INFO")

    def on_failure(self) -> None:
        self.log(f"speed task '{self.name}' failed at c = {self.c:.6f}", level="INFO")

    def on_error(self, e: Exception) -> None:
        self.log(f"speed task '{self.name}' raised {type(e).__name__} at c = {self.c:.6f}", level="WARNING")

    def run(self) -> None:
        if self.requires_seed is True and len(self.seeds()) == 0:
            self.log(f"Skipping probe '{self.name}': no predecessor produced a seed", level="WARNING")
            self.result = Result.FAILURE
            self.status = Status.SKIPPED
            return
        super().run()



class ProbePipeline:
    """
    ProbePipeline is in charge of running a set of speed probes; this includes:
    1. Ensuring the probes form a DAG whose edges point from lower to higher speed.
    2. Setting up every probe, then running the probes generation by generation
       (networkx topological generations) with at most `jobs` live threads.
    3. Collecting one ProbeRecord per probe in a ResultTable.
    """

    def __init__(
        self,
        tasks: Iterable[ProbeTask],
        jobs: Optional[int] = None,
        loggers: Union[Logger, List[Logger]] = None
    ) -> None:

        tasks = list(tasks)
        self.jobs = jobs if jobs is not None else (os.cpu_count() or 1)
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")

        self.task_dict = dict()
        self.graph = nx.DiGraph()
        self.results = ResultTable()

        # Add tasks into graph
        for task in tasks:
            if task.name in self.task_dict:
                raise InvalidProbeDependencyError(f"Duplicate probe name '{task.name}'")
            self.graph.add_node(task)
            self.task_dict[task.name] = task

        # Add edges into graph
        for task in tasks:
            for predecessor in task.predecessors:
                if predecessor not in self.graph:
                    raise InvalidProbeDependencyError(f"Predecessor '{predecessor.name}' of '{task.name}' is not part of the pipeline")
                self.graph.add_edge(predecessor, task)

        # set successors for all tasks
        for task in tasks:
            task.successors = list(self.graph.successors(task))

        # Set logger for all tasks
        if loggers is not None:
            for task in tasks:
                task.add_loggers(loggers)

        # check 1: make sure graph is acyclic (i.e., check if graph is a DAG)
        if not nx.is_directed_acyclic_graph(self.graph):
            raise InvalidProbeDependencyError("Probe dependencies do not form a Directed Acyclic Graph")

        # check 2: make sure no two probes share a speed
        speeds = sorted(task.c for task in tasks)
        for lo, hi in zip(speeds, speeds[1:]):
            if hi == lo:
                raise InvalidProbeDependencyError(f"Two probes share the speed c = {lo}")

        # check 3: continuation runs upward in c, so every edge must increase the speed
        for predecessor, task in self.graph.edges:
            if predecessor.c >= task.c:
                raise InvalidProbeDependencyError(
                    f"Probe '{task.name}' (c = {task.c}) cannot be seeded by '{predecessor.name}' (c = {predecessor.c})"
                )

        self.tasks: List[ProbeTask] = list(nx.topological_sort(self.graph))

    def __getitem__(self, key):
        return self.task_dict.get(key, None)

    def model(self):
        return PipelineModel(jobs=self.jobs, tasks=[t.model() for t in self.tasks])

    def setup_tasks(self, tasks: List[ProbeTask]):
        """
        Sets up all the tasks in the pipeline.
        """
        for task in tasks:
            task.log(f"--------------------------- started setup phase of {task.name} at {datetime.now()}")
            task.setup()
            task.log(f"--------------------------- finished setup phase of {task.name} at {datetime.now()}")

    def run(self) -> ResultTable:
        """
        Runs all the probes; a generation starts only after the previous one has been joined.
        """
        self.setup_tasks(self.tasks)

        for generation in nx.topological_generations(self.graph):
            generation = sorted(generation, key=lambda task: task.c)

            for start in range(0, len(generation), self.jobs):
                batch = generation[start:start + self.jobs]

                # Note: since task is a subclass of Thread, calling start() will run the run() method
                for task in batch:
                    task.log(f"--------------------------- started probe {task.name} at {datetime.now()}")
                    task.start()

                for task in batch:
                    task.join()
                    self.results[task.name] = task.record()
                    task.log(f"--------------------------- finished probe {task.name} at {datetime.now()}")

        return self.results
