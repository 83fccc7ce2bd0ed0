from logging import Logger
from typing import Any, Dict, List, Union
from sqlalchemy import create_engine, Column, Integer, String, DateTime, Float
from sqlalchemy.orm import declarative_base, sessionmaker, scoped_session
from datetime import datetime
import os
from contextlib import contextmanager
import traceback

from ..engine.base import BaseMetadataStore, Loggable



Base = declarative_base()

class Run(Base):
    __tablename__ = 'runs'
    id = Column(Integer, primary_key=True)
    command = Column(String)
    start_time = Column(DateTime, default=datetime.utcnow)
    end_time = Column(DateTime)
    exit_code = Column(Integer)

    def as_dict(self):
       return {c.name: getattr(self, c.name) for c in self.__table__.columns}

class Metric(Base):
    __tablename__ = 'metrics'
    id = Column(Integer, primary_key=True)
    run_id = Column(Integer)
    key = Column(String)
    value = Column(Float)

    def as_dict(self):
       return {c.name: getattr(self, c.name) for c in self.__table__.columns}

class Param(Base):
    __tablename__ = 'params'
    id = Column(Integer, primary_key=True)
    run_id = Column(Integer)
    key = Column(String)
    value = Column(String)

    def as_dict(self):
       return {c.name: getattr(self, c.name) for c in self.__table__.columns}

class Tag(Base):
    __tablename__ = 'tags'
    id = Column(Integer, primary_key=True)
    run_id = Column(Integer)
    key = Column(String)
    value = Column(String)

    def as_dict(self):
       return {c.name: getattr(self, c.name) for c in self.__table__.columns}

class Artifact(Base):
    __tablename__ = 'artifacts'
    id = Column(Integer, primary_key=True)
    run_id = Column(Integer)
    location = Column(String)
    kind = Column(String)
    created_at = Column(DateTime, default=datetime.utcnow)

    def as_dict(self):
       return {c.name: getattr(self, c.name) for c in self.__table__.columns}


@contextmanager
def scoped_session_manager(session_factory: sessionmaker, owner: Loggable) -> scoped_session: # type: ignore
    ScopedSession = scoped_session(session_factory)
    session = ScopedSession()

    try:
        yield session
    except Exception as e:
        owner.log(traceback.format_exc(), level="ERROR")
        session.rollback()
        owner.log(f"{owner.name} rolled back session.", level="ERROR")
        raise e
    finally:
        ScopedSession.close()



class SqliteMetadataStore(BaseMetadataStore):
    """
    Run metadata in sqlite:///<run_dir>/metadata.db; every CLI invocation with a run directory is one run.
    """
    def __init__(self, name: str, uri: str, loggers: Union[Logger, List[Logger]] = None) -> None:
        super().__init__(name, uri, loggers)
        self.run_id = None

    def setup(self) -> None:
        path = self.uri[len('sqlite:///'):] if self.uri.startswith('sqlite:///') else self.uri
        path = os.path.dirname(path)
        if path != '' and os.path.exists(path) is False:
            os.makedirs(path, exist_ok=True)

        # Create an engine that stores data in the run directory's sqlite file.
        engine = create_engine(f'{self.uri}', connect_args={"check_same_thread": False})

        # Create all tables in the engine (this is equivalent to "Create Table" statements in raw SQL).
        Base.metadata.create_all(engine)

        # Create a sessionmaker, binding it to the engine
        self.session_factory = sessionmaker(bind=engine)

    def get_run_id(self) -> int:
        if self.run_id is None:
            raise ValueError(f"metadata store '{self.name}' has no active run")
        return self.run_id

    def get_runs(self) -> List[Dict]:
        with scoped_session_manager(self.session_factory, self) as session:
            runs = session.query(Run).all()
            runs = [run.as_dict() for run in runs]
            return runs

    @BaseMetadataStore.metadata_accessor
    def log_metrics(self, **kwargs) -> None:
        with scoped_session_manager(self.session_factory, self) as session:
            run_id = self.get_run_id()
            for key, value in kwargs.items():
                if value is None:
                    continue
                metric = Metric(run_id=run_id, key=key, value=float(value))
                session.add(metric)
            session.commit()

    @BaseMetadataStore.metadata_accessor
    def log_params(self, **kwargs) -> None:
        with scoped_session_manager(self.session_factory, self) as session:
            run_id = self.get_run_id()
            for key, value in kwargs.items():
                param = Param(run_id=run_id, key=key, value=str(value))
                session.add(param)
            session.commit()

    @BaseMetadataStore.metadata_accessor
    def set_tags(self, **kwargs) -> None:
        with scoped_session_manager(self.session_factory, self) as session:
            run_id = self.get_run_id()
            for key, value in kwargs.items():
                tag = Tag(run_id=run_id, key=key, value=str(value))
                session.add(tag)
            session.commit()

    @BaseMetadataStore.metadata_accessor
    def record_artifact(self, location: str, kind: str) -> None:
        with scoped_session_manager(self.session_factory, self) as session:
            artifact = Artifact(run_id=self.get_run_id(), location=location, kind=kind)
            session.add(artifact)
            session.commit()

    def _rows(self, table, run_id: int = None) -> List[Dict[str, Any]]:
        with scoped_session_manager(self.session_factory, self) as session:
            query = session.query(table)
            if run_id is not None:
                query = query.filter_by(run_id=run_id)
            return [row.as_dict() for row in query.all()]

    def get_metrics(self, run_id: int = None) -> List[Dict]:
        return self._rows(Metric, run_id)

    def get_params(self, run_id: int = None) -> List[Dict]:
        return self._rows(Param, run_id)

    def get_tags(self, run_id: int = None) -> List[Dict]:
        return self._rows(Tag, run_id)

    def get_artifacts(self, run_id: int = None) -> List[Dict]:
        return self._rows(Artifact, run_id)

    @BaseMetadataStore.metadata_accessor
    def start_run(self, command: str) -> int:
        with scoped_session_manager(self.session_factory, self) as session:
            run = Run(command=command)
            session.add(run)
            session.commit()
            self.run_id = run.id
            self.log(f"--------------------------- started run {run.id} ({command}) at {datetime.now()}")
            return run.id

    @BaseMetadataStore.metadata_accessor
    def end_run(self, exit_code: int) -> None:
        with scoped_session_manager(self.session_factory, self) as session:
            run: Run = session.query(Run).filter_by(id=self.get_run_id()).first()
            run.end_time = datetime.utcnow()
            run.exit_code = exit_code
            session.commit()
            self.log(f"--------------------------- ended run {run.id} with exit code {exit_code} at {datetime.now()}")
        self.run_id = None
