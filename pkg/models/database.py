"""Run store on SQLite.

Every experiment run gets one row in experiment_runs and one row per
acceptance check in check_results. The database lives next to the reports
at <output_dir>/runs.db; wall-clock timing is kept here rather than in the
report so reports stay byte-identical across repeated runs.
"""
from sqlalchemy import create_engine, Column, Integer, Float, DateTime, String, ForeignKey, Boolean, Text
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker, relationship
from datetime import datetime
from pathlib import Path
from typing import Dict
import logging

logger = logging.getLogger(__name__)

DATABASE_FILE = "runs.db"

Base = declarative_base()

_engines: Dict[str, Engine] = {}


class ExperimentRun(Base):
    """One execution of a pipeline with a fixed (config, seed)."""
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    experiment_id = Column(String, index=True, nullable=False)
    pipeline = Column(String, nullable=False)
    map_name = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    passed = Column(Boolean, default=False, nullable=False)
    report_path = Column(String, nullable=True)
    config_json = Column(Text, nullable=True)
    started_at = Column(DateTime, default=datetime.utcnow, nullable=False)
    wall_clock_seconds = Column(Float, nullable=True)

    checks = relationship("CheckResult", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<ExperimentRun(id={self.id}, experiment_id={self.experiment_id}, pipeline={self.pipeline}, passed={self.passed})>"


class CheckResult(Base):
    """Measured value, tolerance and verdict of one check of a run."""
    __tablename__ = "check_results"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False, index=True)
    name = Column(String, nullable=False)
    measured = Column(Float, nullable=True)
    tolerance = Column(Float, nullable=True)
    passed = Column(Boolean, default=False, nullable=False)
    error_code = Column(String, nullable=True)  # set when the check raised instead of measuring

    run = relationship("ExperimentRun", back_populates="checks")

    def __repr__(self):
        return f"<CheckResult(id={self.id}, name={self.name}, passed={self.passed})>"


def get_engine(output_dir) -> Engine:
    """Engine for <output_dir>/runs.db, created once per directory."""
    path = Path(output_dir) / DATABASE_FILE
    key = str(path.resolve())
    if key not in _engines:
        path.parent.mkdir(parents=True, exist_ok=True)
        _engines[key] = create_engine(f"sqlite:///{path}", connect_args={"check_same_thread": False})
    return _engines[key]


def init_db(output_dir) -> Engine:
    """Create the tables if they do not exist yet."""
    engine = get_engine(output_dir)
    Base.metadata.create_all(bind=engine)
    logger.debug(f"run store ready at {engine.url}")
    return engine


def get_session(output_dir):
    """New session bound to the run store of output_dir."""
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=init_db(output_dir))
    return SessionLocal()
