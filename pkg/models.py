from datetime import datetime
from pathlib import Path

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

Base = declarative_base()


class RunRecord(Base):
    """One exported experiment (a run, a reproduction cell or a grid search)."""
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    command = Column(String(20), nullable=False)  # 'run', 'reproduce' or 'grid'
    environment = Column(String(40), nullable=False)
    algorithm = Column(String(20), nullable=False)
    num_episodes = Column(Integer, nullable=False)
    num_seeds = Column(Integer, nullable=False)
    created_date = Column(DateTime, default=datetime.utcnow)

    # Results
    final_mean_regret = Column(Float, nullable=True)
    final_ci_half_width = Column(Float, nullable=True)
    output_dir = Column(String(512), nullable=False)
    config_yaml = Column(Text, nullable=True)

    trials = relationship('GridTrialRecord', back_populates='run', cascade='all, delete-orphan')

    def __repr__(self):
        return f'<RunRecord {self.id}: {self.command} {self.environment}/{self.algorithm}>'


class GridTrialRecord(Base):
    """One assignment evaluated by a grid search."""
    __tablename__ = 'grid_trials'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('runs.id'), nullable=False)
    rank = Column(Integer, nullable=False)
    assignment = Column(Text, nullable=False)  # JSON object
    metric = Column(Float, nullable=False)

    run = relationship('RunRecord', back_populates='trials')

    def __repr__(self):
        return f'<GridTrialRecord {self.id}: run {self.run_id} rank {self.rank}>'


def _uri(db_path) -> str:
    return f'sqlite:///{Path(db_path)}'


def init_db(db_path):
    """Create the ledger tables if needed."""
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(_uri(db_path))
    Base.metadata.create_all(engine)
    return engine


def get_session(db_path):
    """Get a ledger session."""
    engine = init_db(db_path)
    Session = sessionmaker(bind=engine)
    return Session()
