"""
Dataset models - Spike counts, task labels and trial structure
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ArgumentError, DataError, LabelError


class LabelKind(Enum):
    """How a label column is interpreted"""
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class LabelColumn:
    """One label column"""
    name: str
    kind: LabelKind
    n_classes: Optional[int] = None  # discrete only

    def __post_init__(self):
        if self.kind == LabelKind.DISCRETE and (self.n_classes is None or self.n_classes < 1):
            raise ArgumentError(f"discrete label {self.name!r} needs n_classes >= 1")

    def to_dict(self) -> dict:
        out = {'name': self.name, 'kind': self.kind.value}
        if self.kind == LabelKind.DISCRETE:
            out['n_classes'] = self.n_classes
        return out

    @staticmethod
    def from_dict(data: dict) -> 'LabelColumn':
        return LabelColumn(data['name'], LabelKind(data['kind']), data.get('n_classes'))


@dataclass(frozen=True)
class LabelSpec:
    """Ordered label columns; column i of the label matrix is columns[i]"""
    columns: Tuple[LabelColumn, ...] = ()

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def discrete_index(self) -> List[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == LabelKind.DISCRETE]

    @property
    def continuous_index(self) -> List[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == LabelKind.CONTINUOUS]

    @property
    def class_counts(self) -> Tuple[int, ...]:
        return tuple(self.columns[i].n_classes for i in self.discrete_index)

    @property
    def is_discrete_only(self) -> bool:
        return bool(self.columns) and not self.continuous_index

    @property
    def n_combinations(self) -> int:
        return int(np.prod(self.class_counts)) if self.class_counts else 1

    @property
    def network_input_dim(self) -> int:
        """Continuous values followed by one one-hot block per discrete column"""
        return len(self.continuous_index) + sum(self.class_counts)

    def split(self, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Validate a label matrix and return (class indices, continuous values)"""
        u = np.atleast_2d(np.asarray(labels, dtype=np.float64))
        if u.shape[1] != self.width:
            raise LabelError(f"expected {self.width} label columns, got {u.shape[1]}")
        cont = u[:, self.continuous_index]
        if not np.all(np.isfinite(cont)):
            raise LabelError("continuous labels must be finite")
        disc = u[:, self.discrete_index]
        if not np.all(np.isfinite(disc)) or np.any(disc != np.round(disc)):
            raise LabelError("discrete labels must be integer class indices")
        disc = disc.astype(np.int64)
        for j, n_classes in enumerate(self.class_counts):
            bad = np.flatnonzero((disc[:, j] < 0) | (disc[:, j] >= n_classes))
            if bad.size:
                name = self.columns[self.discrete_index[j]].name
                raise LabelError(f"label {name!r} row {int(bad[0])}: class {int(disc[bad[0], j])} "
                                 f"outside [0, {n_classes})")
        return disc, cont

    def combination_index(self, disc: np.ndarray) -> np.ndarray:
        """Flat index of each row's class combination"""
        if not self.class_counts:
            return np.zeros(len(disc), dtype=np.int64)
        return np.ravel_multi_index(tuple(disc.T), self.class_counts)

    def combination_labels(self) -> np.ndarray:
        """Label rows for every class combination, in flat-index order (discrete-only specs)"""
        combos = np.array(np.unravel_index(np.arange(self.n_combinations), self.class_counts)).T
        return combos.astype(np.float64)

    def network_input(self, disc: np.ndarray, cont: np.ndarray) -> np.ndarray:
        blocks = [cont]
        for j, n_classes in enumerate(self.class_counts):
            blocks.append(np.eye(n_classes)[disc[:, j]])
        return np.concatenate(blocks, axis=1)

    def to_list(self) -> List[dict]:
        return [c.to_dict() for c in self.columns]

    @staticmethod
    def from_list(items: Sequence[dict]) -> 'LabelSpec':
        return LabelSpec(tuple(LabelColumn.from_dict(dict(item)) for item in items))


@dataclass
class TrialStructure:
    """Per-row trial id and within-trial time index"""
    trial_id: np.ndarray
    time_index: np.ndarray

    def __post_init__(self):
        self.trial_id = np.asarray(self.trial_id, dtype=np.int64)
        self.time_index = np.asarray(self.time_index, dtype=np.int64)
        if self.trial_id.shape != self.time_index.shape:
            raise DataError("trial ids and time indices differ in length")
        for trial in np.unique(self.trial_id):
            times = np.sort(self.time_index[self.trial_id == trial])
            if not np.array_equal(times, np.arange(times.size)):
                raise DataError(f"trial {int(trial)}: time indices must be contiguous from 0")

    @property
    def trials(self) -> np.ndarray:
        return np.unique(self.trial_id)

    def rows_of(self, trial: int) -> np.ndarray:
        """Row indices of one trial ordered by time"""
        rows = np.flatnonzero(self.trial_id == trial)
        return rows[np.argsort(self.time_index[rows], kind='stable')]

    def trial_labels(self, labels: np.ndarray) -> Dict[int, tuple]:
        """Per-trial label (taken from the trial's first bin)"""
        labels = np.atleast_2d(labels)
        return {int(t): tuple(labels[self.rows_of(t)[0]]) for t in self.trials}


@dataclass
class Dataset:
    """Spike counts (N x n) with labels (N x d) and optional extras"""
    counts: np.ndarray
    labels: Optional[np.ndarray] = None
    label_spec: LabelSpec = field(default_factory=LabelSpec)
    trials: Optional[TrialStructure] = None
    true_latents: Optional[np.ndarray] = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.float64)
        if counts.ndim != 2 or counts.shape[0] == 0:
            raise DataError("counts must be a non-empty N x n matrix")
        bad = np.argwhere(~np.isfinite(counts) | (counts < 0) | (counts != np.round(counts)))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"counts row {int(r)} column {int(c)}: {counts[r, c]!r} is not a nonnegative integer")
        self.counts = counts
        n_rows = counts.shape[0]
        if self.labels is not None:
            self.labels = np.atleast_2d(np.asarray(self.labels, dtype=np.float64))
            if self.labels.shape[0] != n_rows:
                raise DataError(f"counts have {n_rows} rows but labels have {self.labels.shape[0]}")
            if self.label_spec.width:
                try:
                    self.label_spec.split(self.labels)
                except LabelError as exc:
                    raise DataError(str(exc)) from None
        if self.trials is not None and self.trials.trial_id.shape[0] != n_rows:
            raise DataError(f"counts have {n_rows} rows but trials have {self.trials.trial_id.shape[0]}")
        if self.true_latents is not None:
            self.true_latents = np.atleast_2d(np.asarray(self.true_latents, dtype=np.float64))
            if self.true_latents.shape[0] != n_rows:
                raise DataError(f"counts have {n_rows} rows but latents have {self.true_latents.shape[0]}")

    @property
    def n_rows(self) -> int:
        return self.counts.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.counts.shape[1]

    def subset(self, rows: np.ndarray) -> 'Dataset':
        trials = None
        if self.trials is not None:
            trials = _reindex_trials(self.trials, rows)
        return Dataset(
            counts=self.counts[rows],
            labels=None if self.labels is None else self.labels[rows],
            label_spec=self.label_spec,
            trials=trials,
            true_latents=None if self.true_latents is None else self.true_latents[rows],
        )

    def without_labels(self) -> 'Dataset':
        return Dataset(counts=self.counts, trials=self.trials, true_latents=self.true_latents)


def _reindex_trials(trials: TrialStructure, rows: np.ndarray) -> TrialStructure:
    """Trial structure of a row subset; time indices are renumbered within each kept trial"""
    ids = trials.trial_id[rows]
    times = trials.time_index[rows]
    renumbered = np.empty_like(times)
    for t in np.unique(ids):
        members = np.flatnonzero(ids == t)
        renumbered[members[np.argsort(times[members], kind='stable')]] = np.arange(members.size)
    return TrialStructure(ids, renumbered)


@dataclass(frozen=True)
class ColumnSupport:
    """Observed support of one label column: class values or a [low, high] range"""
    name: str
    kind: LabelKind
    values: Tuple[int, ...] = ()
    low: float = 0.0
    high: float = 0.0

    def to_dict(self) -> dict:
        if self.kind == LabelKind.DISCRETE:
            return {'name': self.name, 'kind': self.kind.value, 'values': list(self.values)}
        return {'name': self.name, 'kind': self.kind.value, 'low': self.low, 'high': self.high}

    @staticmethod
    def from_dict(data: dict) -> 'ColumnSupport':
        kind = LabelKind(data['kind'])
        if kind == LabelKind.DISCRETE:
            return ColumnSupport(data['name'], kind, values=tuple(int(v) for v in data['values']))
        return ColumnSupport(data['name'], kind, low=float(data['low']), high=float(data['high']))


@dataclass(frozen=True)
class LabelSupport:
    """Uniform label prior over the labels seen in training"""
    columns: Tuple[ColumnSupport, ...] = ()

    @staticmethod
    def from_labels(spec: LabelSpec, labels: np.ndarray) -> 'LabelSupport':
        u = np.atleast_2d(np.asarray(labels, dtype=np.float64))
        if u.shape[0] == 0:
            raise DataError("label support needs at least one row")
        columns = []
        for i, col in enumerate(spec.columns):
            if col.kind == LabelKind.DISCRETE:
                values = tuple(int(v) for v in np.unique(u[:, i]))
                columns.append(ColumnSupport(col.name, col.kind, values=values))
            else:
                columns.append(ColumnSupport(col.name, col.kind, low=float(u[:, i].min()), high=float(u[:, i].max())))
        return LabelSupport(tuple(columns))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """size x d label draws, independent across columns"""
        out = np.empty((size, len(self.columns)))
        for i, col in enumerate(self.columns):
            if col.kind == LabelKind.DISCRETE:
                out[:, i] = rng.choice(np.asarray(col.values, dtype=np.float64), size=size)
            else:
                out[:, i] = rng.uniform(col.low, col.high, size=size)
        return out

    def to_list(self) -> List[dict]:
        return [c.to_dict() for c in self.columns]

    @staticmethod
    def from_list(items: Sequence[dict]) -> 'LabelSupport':
        return LabelSupport(tuple(ColumnSupport.from_dict(dict(item)) for item in items))
