"""Experiment harness: manifests, speaker splits, training, frame-level scoring,
seed-averaged trials and grid search.

Manifest files are tab-separated, one utterance per line::

    utterance_id <TAB> audio_or_feature_path <TAB> label_path <TAB> speaker_id [<TAB> split]

``split`` is one of ``train``, ``val``, ``test``.  Relative paths resolve
against the manifest's directory; blank lines and ``#`` comments are
ignored.
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, EmptyInputError, ESNError, ManifestError, ShapeError
from .features import extract_features, stack_context
from .io import read_features, read_labels, read_wav
from .readout import (
    ReadoutWeights,
    RidgeAccumulator,
    RidgeConfig,
    classify,
    extended_rows,
    one_hot,
    predict,
)
from .reservoir import ReservoirModel, run_sequence, trainable_parameters

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


# -- manifests ------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    path: Path
    label_path: Path
    speaker: str
    split: str | None = None


@dataclass
class DatasetManifest:
    entries: list
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.entries)

    def speakers(self) -> list[str]:
        return sorted({e.speaker for e in self.entries})

    def select(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def validate(self) -> None:
        seen, owner = set(), {}
        for i, e in enumerate(self.entries, 1):
            if e.utterance_id in seen:
                raise ManifestError(f"entry {i}: duplicate utterance id {e.utterance_id!r}")
            seen.add(e.utterance_id)
            if e.split is None:
                continue
            prev = owner.setdefault(e.speaker, e.split)
            if prev != e.split:
                raise ManifestError(
                    f"entry {i}: speaker {e.speaker!r} appears in both {prev!r} and {e.split!r} splits"
                )


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    root = path.parent
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    entries, ids, owner = [], {}, {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 5) or not all(f.strip() for f in fields):
            raise ManifestError(f"{path}:{lineno}: expected 4 or 5 tab-separated fields, got {len(fields)}")
        uid, data, labels, speaker = (f.strip() for f in fields[:4])
        split = fields[4].strip() if len(fields) == 5 else None
        if split is not None and split not in SPLITS:
            raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
        if uid in ids:
            raise ManifestError(f"{path}:{lineno}: duplicate utterance id {uid!r} (first on line {ids[uid]})")
        ids[uid] = lineno
        if split is not None:
            prev = owner.setdefault(speaker, (split, lineno))
            if prev[0] != split:
                raise ManifestError(
                    f"{path}:{lineno}: speaker {speaker!r} is in split {split!r} "
                    f"but was in {prev[0]!r} on line {prev[1]}"
                )
        data_p, label_p = root / data, root / labels
        if check_files:
            for p in (data_p, label_p):
                if not p.is_file():
                    raise ManifestError(f"{path}:{lineno}: missing file {p}")
        entries.append(ManifestEntry(uid, data_p, label_p, speaker, split))
    return DatasetManifest(entries, root)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    rows = []
    for e in manifest.entries:
        def rel(p):
            p = Path(p).resolve()
            try:
                return str(p.relative_to(base))
            except ValueError:
                return str(p)
        fields = [e.utterance_id, rel(e.path), rel(e.label_path), e.speaker]
        if e.split is not None:
            fields.append(e.split)
        rows.append("\t".join(fields))
    path.write_text("".join(r + "\n" for r in rows))


def split_by_speaker(manifest: DatasetManifest, train_n: int, test_n: int,
                     val_fraction: float = 0.2, seed: int = 0) -> DatasetManifest:
    """Assign whole speakers to train/val/test.

    ``train_n`` speakers are drawn for training, of which
    ``round(val_fraction * train_n)`` are moved to validation; ``test_n``
    other speakers form the test split.  Speakers left over are dropped.
    """
    speakers = manifest.speakers()
    if train_n < 0 or test_n < 0 or train_n + test_n > len(speakers):
        raise ManifestError(f"need {train_n} + {test_n} speakers, manifest has {len(speakers)}")
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    order = np.random.default_rng(seed).permutation(len(speakers))
    chosen = [speakers[i] for i in order]
    n_val = int(round(val_fraction * train_n))
    assign = {}
    for s in chosen[: train_n - n_val]:
        assign[s] = "train"
    for s in chosen[train_n - n_val: train_n]:
        assign[s] = "val"
    for s in chosen[train_n: train_n + test_n]:
        assign[s] = "test"
    entries = [replace(e, split=assign[e.speaker]) for e in manifest.entries if e.speaker in assign]
    out = DatasetManifest(entries, manifest.root)
    out.validate()
    return out


# -- utterances ------------------------------------------------------------------------

@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ShapeError(f"{self.utterance_id}: features must be 2-D")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError(
                f"{self.utterance_id}: {self.labels.size} labels for {self.features.shape[0]} frames"
            )

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


def load_utterance(entry: ManifestEntry, cfg: ExperimentConfig | None = None) -> Utterance:
    """Features from a FEAT1 file, or extracted on the fly from a ``.wav`` file."""
    if entry.path.suffix.lower() == ".wav":
        feats = extract_features(read_wav(entry.path), (cfg or ExperimentConfig()).feature_config())
    else:
        feats = read_features(entry.path)
    return Utterance(entry.utterance_id, feats, read_labels(entry.label_path))


def load_split(manifest: DatasetManifest, split: str, cfg: ExperimentConfig | None = None) -> list[Utterance]:
    entries = manifest.select(split)
    if not entries:
        raise ManifestError(f"manifest has no {split!r} entries")
    return [load_utterance(e, cfg) for e in entries]


# -- training and evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class TrainedModel:
    reservoir: ReservoirModel
    readout: ReadoutWeights
    context_width: int
    context_center: int
    washout: int = 0

    @property
    def n_classes(self) -> int:
        return self.readout.n_classes

    @property
    def n_params(self) -> int:
        return trainable_parameters(self.reservoir, self.n_classes)

    def design(self, features) -> np.ndarray:
        """Extended-state rows (``T - washout`` x z_dim) for one utterance."""
        features = np.asarray(features, dtype=float)
        n_feat = self.reservoir.n_in // self.context_width
        if features.ndim != 2 or features.shape[1] * self.context_width != self.reservoir.n_in:
            raise ShapeError(
                f"features of shape {features.shape} do not fit a model expecting "
                f"{n_feat} features x context {self.context_width}"
            )
        U, _ = stack_context(features, self.context_width, center=self.context_center)
        states = run_sequence(self.reservoir, U, self.washout)
        return extended_rows(U[self.washout:], states)

    def scores(self, features) -> np.ndarray:
        return predict(self.readout, self.design(features).T)

    def predict_labels(self, features) -> np.ndarray:
        return classify(self.scores(features))


def harvest(reservoir: ReservoirModel, utterances: Sequence[Utterance], n_classes: int,
            width: int, center: int, washout: int) -> RidgeAccumulator:
    acc = RidgeAccumulator(reservoir.n_in + reservoir.state_dim, n_classes)
    for utt in utterances:
        try:
            U, labels = stack_context(utt.features, width, utt.labels, center)
            if U.shape[1] != reservoir.n_in:
                raise ShapeError(f"context rows have {U.shape[1]} columns, reservoir expects {reservoir.n_in}")
            states = run_sequence(reservoir, U, washout)
            acc.add(extended_rows(U[washout:], states), one_hot(labels[washout:], n_classes))
        except ESNError as exc:
            raise type(exc)(f"utterance {utt.utterance_id}: {exc}") from exc
    return acc


def train_model(cfg: ExperimentConfig, train_set: Sequence[Utterance], seed: int | None = None) -> TrainedModel:
    """Draw a reservoir for ``seed`` and fit only its readout on ``train_set``."""
    if not train_set:
        raise EmptyInputError("training set is empty")
    n_feat = train_set[0].features.shape[1]
    reservoir = cfg.build_reservoir(seed, n_in=n_feat * cfg.context_width)
    acc = harvest(reservoir, train_set, cfg.n_classes, cfg.context_width, cfg.center, cfg.washout)
    readout = acc.solve(RidgeConfig(cfg.gamma))
    return TrainedModel(reservoir, readout, cfg.context_width, cfg.center, cfg.washout)


def frame_recognition_rate(predicted, reference) -> float:
    predicted = np.asarray(predicted)
    reference = np.asarray(reference)
    if predicted.shape != reference.shape:
        raise ShapeError(f"{predicted.size} predictions vs {reference.size} reference labels")
    if reference.size == 0:
        raise EmptyInputError("no frames to score")
    return 100.0 * np.count_nonzero(predicted == reference) / reference.size


@dataclass(frozen=True)
class EvalResult:
    rate: float
    n_correct: int
    n_frames: int
    predictions: tuple = ()


def evaluate(model: TrainedModel, test_set: Sequence[Utterance]) -> EvalResult:
    """Pooled (micro-averaged) frame recognition rate over all test frames."""
    if not test_set:
        raise EmptyInputError("test set is empty")
    correct = total = 0
    preds = []
    for utt in test_set:
        try:
            p = np.atleast_1d(model.predict_labels(utt.features))
        except ESNError as exc:
            raise type(exc)(f"utterance {utt.utterance_id}: {exc}") from exc
        ref = utt.labels[model.washout:]
        correct += int(np.count_nonzero(p == ref))
        total += ref.size
        preds.append(p)
    if total == 0:
        raise EmptyInputError("no frames left to score after washout")
    return EvalResult(100.0 * correct / total, correct, total, tuple(preds))


@dataclass(frozen=True)
class TrialResult:
    seeds: tuple
    rates: tuple
    mean: float
    std: float
    train_seconds: float | None
    n_params: int

    @classmethod
    def from_rates(cls, seeds, rates, train_seconds, n_params) -> "TrialResult":
        rates = tuple(float(r) for r in rates)
        return cls(tuple(seeds), rates, float(np.mean(rates)), float(np.std(rates)), train_seconds, n_params)

    def to_row(self) -> dict:
        return {
            "seeds": ";".join(str(s) for s in self.seeds),
            "rates": ";".join(repr(r) for r in self.rates),
            "mean": repr(self.mean),
            "std": repr(self.std),
            "train_seconds": "" if self.train_seconds is None else f"{self.train_seconds:.3f}",
            "n_params": self.n_params,
        }


def trial_seeds(cfg: ExperimentConfig) -> list[int]:
    """Trial k draws its reservoir from ``master_seed + k``."""
    return [cfg.master_seed + k for k in range(cfg.n_seeds)]


def run_trials(cfg: ExperimentConfig, train_set, test_set) -> TrialResult:
    rates, seconds, n_params = [], 0.0, 0
    seeds = trial_seeds(cfg)
    for seed in seeds:
        try:
            t0 = time.perf_counter()
            model = train_model(cfg, train_set, seed)
            seconds += time.perf_counter() - t0
            rates.append(evaluate(model, test_set).rate)
        except ESNError as exc:
            raise type(exc)(f"trial seed {seed}: {exc}") from exc
        n_params = model.n_params
        log.info("seed %d: frame rate %.3f%%", seed, rates[-1])
    return TrialResult.from_rates(seeds, rates, seconds, n_params)


# -- grid search -----------------------------------------------------------------------

def grid_points(base: ExperimentConfig, axes: dict) -> list[tuple[dict, ExperimentConfig | Exception]]:
    if not axes:
        raise ConfigError("grid search needs at least one axis")
    keys = list(axes)
    points = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        point = dict(zip(keys, combo))
        try:
            points.append((point, base.with_keys(point)))
        except ConfigError as exc:
            points.append((point, exc))
    return points


def _grid_job(args):
    cfg, train_set, val_set = args
    try:
        return run_trials(cfg, train_set, val_set), None
    except (ESNError, ArithmeticError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def grid_search(base: ExperimentConfig, axes: dict, train_set, val_set, jobs: int = 1) -> list[dict]:
    """Run ``run_trials`` on every grid point, scored on the validation split.

    A failing point is recorded with its error and the sweep continues.
    Rows come back sorted by mean rate, best first; failures last.
    """
    points = grid_points(base, axes)
    todo = [(i, cfg) for i, (_, cfg) in enumerate(points) if isinstance(cfg, ExperimentConfig)]
    outcomes = {i: (None, f"ConfigError: {cfg}") for i, (_, cfg) in enumerate(points)
                if not isinstance(cfg, ExperimentConfig)}
    args = [(cfg, train_set, val_set) for _, cfg in todo]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_grid_job, args))
    else:
        results = [_grid_job(a) for a in args]
    outcomes.update({i: r for (i, _), r in zip(todo, results)})

    rows = []
    for i, (point, cfg) in enumerate(points):
        trial, error = outcomes[i]
        flat = (cfg if isinstance(cfg, ExperimentConfig) else base).to_flat()
        flat.update({k: _cell(v) for k, v in point.items()})
        row = dict(flat)
        if trial is not None:
            row.update(trial.to_row())
            row["error"] = ""
        else:
            row.update({"seeds": "", "rates": "", "mean": "", "std": "",
                        "train_seconds": "", "n_params": "", "error": error})
            log.warning("grid point %s failed: %s", point, error)
        rows.append((trial.mean if trial is not None else -np.inf, i, row))
    rows.sort(key=lambda r: (-r[0], r[1]))
    if rows and np.isfinite(rows[0][0]):
        log.info("best grid point: %s", {k: rows[0][2][k] for k in axes})
    return [r[2] for r in rows]


def _cell(v):
    return ";".join(str(x) for x in v) if isinstance(v, (list, tuple)) else v


RESULT_COLUMNS = ("seeds", "rates", "mean", "std", "train_seconds", "n_params")


def write_results_csv(path, rows: Iterable[dict]) -> None:
    rows = list(rows)
    if not rows:
        raise EmptyInputError("no result rows to write")
    header = list(rows[0])
    for row in rows[1:]:
        header += [k for k in row if k not in header]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in header})


def result_row(cfg: ExperimentConfig, trial: TrialResult) -> dict:
    row = cfg.to_flat()
    row.update(trial.to_row())
    return row
