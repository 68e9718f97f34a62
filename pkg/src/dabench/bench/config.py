"""Benchmark configuration and the trial-record format.

Configs load from JSON or TOML files; records are JSON lines, one
:class:`TrialRecord` per line, with a versioned schema.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .. import errors
from ..scorers import SCORER_IDS

RECORD_SCHEMA_VERSION = 1

#: Environment variable overriding the cache directory.
CACHE_ENV_VAR = "DABENCH_CACHE"


@dataclass
class TrialRecord:
    """Outcome of one (dataset, shift, method, scorer, outer split) trial."""

    dataset: str
    shift_id: str
    method_id: str
    scorer_id: str
    outer_split: int
    chosen_params: dict = field(default_factory=dict)
    target_test_accuracy: float = None
    source_test_accuracy: float = None
    target_test_f1: float = None
    chosen_inner_score: float = None
    fit_seconds: float = 0.0
    timed_out: bool = False
    failed: bool = False
    fail_reason: str = ""
    schema_version: int = RECORD_SCHEMA_VERSION

    def ok(self):
        return not (self.failed or self.timed_out)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        payload = json.loads(line)
        payload.pop("schema_version", None)
        return cls(**payload, schema_version=RECORD_SCHEMA_VERSION)


def write_records(records, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    os.replace(tmp, path)


def read_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TrialRecord.from_json(line))
    return records


@dataclass
class BenchConfig:
    """Everything a benchmark run needs.

    ``datasets`` entries are dicts: either simulated
    (``{"kind": "simulated", "shift": ..., "n_source": ..., seed, noise,
    label_proportions}``) or CSV
    (``{"kind": "csv", "path": ..., "name": ..., "shift_id": ...,
    "schema": {...}}``).  ``methods`` entries are method-id strings or
    ``{"id": ..., "grid": {...}}`` dicts with grid overrides.
    ``base_estimator`` is ``"auto"`` (source grid search per dataset) or an
    explicit ``{"kind": ..., hyperparameters...}`` spec.
    """

    datasets: list
    methods: list
    scorers: tuple = SCORER_IDS
    n_outer: int = 5
    n_inner: int = 5
    ratio: float = 0.8
    seed: int = 0
    timeout_seconds: float = 300.0
    cache_dir: str = None
    workers: int = 1
    base_estimator: object = "auto"
    force_timeout: tuple = ()
    records_path: str = "records.jsonl"

    def __post_init__(self):
        if not self.datasets:
            raise errors.ConfigError("config needs at least one dataset")
        if not self.methods:
            raise errors.ConfigError("config needs at least one method")
        if not 0.0 < self.ratio < 1.0:
            raise errors.ConfigError("ratio must be in (0, 1)")
        if self.n_outer < 1 or self.n_inner < 1:
            raise errors.ConfigError("split counts must be positive")
        if self.timeout_seconds <= 0:
            raise errors.ConfigError("timeout_seconds must be positive")
        bad = [s for s in self.scorers if s not in SCORER_IDS]
        if bad:
            raise errors.ConfigError(f"unknown scorers {bad}; valid: {SCORER_IDS}")
        self.scorers = tuple(self.scorers)
        self.force_timeout = tuple(self.force_timeout)

    def method_entries(self):
        out = []
        for m in self.methods:
            if isinstance(m, str):
                out.append({"id": m, "grid": None})
            else:
                out.append({"id": m["id"], "grid": m.get("grid")})
        return out

    def resolved_cache_dir(self):
        return os.environ.get(CACHE_ENV_VAR) or self.cache_dir


def _load_raw(path):
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_config(path) -> BenchConfig:
    """Parse a JSON or TOML benchmark configuration file."""
    try:
        raw = _load_raw(path)
    except (OSError, ValueError) as exc:
        raise errors.ConfigError(f"cannot read config {path}: {exc}")
    known = {f.name for f in dataclasses.fields(BenchConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise errors.ConfigError(f"unknown config keys: {unknown}")
    try:
        return BenchConfig(**raw)
    except TypeError as exc:
        raise errors.ConfigError(str(exc))
