"""Data files, model configuration and result output.

File formats (CSV with headers):

* partition: ``actor_id,group_id`` (group labels are arbitrary strings);
* attributes: ``actor_id,<attr>,...``; empty cells or ``NA`` are missing;
* dyadic covariate: ``actor_i,actor_j[,value]`` edge list, value defaulting
  to 1; pairs are symmetrized and absent pairs are zero.

Model configuration is TOML::

    schema_version = 1

    [model]
    bounds = [2, 5]                      # optional, default [1, n]
    statistics = [
        "num_groups",
        { kind = "group_homophily", attribute = "age", form = "range" },
    ]
    alpha = [0.5, -0.2]                  # needed for enumerate/simulate

    [sampler]                            # ChainConfig fields
    mixture = { merge_split = 1, permute = 1, transfer = 1 }

    [estimation]                         # EstimationConfig fields
    [path]                               # PathConfig fields
"""

from __future__ import annotations

import csv
import json
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ERPMError
from .estimation import EstimationConfig, EstimationResult
from .exact import ModelSpec
from .partition import Partition, SizeBounds, read_partition_csv
from .sampler import ChainConfig, ProposalMixture
from .likelihood import PathConfig
from .statistics import CovariateStore, StatisticSpec

__all__ = [
    "SCHEMA_VERSION",
    "DataValidationError",
    "Dataset",
    "RunConfig",
    "load_dataset",
    "read_attributes_csv",
    "read_dyadic_csv",
    "parse_model_config",
    "emit_results",
    "format_results_table",
    "write_trace_csv",
    "write_stats_csv",
]

SCHEMA_VERSION = 1


class DataValidationError(ERPMError, ValueError):
    """Input files or configuration are inconsistent."""


# -- data ---------------------------------------------------------------------------------


@dataclass
class Dataset:
    actor_ids: list[str]
    partition: Partition
    covariates: CovariateStore

    def __iter__(self):
        yield self.partition
        yield self.covariates


def read_attributes_csv(path, actor_ids: Sequence[str]) -> dict[str, list]:
    index = {a: i for i, a in enumerate(actor_ids)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "actor_id" not in reader.fieldnames:
            raise DataValidationError(f"{path}: expected an 'actor_id' column")
        names = [c for c in reader.fieldnames if c != "actor_id"]
        cols: dict[str, list] = {c: [None] * len(actor_ids) for c in names}
        seen = set()
        for row in reader:
            aid = row["actor_id"].strip()
            if aid in seen:
                raise DataValidationError(f"{path}: duplicate actor row {aid!r}")
            if aid not in index:
                raise DataValidationError(f"{path}: actor {aid!r} is not in the partition file")
            seen.add(aid)
            for c in names:
                cols[c][index[aid]] = row[c]
    missing = set(actor_ids) - seen
    if missing:
        raise DataValidationError(f"{path}: no attribute row for actors {sorted(missing)[:5]}")
    return cols


def read_dyadic_csv(path, actor_ids: Sequence[str]) -> np.ndarray:
    index = {a: i for i, a in enumerate(actor_ids)}
    n = len(actor_ids)
    mat = np.zeros((n, n))
    given = np.zeros((n, n), dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return mat
        if [h.strip() for h in header[:2]] != ["actor_i", "actor_j"]:
            raise DataValidationError(f"{path}: expected header 'actor_i,actor_j[,value]'")
        for row in reader:
            if not row or not any(x.strip() for x in row):
                continue
            a, b = row[0].strip(), row[1].strip()
            for x in (a, b):
                if x not in index:
                    raise DataValidationError(f"{path}: actor {x!r} is not in the partition file")
            i, j = index[a], index[b]
            if i == j:
                raise DataValidationError(f"{path}: self pair for actor {a!r}")
            v = float(row[2]) if len(row) > 2 and row[2].strip() else 1.0
            if given[i, j] and mat[i, j] != v:
                raise DataValidationError(
                    f"{path}: conflicting values for the pair ({a}, {b}): {mat[i, j]:g} and {v:g}")
            mat[i, j] = mat[j, i] = v
            given[i, j] = given[j, i] = True
    return mat


def _dyadic_name(spec: str) -> tuple[str, str]:
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name.strip(), path.strip()
    return Path(spec).stem, spec


def load_dataset(partition_path, attributes_path=None, dyadic_paths: Sequence[str] = ()) -> Dataset:
    """Load a partition and its covariates; ``dyadic_paths`` items are ``name=path`` or a path
    (the file stem is then the covariate name)."""
    try:
        ids, p = read_partition_csv(partition_path)
    except ValueError as exc:
        raise DataValidationError(str(exc)) from exc
    cov = CovariateStore(len(ids))
    if attributes_path:
        for name, col in read_attributes_csv(attributes_path, ids).items():
            cov.add_attribute(name, col)
    for spec in dyadic_paths or ():
        name, path = _dyadic_name(spec)
        cov.add_dyadic(name, read_dyadic_csv(path, ids))
    return Dataset(ids, p, cov)


# -- configuration ----------------------------------------------------------------------------


def _snake(x: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", x).lower()


def _statistic(entry) -> StatisticSpec:
    if isinstance(entry, str):
        entry = {"kind": entry}
    if not isinstance(entry, Mapping) or "kind" not in entry:
        raise DataValidationError(f"bad statistic entry {entry!r}")
    allowed = {"kind", "k", "attribute", "similarity", "form", "covariate", "normalized"}
    extra = set(entry) - allowed
    if extra:
        raise DataValidationError(f"unknown statistic options {sorted(extra)}")
    d = dict(entry)
    d["kind"] = _snake(d["kind"])
    for key in ("form", "similarity"):
        if key in d:
            d[key] = _snake(d[key])
    try:
        return StatisticSpec(**d)
    except (TypeError, ValueError) as exc:
        raise DataValidationError(str(exc)) from exc


def _build(cls, section: Mapping, name: str):
    known = {f.name for f in fields(cls)}
    extra = set(section) - known
    if extra:
        raise DataValidationError(f"unknown [{name}] options {sorted(extra)}")
    d = dict(section)
    try:
        if d.get("mixture") is not None:
            d["mixture"] = ProposalMixture(**d["mixture"])
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise DataValidationError(f"[{name}]: {exc}") from exc


@dataclass
class RunConfig:
    model: ModelSpec
    has_alpha: bool
    sampler: ChainConfig
    estimation: EstimationConfig
    path: PathConfig
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Fully resolved configuration, as echoed next to results."""
        b = self.model.bounds
        return {
            "schema_version": SCHEMA_VERSION,
            "model": {
                "statistics": [s.to_dict() for s in self.model.specs],
                "bounds": [b.sigma_min, b.sigma_max],
                "alpha": self.model.alpha.tolist() if self.has_alpha else None,
            },
            "sampler": _config_dict(self.sampler),
            "estimation": self.estimation.to_dict(),
            "path": _config_dict(self.path),
        }


def _config_dict(obj) -> dict:
    d = {f.name: getattr(obj, f.name) for f in fields(obj)}
    if d.get("mixture") is not None:
        d["mixture"] = d["mixture"].to_dict()
    return d


def parse_model_config(source, n: int | None = None) -> RunConfig:
    """Parse a TOML file (path) or an already-loaded mapping into validated configs."""
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        try:
            with open(source, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataValidationError(f"{source}: {exc}") from exc
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise DataValidationError(f"unsupported schema_version {version!r}")
    extra = set(raw) - {"schema_version", "model", "statistics", "sampler", "estimation", "path"}
    if extra:
        raise DataValidationError(f"unknown configuration sections {sorted(extra)}")
    model = dict(raw.get("model", {}))
    if "statistics" in raw:
        model.setdefault("statistics", raw["statistics"])
    unknown = set(model) - {"statistics", "bounds", "alpha"}
    if unknown:
        raise DataValidationError(f"unknown [model] options {sorted(unknown)}")
    stats = model.get("statistics")
    if not stats:
        raise DataValidationError("the model lists no statistics")
    specs = [_statistic(e) for e in stats]
    bounds_raw = model.get("bounds")
    if bounds_raw is None:
        bounds = SizeBounds()
    else:
        if len(bounds_raw) != 2:
            raise DataValidationError("bounds must be [sigma_min, sigma_max]")
        lo, hi = bounds_raw
        if hi is not None and hi != "inf" and lo > hi:
            raise DataValidationError(f"sigma_min {lo} exceeds sigma_max {hi}")
        try:
            bounds = SizeBounds(int(lo), None if hi in (None, "inf") else int(hi))
        except ValueError as exc:
            raise DataValidationError(str(exc)) from exc
    if n is not None and bounds.sigma_max is None:
        bounds = SizeBounds(bounds.sigma_min, n)
    alpha = model.get("alpha")
    if alpha is not None and len(alpha) != len(specs):
        raise DataValidationError("alpha must have one entry per statistic")
    m = ModelSpec(specs, alpha, bounds)
    return RunConfig(
        m,
        alpha is not None,
        _build(ChainConfig, raw.get("sampler", {}), "sampler"),
        _build(EstimationConfig, raw.get("estimation", {}), "estimation"),
        _build(PathConfig, raw.get("path", {}), "path"),
        raw,
    )


# -- output -----------------------------------------------------------------------------------


def write_trace_csv(path, names: Sequence[str], stats: np.ndarray, num_groups: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", *names, "num_groups_of_partition"])
        for t, (row, g) in enumerate(zip(stats, num_groups)):
            w.writerow([t, *(repr(float(x)) for x in row), int(g)])


def write_stats_csv(path, names: Sequence[str], stats: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", *names])
        for t, row in enumerate(stats):
            w.writerow([t, *(repr(float(x)) for x in row)])


def format_results_table(result: EstimationResult, loglik: float | None = None) -> str:
    """Plain-text table: estimate, significance, standard error, convergence ratio."""
    width = max(len("Statistic"), *(len(n) for n in result.names))
    lines = []
    if not result.converged:
        lines.append(f"NON-CONVERGED (max |convergence ratio| = {result.max_convergence_ratio:.3f})")
    lines.append(f"{'Statistic':<{width}}  {'Est.':>8}  {'Sig.':<4}  {'S.e.':>8}  {'Conv.':>6}")
    stars = result.stars()
    for k, name in enumerate(result.names):
        lines.append(
            f"{name:<{width}}  {result.alpha_hat[k]:>8.2f}  {stars[k]:<4}  "
            f"{'(' + format(result.standard_errors[k], '.2f') + ')':>8}  "
            f"{result.convergence_ratios[k]:>6.2f}"
        )
    lines.append(f"max |convergence ratio|: {result.max_convergence_ratio:.3f}")
    if loglik is not None:
        lines.append(f"log-likelihood: {loglik:.2f}")
    lines.append("significance: * |est/se| > 2, ** > 2.58, *** > 3.29")
    return "\n".join(lines) + "\n"


def _dump(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def emit_results(out: str | Path, result: EstimationResult, config: dict, seed: int,
                 data: Mapping[str, Any] | None = None, loglik: float | None = None) -> dict[str, Path]:
    """Write ``result.json`` (with the resolved config and seed), phase traces and a table.

    ``out`` is either a JSON file path or a directory. No timestamps are
    written, so reruns with the same seed give identical files.
    """
    out = Path(out)
    if out.suffix == ".json":
        directory, json_path = out.parent, out
    else:
        directory, json_path = out, out / "result.json"
    directory.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict(traces=False)
    payload["config"] = config
    payload["seed"] = int(seed)
    payload["data"] = dict(data or {})
    if loglik is not None:
        payload["loglik"] = loglik
    _dump(payload, json_path)
    stem = json_path.stem
    paths = {"result": json_path}
    paths["phase1"] = directory / f"{stem}_phase1_stats.csv"
    paths["phase3"] = directory / f"{stem}_phase3_stats.csv"
    paths["phase2"] = directory / f"{stem}_phase2_alpha.csv"
    for key, arr in (("phase1", result.phase1_stats), ("phase3", result.phase3_stats)):
        write_stats_csv(paths[key], result.names, arr)
    with open(paths["phase2"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subphase", "iteration", *result.names])
        for r, seq in enumerate(result.phase2_alpha, start=1):
            for t, row in enumerate(seq):
                w.writerow([r, t, *(repr(float(x)) for x in row)])
    paths["table"] = directory / f"{stem}_table.txt"
    paths["table"].write_text(format_results_table(result, loglik))
    return paths
