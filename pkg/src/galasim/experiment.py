"""Config-driven experiment runner.

Configs are INI-style text (key = value under [sections]); a suite declares
its domains, the protocol, an optional sweep grid, and a seed count. Runs are
cached by content hash so interrupted sweeps resume where they stopped, and a
rerun of an identical spec is bit-identical. Metrics land in one CSV per run
plus a mean/std summary per configuration.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import itertools
import os
import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domains import (
    DomainDataset,
    TransformSpec,
    apply_transform_chain,
    gen_gaussian_domain,
    gen_glyph_domain,
    load_dataset,
    save_dataset,
)
from .errors import ConfigError, NumericError, ParseError
from .federation import ProtocolConfig, RoundRecord, run_protocol

_EXPERIMENT_KEYS = {"name", "target", "output_dir", "num_seeds"}
_GAUSSIAN_KEYS = {"generator", "num_classes", "samples_per_class", "input_dim",
                  "center_scale", "seed", "transforms"}
_GLYPH_KEYS = {"generator", "num_classes", "samples_per_class", "canvas", "channels", "seed", "transforms"}
_PROTOCOL_FIELDS = {f.name: f for f in fields(ProtocolConfig)}


@dataclass
class DomainEntry:
    """One generator invocation plus its transform chain."""

    name: str
    generator: str
    params: dict
    transforms: tuple[TransformSpec, ...]

    def content_key(self) -> str:
        items = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        chain = ";".join(t.describe() for t in self.transforms)
        return f"{self.generator}({items})|{chain}"

    def build(self) -> DomainDataset:
        params = dict(self.params)
        if self.generator == "gaussian":
            base = gen_gaussian_domain(
                num_classes=int(params["num_classes"]),
                samples_per_class=int(params["samples_per_class"]),
                input_dim=int(params["input_dim"]),
                seed=int(params.get("seed", 0)),
                name=self.name,
                center_scale=float(params.get("center_scale", 3.0)))
        elif self.generator == "glyph":
            base = gen_glyph_domain(
                num_classes=int(params["num_classes"]),
                samples_per_class=int(params["samples_per_class"]),
                canvas=int(params["canvas"]),
                channels=int(params.get("channels", 1)),
                seed=int(params.get("seed", 0)),
                name=self.name)
        else:
            raise ConfigError(f"domain {self.name!r}: unknown generator {self.generator!r}")
        return apply_transform_chain(base, self.transforms)


@dataclass
class ExperimentSpec:
    name: str
    domains: list[DomainEntry]
    target_name: str
    protocol: ProtocolConfig
    sweep: list[tuple[str, list]]
    output_dir: str
    num_seeds: int

    def validate(self) -> None:
        names = [d.name for d in self.domains]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate domain names in suite")
        if names.count(self.target_name) != 1:
            raise ConfigError(
                f"target {self.target_name!r} must appear exactly once in the suite")
        for field_name, values in self.sweep:
            if field_name not in _PROTOCOL_FIELDS:
                raise ConfigError(f"sweep field {field_name!r} is not a protocol field")
            if not values:
                raise ConfigError(f"sweep field {field_name!r} has no values")
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be >= 1")
        self.protocol.validate()


# ---------------------------------------------------------------------------
# config parsing

_TRANSFORM_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_transforms(text: str, where: str) -> tuple[TransformSpec, ...]:
    chain = []
    for piece in filter(None, (p.strip() for p in text.split(";"))):
        m = _TRANSFORM_RE.match(piece)
        if not m:
            raise ConfigError(f"{where}: cannot parse transform {piece!r}; "
                              f"expected kind(key=value, ...)")
        kind, argtext = m.group(1), m.group(2)
        params = {}
        for arg in filter(None, (a.strip() for a in argtext.split(","))):
            if "=" not in arg:
                raise ConfigError(f"{where}: transform argument {arg!r} needs key=value")
            key, value = (s.strip() for s in arg.split("=", 1))
            params[key] = _parse_scalar(value)
        seed = int(params.pop("seed", 0))
        try:
            chain.append(TransformSpec(kind, params, seed))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return tuple(chain)


def _coerce_protocol_value(name: str, raw: str):
    if name == "hidden_dims":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    value = _parse_scalar(raw)
    if name == "mixup_alpha":
        return None if value is None else float(value)
    hint = _PROTOCOL_FIELDS[name].type
    if value is None:
        raise ConfigError(f"protocol.{name}: value required")
    if hint in ("int", int):
        return int(value)
    if hint in ("float", float):
        return float(value)
    if hint in ("bool", bool):
        if not isinstance(value, bool):
            raise ConfigError(f"protocol.{name}: expected true/false, got {raw!r}")
        return value
    return value


def parse_config(path) -> ExperimentSpec:
    """Parse an experiment config file; unknown keys are hard errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except configparser.ParsingError as exc:
        first = exc.errors[0] if getattr(exc, "errors", None) else None
        lineno = first[0] if first else "?"
        raise ParseError(f"{path}: parse error at line {lineno}: {exc}") from exc
    except configparser.Error as exc:
        raise ParseError(f"{path}: parse error: {exc}") from exc

    if not parser.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")
    exp = dict(parser.items("experiment"))
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) in [experiment]: {sorted(unknown)}")
    for required in ("name", "target"):
        if required not in exp:
            raise ConfigError(f"{path}: [experiment] needs key {required!r}")

    protocol_kwargs = {}
    if parser.has_section("protocol"):
        for key, raw in parser.items("protocol"):
            if key not in _PROTOCOL_FIELDS:
                raise ConfigError(f"{path}: unknown key protocol.{key}")
            protocol_kwargs[key] = _coerce_protocol_value(key, raw)
    protocol = ProtocolConfig(**protocol_kwargs)

    sweep = []
    if parser.has_section("sweep"):
        for key, raw in parser.items("sweep"):
            if key not in _PROTOCOL_FIELDS:
                raise ConfigError(f"{path}: unknown sweep field {key!r}")
            values = [_coerce_protocol_value(key, v.strip())
                      for v in raw.split(",") if v.strip()]
            sweep.append((key, values))

    domains = []
    for section in parser.sections():
        if section in ("experiment", "protocol", "sweep"):
            continue
        if not section.startswith("domain "):
            raise ConfigError(f"{path}: unknown section [{section}]")
        name = section[len("domain "):].strip()
        if not name:
            raise ConfigError(f"{path}: domain section needs a name: [domain <name>]")
        items = dict(parser.items(section))
        generator = items.get("generator")
        if generator is None:
            raise ConfigError(f"{path}: [{section}] needs key 'generator'")
        allowed = _GAUSSIAN_KEYS if generator == "gaussian" else _GLYPH_KEYS
        unknown = set(items) - allowed
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) in [{section}]: {sorted(unknown)}")
        transforms = _parse_transforms(items.pop("transforms", ""), f"[{section}]")
        params = {k: _parse_scalar(v) for k, v in items.items() if k != "generator"}
        domains.append(DomainEntry(name, generator, params, transforms))

    spec = ExperimentSpec(
        name=exp["name"],
        domains=domains,
        target_name=exp["target"],
        protocol=protocol,
        sweep=sweep,
        output_dir=exp.get("output_dir", "galasim_out"),
        num_seeds=int(exp.get("num_seeds", 1)),
    )
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# metrics CSV

_FIXED_COLUMNS = ("round", "target_acc", "igd_loss", "mean_source_loss",
                  "bytes_up", "bytes_down", "wall_max_client_ms",
                  "wall_server_ms", "lr")


def emit_metrics(records: Sequence[RoundRecord], path) -> None:
    """Write one CSV row per round: the fixed columns, then w_0..w_{N-1},
    then the g1 membership bitmask. LF endings, RFC-4180 quoting."""
    if not records:
        raise ValueError("emit_metrics: no records")
    n = records[0].weights.size
    header = list(_FIXED_COLUMNS) + [f"w_{i}" for i in range(n)] + ["g1_bitmask"]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for rec in records:
                mean_loss = float(np.nanmean(rec.source_losses)) \
                    if rec.source_losses.size else 0.0
                row = [rec.round_index, repr(float(rec.target_accuracy)),
                       repr(float(rec.igd_loss)), repr(mean_loss),
                       rec.bytes_up, rec.bytes_down,
                       repr(float(rec.wall_max_client_ms)),
                       repr(float(rec.wall_server_ms)), repr(float(rec.lr))]
                row += [repr(float(w)) for w in rec.weights]
                row.append(rec.partition.bitmask_g1() if rec.partition else 0)
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# suite execution


def build_domains(spec: ExperimentSpec, cache_dir: Optional[Path] = None
                  ) -> dict[str, DomainDataset]:
    """Generate every suite domain, reusing a content-hash disk cache."""
    out = {}
    for entry in spec.domains:
        digest = hashlib.sha256(entry.content_key().encode()).hexdigest()[:16]
        cached = cache_dir / f"{digest}.gdsd" if cache_dir else None
        if cached is not None and cached.exists():
            out[entry.name] = load_dataset(cached)
            continue
        dataset = entry.build()
        if cached is not None:
            cache_dir.mkdir(parents=True, exist_ok=True)
            _atomic_save(dataset, cached)
        out[entry.name] = dataset
    return out


def _atomic_save(dataset: DomainDataset, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        save_dataset(dataset, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _sweep_grid(spec: ExperimentSpec) -> list[dict]:
    if not spec.sweep:
        return [{}]
    keys = [k for k, _ in spec.sweep]
    grids = [v for _, v in spec.sweep]
    return [dict(zip(keys, combo)) for combo in itertools.product(*grids)]


def _run_label(overrides: dict) -> str:
    if not overrides:
        return "base"
    return "_".join(f"{k}={v}" for k, v in sorted(overrides.items()))


def _run_hash(cfg: ProtocolConfig, domain_key: str) -> str:
    text = repr(sorted(cfg.__dict__.items())) + "|" + domain_key
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _execute_run(cfg: ProtocolConfig, sources: list[DomainDataset],
                 target: DomainDataset, path: str) -> tuple[str, Optional[str]]:
    """Worker: run one protocol config and write its CSV. Returns (path, error)."""
    try:
        result = run_protocol(cfg, sources, target)
    except NumericError as exc:
        return path, str(exc)
    emit_metrics(result.records, path)
    return path, None


def run_experiment(spec: ExperimentSpec, parallel: int = 1) -> int:
    """Execute the (sweep x seed) grid; returns the process exit code
    (0 ok, 3 if any run aborted numerically, 4 on I/O failure).

    Completed runs are skipped by content hash, so interrupted suites resume;
    rerunning an identical spec is a no-op that leaves bytes unchanged.
    """
    spec.validate()
    out_dir = Path(spec.output_dir)
    runs_dir = out_dir / "runs"
    try:
        runs_dir.mkdir(parents=True, exist_ok=True)
        domains = build_domains(spec, cache_dir=out_dir / "cache")
    except OSError as exc:
        print(f"I/O error: {exc}")
        return 4
    target = domains[spec.target_name]
    sources = [domains[e.name] for e in spec.domains if e.name != spec.target_name]
    domain_key = "|".join(e.content_key() for e in spec.domains)

    jobs = []
    run_index = []  # (label, seed, csv path)
    for overrides in _sweep_grid(spec):
        label = _run_label(overrides)
        for k in range(spec.num_seeds):
            cfg = replace(spec.protocol, **overrides, seed=spec.protocol.seed + k)
            digest = _run_hash(cfg, domain_key)
            path = runs_dir / f"{spec.name}__{label}__s{k}__{digest}.csv"
            run_index.append((label, k, path))
            if not path.exists():
                jobs.append((cfg, sources, target, str(path)))

    failures = []
    try:
        if parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                for path, error in pool.map(_execute_run_star, jobs):
                    if error:
                        failures.append((path, error))
        else:
            for job in jobs:
                path, error = _execute_run(*job)
                if error:
                    failures.append((path, error))
        _write_summary(out_dir / "summary.csv", run_index)
    except OSError as exc:
        print(f"I/O error: {exc}")
        return 4
    for path, error in failures:
        print(f"run {path}: numeric abort: {error}")
    return 3 if failures else 0


def _execute_run_star(job):
    return _execute_run(*job)


def _final_accuracy_from_csv(path: Path) -> float:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    col = rows[0].index("target_acc")
    return float(rows[-1][col])


def _write_summary(path: Path, run_index: list) -> None:
    """Mean and population std of final-round accuracy per configuration."""
    by_label: dict[str, list[float]] = {}
    for label, _, csv_path in run_index:
        if Path(csv_path).exists():
            by_label.setdefault(label, []).append(_final_accuracy_from_csv(Path(csv_path)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["config", "num_runs", "mean_final_acc", "std_final_acc"])
        for label in sorted(by_label):
            finals = np.asarray(by_label[label])
            writer.writerow([label, finals.size,
                             repr(float(finals.mean())),
                             repr(float(finals.std()))])
