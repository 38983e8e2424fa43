"""Experiment driver: load a config, expand its sweeps, replay each point,
and leave one artifact directory per run.

Sweep points are independent (each gets a fresh engine), so they can run in
worker processes; directories are staged under a temporary name and renamed
into place only when complete.
"""

from __future__ import annotations

import json
import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from ._units import format_size, parse_size
from .cluster import (DEFAULT_EPC_TOTAL, DEFAULT_EPC_USABLE, EpcModel,
                      NodeSpec, default_cluster)
from .engine import ConfigError, SimConfig, SimResult, run
from .report import (JOBS_FILE, META_FILE, OUTCOMES_FILE, PENDING_FILE,
                     SAMPLES_FILE, SUMMARY_FILE, summary, write_outcomes_csv,
                     write_pending_csv)
from .trace import (RawJobRecord, ScalingConfig, inject_malicious, materialize,
                    parse_trace, slice_and_sample, write_jobs_csv)


@dataclass(frozen=True)
class MaliciousConfig:
    """Adversarial jobs to inject.  n = None means one per enclave node."""

    n: int | None = None
    declared_pages: int = 1
    use_fraction: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    trace_file: str
    trace_format: str = "canonical_csv"
    cluster_file: str | None = None
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    policy: str = "binpack"
    enforce_limits: bool = True
    include_startup_delays: bool = True
    epc_usable_sweep: tuple[int, ...] | None = None
    apply_usable_fraction: bool = False
    sgx_fraction_sweep: tuple[float, ...] | None = None
    malicious: MaliciousConfig | None = None
    scheduler_period_ms: int = 5_000
    probe_period_ms: int = 10_000
    window_ms: int = 25_000
    check_invariants: bool = False
    output_dir: str = "artifacts"
    workers: int = 1

    def __post_init__(self):
        if self.epc_usable_sweep is not None and not self.epc_usable_sweep:
            raise ConfigError("epc_usable_sweep must not be empty")
        if self.sgx_fraction_sweep is not None:
            if not self.sgx_fraction_sweep:
                raise ConfigError("sgx_fraction_sweep must not be empty")
            for f in self.sgx_fraction_sweep:
                if not 0.0 <= f <= 1.0:
                    raise ConfigError(f"sgx fraction {f} outside [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        # surfaces period/window inconsistencies before any run starts
        self.sim_config()

    def sim_config(self) -> SimConfig:
        return SimConfig(
            scheduler_period_ms=self.scheduler_period_ms,
            probe_period_ms=self.probe_period_ms,
            window_ms=self.window_ms,
            policy=self.policy,
            enforce_limits=self.enforce_limits,
            include_startup_delays=self.include_startup_delays,
            check_invariants=self.check_invariants,
        )


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _as_bool(value: Any, key: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in _BOOL_WORDS:
        return _BOOL_WORDS[value.lower()]
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _as_int(value: Any, key: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _as_float(value: Any, key: str) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _as_size(value: Any, key: str) -> int:
    try:
        return parse_size(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _as_list(value: Any) -> list:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _parse_flat(text: str) -> dict[str, str]:
    data: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        data[key.strip()] = value.strip()
    return data


_KNOWN_KEYS = {
    "trace", "trace_format", "cluster", "policy", "enforce_limits",
    "include_startup_delays", "check_invariants", "slice_start_s",
    "slice_end_s", "sampling_stride", "sgx_fraction", "std_multiplier",
    "sgx_multiplier", "rng_seed", "epc_usable_sweep", "apply_usable_fraction",
    "sgx_fraction_sweep", "malicious_n", "malicious_declared_pages",
    "malicious_use_fraction", "scheduler_period_ms", "probe_period_ms",
    "window_ms", "output_dir", "workers",
}


def config_from_mapping(data: dict[str, Any]) -> ExperimentConfig:
    """Build a validated ExperimentConfig from flat key/value data (both the
    JSON and key=value file formats decode to this)."""
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "trace" not in data:
        raise ConfigError("config must name a trace file ('trace = ...')")

    scaling_kwargs: dict[str, Any] = {}
    if "slice_start_s" in data:
        scaling_kwargs["slice_start_s"] = _as_float(data["slice_start_s"], "slice_start_s")
    if "slice_end_s" in data:
        scaling_kwargs["slice_end_s"] = _as_float(data["slice_end_s"], "slice_end_s")
    if "sampling_stride" in data:
        scaling_kwargs["sampling_stride"] = _as_int(data["sampling_stride"], "sampling_stride")
    if "sgx_fraction" in data:
        scaling_kwargs["sgx_fraction"] = _as_float(data["sgx_fraction"], "sgx_fraction")
    if "std_multiplier" in data:
        scaling_kwargs["std_multiplier"] = _as_size(data["std_multiplier"], "std_multiplier")
    if "sgx_multiplier" in data:
        scaling_kwargs["sgx_multiplier"] = _as_size(data["sgx_multiplier"], "sgx_multiplier")
    if "rng_seed" in data:
        scaling_kwargs["rng_seed"] = _as_int(data["rng_seed"], "rng_seed")
    try:
        scaling = ScalingConfig(**scaling_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    malicious = None
    if any(key.startswith("malicious_") for key in data):
        n_raw = data.get("malicious_n", "auto")
        n = None if str(n_raw).lower() == "auto" else _as_int(n_raw, "malicious_n")
        if n is not None and n < 0:
            raise ConfigError("malicious_n must be >= 0 (or 'auto')")
        malicious = MaliciousConfig(
            n=n,
            declared_pages=_as_int(data.get("malicious_declared_pages", 1),
                                   "malicious_declared_pages"),
            use_fraction=_as_float(data.get("malicious_use_fraction", 0.5),
                                   "malicious_use_fraction"),
        )

    epc_sweep = None
    if "epc_usable_sweep" in data:
        epc_sweep = tuple(_as_size(v, "epc_usable_sweep")
                          for v in _as_list(data["epc_usable_sweep"]))
    frac_sweep = None
    if "sgx_fraction_sweep" in data:
        frac_sweep = tuple(_as_float(v, "sgx_fraction_sweep")
                           for v in _as_list(data["sgx_fraction_sweep"]))

    kwargs: dict[str, Any] = {
        "trace_file": str(data["trace"]),
        "scaling": scaling,
        "epc_usable_sweep": epc_sweep,
        "sgx_fraction_sweep": frac_sweep,
        "malicious": malicious,
    }
    if "trace_format" in data:
        kwargs["trace_format"] = str(data["trace_format"])
    if "cluster" in data:
        kwargs["cluster_file"] = str(data["cluster"])
    if "policy" in data:
        kwargs["policy"] = str(data["policy"])
    for key in ("enforce_limits", "include_startup_delays",
                "apply_usable_fraction", "check_invariants"):
        if key in data:
            kwargs[key] = _as_bool(data[key], key)
    for key in ("scheduler_period_ms", "probe_period_ms", "window_ms", "workers"):
        if key in data:
            kwargs[key] = _as_int(data[key], key)
    if "output_dir" in data:
        kwargs["output_dir"] = str(data["output_dir"])
    if kwargs.get("trace_format", "canonical_csv") not in ("canonical_csv", "borg_tables"):
        raise ConfigError(f"unknown trace_format {kwargs['trace_format']!r}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Read an experiment config file: a flat JSON object or key = value
    lines with '#' comments.  Both use the same key names."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object")
    except json.JSONDecodeError:
        data = _parse_flat(text)
    return config_from_mapping(data)


def load_cluster(path) -> list[NodeSpec]:
    """Read a cluster file: a JSON list of {node_id, std_capacity, and for
    enclave-capable nodes epc_total / epc_usable}.  Sizes may be plain bytes
    or suffixed strings.  A missing path means the built-in default cluster."""
    if path is None:
        return default_cluster()
    text = Path(path).read_text(encoding="utf-8")
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cluster file {path}: {exc}") from None
    if not isinstance(rows, list) or not rows:
        raise ConfigError(f"cluster file {path}: expected a non-empty list")
    specs = []
    for row in rows:
        if not isinstance(row, dict) or "node_id" not in row or "std_capacity" not in row:
            raise ConfigError(
                f"cluster file {path}: each node needs node_id and std_capacity")
        epc = None
        if "epc_total" in row or "epc_usable" in row:
            total = _as_size(row.get("epc_total", DEFAULT_EPC_TOTAL), "epc_total")
            usable = _as_size(row.get("epc_usable", DEFAULT_EPC_USABLE), "epc_usable")
            try:
                epc = EpcModel(total_bytes=total, usable_bytes=usable)
            except ValueError as exc:
                raise ConfigError(f"cluster file {path}: {exc}") from None
        try:
            specs.append(NodeSpec(node_id=str(row["node_id"]),
                                  std_capacity=_as_size(row["std_capacity"],
                                                        "std_capacity"),
                                  epc=epc))
        except ValueError as exc:
            raise ConfigError(f"cluster file {path}: {exc}") from None
    return specs


def _sweep_epc_model(base: EpcModel, swept_bytes: int,
                     apply_fraction: bool) -> EpcModel:
    if apply_fraction:
        usable = swept_bytes * DEFAULT_EPC_USABLE // DEFAULT_EPC_TOTAL
        usable -= usable % base.page_size
        total = swept_bytes
    else:
        if swept_bytes % base.page_size:
            raise ConfigError(
                f"swept usable size {swept_bytes} is not page-aligned")
        usable = total = swept_bytes
    try:
        return replace(base, total_bytes=total, usable_bytes=usable)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _apply_epc(specs: Sequence[NodeSpec], swept_bytes: int | None,
               apply_fraction: bool) -> list[NodeSpec]:
    if swept_bytes is None:
        return list(specs)
    return [replace(s, epc=_sweep_epc_model(s.epc, swept_bytes, apply_fraction))
            if s.is_sgx else s for s in specs]


def _label(epc_bytes: int | None, fraction: float,
           cfg: ExperimentConfig) -> str:
    parts = [
        f"epc-{format_size(epc_bytes)}" if epc_bytes is not None else "epc-default",
        f"sgx-{int(round(fraction * 100)):03d}",
        cfg.policy,
    ]
    if cfg.malicious is not None:
        parts.append("mal")
    if not cfg.enforce_limits:
        parts.append("noenforce")
    return "_".join(parts)


def run_point(cfg: ExperimentConfig, records: list[RawJobRecord],
              epc_bytes: int | None, fraction: float, out_root: str) -> str:
    """Replay one sweep point and write its artifact directory.  Returns the
    run label."""
    specs = _apply_epc(load_cluster(cfg.cluster_file), epc_bytes,
                       cfg.apply_usable_fraction)
    scaling = replace(cfg.scaling, sgx_fraction=fraction)
    jobs = materialize(records, scaling)
    if cfg.malicious is not None:
        sgx_specs = sorted((s for s in specs if s.is_sgx),
                           key=lambda s: s.node_id)
        if not sgx_specs:
            raise ConfigError("malicious jobs need an enclave-capable node")
        n = cfg.malicious.n if cfg.malicious.n is not None else len(sgx_specs)
        jobs = inject_malicious(jobs, n, cfg.malicious.declared_pages,
                                cfg.malicious.use_fraction,
                                sgx_specs[0].epc.usable_pages)
    result = run(jobs, specs, cfg.sim_config())
    label = _label(epc_bytes, fraction, cfg)
    _write_run_dir(Path(out_root), label, jobs, result, {
        "label": label,
        "epc_usable_sweep_bytes": epc_bytes,
        "sgx_fraction": fraction,
        "policy": cfg.policy,
        "enforce_limits": cfg.enforce_limits,
        "malicious": None if cfg.malicious is None else {
            "n": cfg.malicious.n,
            "declared_pages": cfg.malicious.declared_pages,
            "use_fraction": cfg.malicious.use_fraction,
        },
    })
    return label


def _write_run_dir(out_root: Path, label: str, jobs, result: SimResult,
                   meta: dict) -> None:
    staging = out_root / (label + ".tmp")
    final = out_root / label
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    write_jobs_csv(jobs, staging / JOBS_FILE)
    write_outcomes_csv(result.outcomes, staging / OUTCOMES_FILE)
    write_pending_csv(result.pending_epc, staging / PENDING_FILE)
    result.store.write_csv(staging / SAMPLES_FILE)
    with open(staging / SUMMARY_FILE, "w", encoding="utf-8") as fh:
        json.dump(summary(result.outcomes), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(staging / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if final.exists():
        shutil.rmtree(final)
    os.replace(staging, final)


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Expand the config's sweeps and replay every point.  Returns the
    artifact root, which holds one subdirectory per sweep point."""
    records = slice_and_sample(
        parse_trace(cfg.trace_file, cfg.trace_format), cfg.scaling)
    load_cluster(cfg.cluster_file)  # fail fast before any run
    out_root = Path(cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    echo = {
        "trace": cfg.trace_file,
        "trace_format": cfg.trace_format,
        "cluster": cfg.cluster_file,
        "policy": cfg.policy,
        "enforce_limits": cfg.enforce_limits,
        "jobs_in_slice": len(records),
    }
    with open(out_root / "experiment.json", "w", encoding="utf-8") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")

    epc_points = (list(cfg.epc_usable_sweep)
                  if cfg.epc_usable_sweep is not None else [None])
    frac_points = (list(cfg.sgx_fraction_sweep)
                   if cfg.sgx_fraction_sweep is not None
                   else [cfg.scaling.sgx_fraction])
    points = [(epc, frac) for epc in epc_points for frac in frac_points]
    if cfg.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_point, cfg, records, epc, frac,
                                   str(out_root)) for epc, frac in points]
            for future in futures:
                future.result()
    else:
        for epc, frac in points:
            run_point(cfg, records, epc, frac, str(out_root))
    return out_root
