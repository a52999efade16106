"""Reproducible experiment front end.

Subcommands wire the library into file-producing pipelines: ``generate``,
``census``, ``percolate``, ``ids``, ``lifshits``, ``verify``.  Every run
reads an optional INI config overridden by flags, writes its outputs
atomically into one directory, and drops a manifest recording the exact
configuration, the code version, the master seed, and a checksum per
output file.  All randomness descends from the single master seed, and the
realization streams are keyed by absolute index, so results are
byte-identical for any ``--threads`` value.

Exit codes: 0 success, 1 runtime or statistical failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .graphs import (
    Ball,
    EmbeddedGraph,
    GeneratorSpec,
    GraphGenerationError,
    dumps,
    generate,
    geometry_report,
)
from .lifshits import (
    InsufficientTailData,
    certify_bracketing,
    default_energy_range,
    lower_bound,
    tail_fit,
    upper_bound,
)
from .patterns import density_report, extract_r_patterns
from .percolation import (
    PercolationParams,
    bounds_report,
    boundary_path_probability,
    cluster_size_tail,
    edge_uniforms,
    gamma_rate,
    mean_cluster_size,
    sample,
)
from .spectral import (
    AllRealizationsTruncated,
    IdsTable,
    bruteforce_ids_oracle,
    chain_spectrum,
    cheeger_check,
    eigensystem,
    ids_estimate,
    laplacian_from_edges,
)

__all__ = ["ExperimentConfig", "ConfigError", "RunManifest", "main"]


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    """Flat description of one experiment, merged from INI config and flags.

    ``counting_radius`` plus the truncation ``margin`` may not exceed the
    generation ``radius``: the counting window must sit strictly inside the
    generated patch or boundary effects silently corrupt the spectra.
    """

    family: str = "square"
    radius: float = 60.0
    counting_radius: float | None = None
    pattern_radius: float = 1.1
    p: float = 0.2
    realizations: int = 100
    master_seed: int = 1
    n_max: int = 20
    e_min: float | None = None
    e_max: float = 0.5
    per_decade: int = 12
    top_anchor: float | None = 9.0
    margin: float = 1.0
    out_dir: str = "runs/out"
    fmt: str = "csv"
    threads: int = 1

    def validate(self) -> None:
        problems: list[str] = []
        if not (0.0 <= self.p <= 1.0):
            problems.append(f"percolation.p = {self.p}: must lie in [0, 1]")
        if self.radius <= 0.0:
            problems.append(f"graph.radius = {self.radius}: must be positive")
        if self.counting_radius is not None:
            if self.counting_radius <= 0.0:
                problems.append(
                    f"ids.counting_radius = {self.counting_radius}: must be positive"
                )
            elif self.counting_radius + self.margin > self.radius:
                problems.append(
                    f"ids.counting_radius = {self.counting_radius}: counting radius "
                    f"+ margin {self.margin} exceeds generation radius {self.radius}"
                )
        if self.pattern_radius <= 0.0:
            problems.append(
                f"patterns.pattern_radius = {self.pattern_radius}: must be positive"
            )
        if self.realizations < 1:
            problems.append(
                f"percolation.realizations = {self.realizations}: must be >= 1"
            )
        if self.n_max < 1:
            problems.append(f"percolation.n_max = {self.n_max}: must be >= 1")
        if self.e_max <= 0.0:
            problems.append(f"ids.e_max = {self.e_max}: must be positive")
        if self.e_min is not None and not (0.0 < self.e_min < self.e_max):
            problems.append(
                f"ids.e_min = {self.e_min}: must lie in (0, e_max = {self.e_max})"
            )
        if self.per_decade < 1:
            problems.append(f"ids.per_decade = {self.per_decade}: must be >= 1")
        if self.top_anchor is not None and self.top_anchor <= 0.0:
            problems.append(f"ids.top_anchor = {self.top_anchor}: must be positive")
        if self.margin < 0.0:
            problems.append(f"ids.margin = {self.margin}: must be nonnegative")
        if self.fmt not in ("csv", "json"):
            problems.append(f"output.format = {self.fmt!r}: must be 'csv' or 'json'")
        if self.threads < 1:
            problems.append(f"run.threads = {self.threads}: must be >= 1")
        try:
            GeneratorSpec(family=self.family, radius=max(self.radius, 1.0)).validate()
        except GraphGenerationError as exc:
            problems.append(f"graph.family = {self.family!r}: {exc}")
        if problems:
            raise ConfigError("\n".join(problems))

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(family=self.family, radius=self.radius)

    def percolation_params(self, realizations: int | None = None) -> PercolationParams:
        return PercolationParams(
            p=self.p,
            master_seed=self.master_seed,
            realizations=self.realizations if realizations is None else realizations,
        )

    def energy_grid(self, d_max: int, volume: float) -> np.ndarray:
        """Log grid from e_max down to e_min at per_decade points per decade,
        plus the optional high anchor that records the total spectral mass."""
        e_min = self.e_min
        if e_min is None:
            e_min, _ = default_energy_range(
                self.p, d_max, self.realizations, volume
            )
            e_min = min(e_min, self.e_max / 2.0)
        ratio = 10.0 ** (-1.0 / self.per_decade)
        energies = []
        e = self.e_max
        while e >= e_min * (1.0 - 1e-12):
            energies.append(e)
            e *= ratio
        if self.top_anchor is not None:
            energies.append(self.top_anchor)
        return np.unique(np.asarray(energies))


# ---------------------------------------------------------------------------
# config file / flag merging


_CONFIG_LAYOUT = {
    "graph": {"family": ("family", str), "radius": ("radius", float)},
    "patterns": {"pattern_radius": ("pattern_radius", float)},
    "percolation": {
        "p": ("p", float),
        "realizations": ("realizations", int),
        "seed": ("master_seed", int),
        "n_max": ("n_max", int),
    },
    "ids": {
        "counting_radius": ("counting_radius", float),
        "e_min": ("e_min", float),
        "e_max": ("e_max", float),
        "per_decade": ("per_decade", int),
        "top_anchor": ("top_anchor", float),
        "margin": ("margin", float),
    },
    "output": {"dir": ("out_dir", str), "format": ("fmt", str)},
    "run": {"threads": ("threads", int)},
}


def load_config(path: str) -> ExperimentConfig:
    """Parse an INI experiment file, rejecting unknown sections and keys."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _CONFIG_LAYOUT:
            raise ConfigError(
                f"{path}: unknown section [{section}]; "
                f"expected one of {sorted(_CONFIG_LAYOUT)}"
            )
        layout = _CONFIG_LAYOUT[section]
        for key, raw in parser.items(section):
            if key not in layout:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in [{section}]; "
                    f"expected one of {sorted(layout)}"
                )
            attr, cast = layout[key]
            try:
                setattr(cfg, attr, cast(raw))
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: [{section}] {key} = {raw!r}: {exc}"
                ) from exc
    return cfg


def merge_flags(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Apply command-line overrides; flags win over the config file."""
    overrides = {
        "family": args.family,
        "radius": args.radius,
        "counting_radius": getattr(args, "counting_radius", None),
        "pattern_radius": getattr(args, "pattern_radius", None),
        "p": getattr(args, "p", None),
        "realizations": getattr(args, "realizations", None),
        "master_seed": args.seed,
        "n_max": getattr(args, "n_max", None),
        "e_min": getattr(args, "e_min", None),
        "e_max": getattr(args, "e_max", None),
        "per_decade": getattr(args, "per_decade", None),
        "out_dir": args.out,
        "fmt": args.format,
        "threads": args.threads,
    }
    for attr, value in overrides.items():
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


# ---------------------------------------------------------------------------
# atomic outputs and the manifest


@dataclass
class RunManifest:
    """Record of one run: enough to reproduce every output byte-for-byte.

    ``wall_clock_s`` is informational and varies between runs; the contract
    is that re-running with the same config snapshot and seed regenerates
    files matching ``output_sha256`` exactly, regardless of thread count.
    """

    command: str
    config: dict
    code_version: str
    master_seed: int
    output_sha256: dict[str, str] = field(default_factory=dict)
    wall_clock_s: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        body = {
            "command": self.command,
            "config": self.config,
            "code_version": self.code_version,
            "master_seed": self.master_seed,
            "output_sha256": self.output_sha256,
            "wall_clock_s": {k: round(v, 3) for k, v in self.wall_clock_s.items()},
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _atomic_write(out_dir: str, name: str, data: bytes) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, os.path.join(out_dir, name))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class OutputWriter:
    """Collects named outputs, writes them atomically, then the manifest."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.out_dir = cfg.out_dir
        self.manifest = RunManifest(
            command=command,
            config=asdict(cfg),
            code_version=__version__,
            master_seed=cfg.master_seed,
        )
        self._t0 = time.perf_counter()
        self._stage_start = self._t0

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.manifest.wall_clock_s[name] = now - self._stage_start
        self._stage_start = now

    def add(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        os.makedirs(self.out_dir, exist_ok=True)
        _atomic_write(self.out_dir, name, data)
        self.manifest.output_sha256[name] = hashlib.sha256(data).hexdigest()

    def finish(self) -> None:
        self.manifest.wall_clock_s["total"] = time.perf_counter() - self._t0
        os.makedirs(self.out_dir, exist_ok=True)
        _atomic_write(self.out_dir, "manifest.json", self.manifest.to_json().encode())


def _fmt(value) -> str:
    """Deterministic scalar formatting: repr round-trips floats exactly."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# the chunked estimator run shared by `ids` and `lifshits`


def run_ids(cfg: ExperimentConfig, g: EmbeddedGraph, grid: np.ndarray) -> IdsTable:
    """Estimate the spectral counting table, splitting realizations into
    contiguous chunks across threads.

    Realization streams are keyed by absolute index, so the stacked rows are
    identical to a single-threaded run no matter the chunking.
    """
    total = cfg.realizations
    n_chunks = min(cfg.threads, total)
    bounds = np.linspace(0, total, n_chunks + 1).astype(int)

    def one_chunk(start: int, stop: int):
        params = cfg.percolation_params(realizations=stop - start)
        try:
            t = ids_estimate(
                g,
                params,
                grid,
                counting_radius=cfg.counting_radius,
                realization_offset=start,
            )
            return t.rows, t.truncated_realizations, t
        except AllRealizationsTruncated:
            return np.empty((0, 0)), stop - start, None

    if n_chunks == 1:
        results = [one_chunk(0, total)]
    else:
        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            results = list(
                pool.map(lambda se: one_chunk(*se), zip(bounds[:-1], bounds[1:]))
            )

    truncated = sum(r[1] for r in results)
    templates = [r[2] for r in results if r[2] is not None]
    if not templates:
        raise AllRealizationsTruncated(
            "every realization had a counted cluster near the patch boundary; "
            "enlarge the patch or reduce the counting radius"
        )
    rows = np.vstack([r[0] for r in results if r[2] is not None])
    t = templates[0]
    return IdsTable(
        energies=t.energies,
        rows=rows,
        volume=t.volume,
        window_vertices=t.window_vertices,
        p=t.p,
        master_seed=t.master_seed,
        counting_radius=t.counting_radius,
        requested_realizations=total,
        truncated_realizations=truncated,
        graph_signature=t.graph_signature,
    )


def _ids_outputs(cfg: ExperimentConfig, table: IdsTable, writer: OutputWriter) -> None:
    tail_mean, tail_se = table.tail()
    if cfg.fmt == "csv":
        rows = [
            (
                e,
                table.mean[i],
                table.stderr[i],
                tail_mean[i],
                tail_se[i],
                table.realizations,
                table.counting_radius,
                table.p,
                table.master_seed,
            )
            for i, e in enumerate(table.energies)
        ]
        writer.add(
            "ids.csv",
            _csv(
                [
                    "E",
                    "N",
                    "N_stderr",
                    "N_minus_N0",
                    "tail_stderr",
                    "realizations",
                    "counting_radius",
                    "p",
                    "seed",
                ],
                rows,
            ),
        )
    else:
        writer.add(
            "ids.json",
            _json_text(
                {
                    "energies": table.energies.tolist(),
                    "mean": table.mean.tolist(),
                    "stderr": table.stderr.tolist(),
                    "tail": tail_mean.tolist(),
                    "tail_stderr": tail_se.tolist(),
                    "volume": table.volume,
                    "window_vertices": table.window_vertices,
                    "realizations": table.realizations,
                    "requested_realizations": table.requested_realizations,
                    "truncated_realizations": table.truncated_realizations,
                    "counting_radius": table.counting_radius,
                    "p": table.p,
                    "seed": table.master_seed,
                }
            ),
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(cfg: ExperimentConfig) -> int:
    writer = OutputWriter("generate", cfg)
    g = generate(cfg.generator_spec())
    writer.stage("generate")
    report = geometry_report(g)
    writer.stage("geometry")
    writer.add("graph.txt", dumps(g))
    writer.add("geometry.json", _json_text(report.to_dict()))
    writer.finish()
    print(
        f"generated {cfg.family} patch radius {cfg.radius:g}: "
        f"{report.vertex_count} vertices, {report.edge_count} edges "
        f"-> {cfg.out_dir}"
    )
    return 0


def cmd_census(cfg: ExperimentConfig) -> int:
    """Pattern census at the configured radius, plus a finite-local-
    complexity stability verdict: the census on the half-radius patch must
    already contain every translation class seen on the full patch."""
    writer = OutputWriter("census", cfg)
    g = generate(cfg.generator_spec())
    writer.stage("generate")
    census = extract_r_patterns(g, cfg.pattern_radius)
    half_spec = GeneratorSpec(family=cfg.family, radius=cfg.radius / 2.0)
    census_half = extract_r_patterns(generate(half_spec), cfg.pattern_radius)
    writer.stage("census")

    area = math.pi * (cfg.radius - cfg.pattern_radius) ** 2
    rows = [
        (cfg.pattern_radius, rank, count, area, count / area)
        for rank, (_, count) in enumerate(census.most_common())
    ]
    writer.add(
        "census.csv", _csv(["radius", "n", "count", "volume", "frequency"], rows)
    )
    writer.add(
        "census.json",
        _json_text(
            {
                "family": cfg.family,
                "pattern_radius": cfg.pattern_radius,
                "generation_radius": cfg.radius,
                "distinct": census.distinct,
                "distinct_half_radius": census_half.distinct,
                "eligible_centers": census.eligible_centers,
                "flc_stable": census.distinct == census_half.distinct,
            }
        ),
    )
    writer.finish()
    verdict = "stable" if census.distinct == census_half.distinct else "UNSTABLE"
    print(
        f"census r={cfg.pattern_radius:g} on {cfg.family}: "
        f"{census.distinct} classes at radius {cfg.radius:g}, "
        f"{census_half.distinct} at radius {cfg.radius / 2:g} ({verdict})"
    )
    return 0 if census.distinct == census_half.distinct else 1


def cmd_percolate(cfg: ExperimentConfig) -> int:
    writer = OutputWriter("percolate", cfg)
    g = generate(cfg.generator_spec())
    writer.stage("generate")
    params = cfg.percolation_params()
    sizes = cluster_size_tail(g, params, range(1, cfg.n_max + 1))
    exit_n = range(1, min(cfg.n_max, 12) + 1)
    exits = boundary_path_probability(g, params, exit_n)
    chi, chi_se = mean_cluster_size(
        g, params, margin=min(30.0 * g.l_max, cfg.radius / 2.0)
    )
    writer.stage("percolate")

    rows = []
    for est in (sizes, exits):
        for n, v, se in zip(est.n_values, est.estimates, est.stderrs):
            rows.append((est.stat, n, v, se, est.realizations, cfg.master_seed))
    rows.append(("mean_cluster_size", cfg.p, chi, chi_se, cfg.realizations, cfg.master_seed))
    writer.add(
        "clusters.csv",
        _csv(["stat", "n_or_p", "estimate", "stderr", "realizations", "seed"], rows),
    )
    report = bounds_report(cfg.p, g.d_max, g.l_max, chi_hat=chi, chi_stderr=chi_se)
    writer.add("bounds.json", _json_text(report.to_dict()))
    writer.finish()
    print(
        f"percolation p={cfg.p:g} on {cfg.family} radius {cfg.radius:g}: "
        f"chi = {chi:.4f} +/- {chi_se:.4f}, "
        f"subcritical regime: {report.holds_subcritical} -> {cfg.out_dir}"
    )
    return 0


def cmd_ids(cfg: ExperimentConfig) -> int:
    writer = OutputWriter("ids", cfg)
    g = generate(cfg.generator_spec())
    writer.stage("generate")
    if cfg.counting_radius is None:
        cfg.counting_radius = max(cfg.radius - max(cfg.margin, g.l_max), cfg.radius / 2.0)
        writer.manifest.config["counting_radius"] = cfg.counting_radius
    volume = math.pi * cfg.counting_radius**2
    grid = cfg.energy_grid(g.d_max, volume)
    table = run_ids(cfg, g, grid)
    writer.stage("ids")
    _ids_outputs(cfg, table, writer)
    writer.finish()
    print(
        f"spectral count on {cfg.family} radius {cfg.radius:g}, "
        f"window {cfg.counting_radius:g}: {table.realizations} kept, "
        f"{table.truncated_realizations} truncated -> {cfg.out_dir}"
    )
    return 0


def cmd_lifshits(cfg: ExperimentConfig) -> int:
    """The full pipeline: estimate the counting table, fit the linearized
    tail, and certify the two-sided bound."""
    writer = OutputWriter("lifshits", cfg)
    g = generate(cfg.generator_spec())
    writer.stage("generate")
    if cfg.counting_radius is None:
        cfg.counting_radius = max(cfg.radius - max(cfg.margin, g.l_max), cfg.radius / 2.0)
        writer.manifest.config["counting_radius"] = cfg.counting_radius
    volume = math.pi * cfg.counting_radius**2
    grid = cfg.energy_grid(g.d_max, volume)
    table = run_ids(cfg, g, grid)
    writer.stage("ids")

    # the top anchor documents total spectral mass; it sits in the bulk and
    # must not enter the low-energy fit
    analysis = tail_fit(table, e_range=(0.0, cfg.e_max))
    densities = density_report(
        g, [0.5 * cfg.radius, 0.7 * cfg.radius, 0.9 * cfg.radius]
    )
    chi, chi_se = mean_cluster_size(
        g, cfg.percolation_params(), margin=min(30.0 * g.l_max, cfg.radius / 2.0)
    )
    bounds = bounds_report(cfg.p, g.d_max, g.l_max, chi_hat=chi, chi_stderr=chi_se)
    report = certify_bracketing(
        analysis,
        rho=densities.rho_hat,
        rho_inf=densities.rho_infinity_hat,
        p=cfg.p,
        d_max=g.d_max,
        lambda_emp=bounds.lambda_decay,
    )
    writer.stage("certify")

    _ids_outputs(cfg, table, writer)
    summary = {
        "slope": analysis.slope,
        "slope_stderr": analysis.slope_stderr,
        "intercept": analysis.intercept,
        "intercept_stderr": analysis.intercept_stderr,
        "r_squared": analysis.r_squared,
        "loglog_ratio": analysis.loglog_ratio,
        "n_fit_points": analysis.n_fit_points,
        "decades_spanned": analysis.decades_spanned,
        "reliability_floor": analysis.floor,
        "fit_range": list(analysis.fit_range),
        "gamma": gamma_rate(cfg.p, g.d_max),
        "realizations": table.realizations,
        "truncated_realizations": table.truncated_realizations,
    }
    summary.update(report.to_dict())
    writer.add("lifshits.json", _json_text(summary))
    point_rows = [
        (
            report.energies[i],
            report.tail[i],
            report.stderr[i],
            report.lower[i],
            report.upper[i],
            report.rigorous_ok[i],
            report.diagnostic_ok[i],
        )
        for i in range(report.energies.size)
    ]
    writer.add(
        "lifshits.csv",
        _csv(
            [
                "E",
                "tail",
                "tail_stderr",
                "lower_bound",
                "upper_bound",
                "rigorous_ok",
                "diagnostic_ok",
            ],
            point_rows,
        ),
    )
    writer.finish()
    print(
        f"tail fit on {cfg.family} radius {cfg.radius:g}: slope "
        f"{analysis.slope:.4f} +/- {analysis.slope_stderr:.4f}, "
        f"R^2 = {analysis.r_squared:.4f} over {analysis.decades_spanned:.2f} "
        f"decades; rigorous bracket: "
        f"{'PASS' if report.bracket_pass else 'FAIL'} -> {cfg.out_dir}"
    )
    return 0 if report.bracket_pass else 1


# ---------------------------------------------------------------------------
# verify: fast named invariant checks on small instances


def _check_chain_closed_form() -> tuple[bool, str]:
    worst_e, worst_v = 0.0, 0.0
    for l in range(2, 51):
        edges = np.array([(i, i + 1) for i in range(l - 1)], dtype=np.int64)
        lap = laplacian_from_edges(l, edges)
        vals, vecs = eigensystem(lap)
        cs = chain_spectrum(l)
        worst_e = max(worst_e, float(np.abs(np.sort(vals) - cs.energies).max()))
        for k in range(l):
            ref = cs.vectors[:, k]
            num = vecs[:, k]
            worst_v = max(
                worst_v, float(min(np.abs(num - ref).max(), np.abs(num + ref).max()))
            )
    ok = worst_e < 1e-9 and worst_v < 1e-8
    return ok, f"max eigenvalue err {worst_e:.2e}, eigenvector err {worst_v:.2e}"


def _check_threshold_closed_form() -> tuple[bool, str]:
    got = [bounds_report(0.1, d, 1.0).p_c_lower for d in (4, 3, 6)]
    ok = got == [1.0 / 3.0, 1.0 / 2.0, 1.0 / 5.0]
    return ok, f"p_c lower bounds {got}"


def _check_ids_vs_enumeration() -> tuple[bool, str]:
    g = generate(GeneratorSpec(family="square", radius=1.8))
    p, reals = 0.3, 1500
    grid = [0.017 + 0.35 * k for k in range(10)]
    params = PercolationParams(p=p, master_seed=11, realizations=reals)
    table = ids_estimate(g, params, grid, flag_boundary=False)
    oracle_grid, oracle_mean, oracle_var = bruteforce_ids_oracle(g, p, grid)
    se = np.sqrt(oracle_var / reals)
    dev = np.abs(table.mean - oracle_mean) / np.where(se > 0, se, 1.0)
    ok = bool(np.all(dev <= 4.0))
    return ok, f"max deviation {dev.max():.2f} sigma over {len(grid)} energies"


def _check_cheeger() -> tuple[bool, str]:
    g = generate(GeneratorSpec(family="square", radius=12.0))
    params = PercolationParams(p=0.2, master_seed=3, realizations=30)
    configs = [sample(g, params, r) for r in range(params.realizations)]
    rep = cheeger_check(g, configs)
    return rep.all_hold, f"{rep.checked} clusters, {rep.violations} violations"


def _check_monotone_coupling() -> tuple[bool, str]:
    g = generate(GeneratorSpec(family="square", radius=10.0))
    bad = 0
    for r in range(100):
        u = edge_uniforms(g.n_edges, 5, r)
        if not np.all((u < 0.15) <= (u < 0.45)):
            bad += 1
    return bad == 0, f"{bad} of 100 realizations violate edgewise ordering"


def _check_determinism() -> tuple[bool, str]:
    cfg = ExperimentConfig(
        family="square", radius=12.0, counting_radius=8.0, p=0.2,
        realizations=24, master_seed=9,
    )
    g = generate(cfg.generator_spec())
    grid = cfg.energy_grid(g.d_max, math.pi * 64.0)
    serial = run_ids(cfg, g, grid)
    again = run_ids(cfg, g, grid)
    cfg.threads = 3
    chunked = run_ids(cfg, g, grid)
    ok = bool(
        np.array_equal(serial.rows, again.rows)
        and np.array_equal(serial.rows, chunked.rows)
    )
    return ok, f"{serial.rows.shape[0]} rows, serial == rerun == 3-thread chunks: {ok}"


def _check_total_mass() -> tuple[bool, str]:
    g = generate(GeneratorSpec(family="square", radius=10.0))
    cfg = ExperimentConfig(
        family="square", radius=10.0, counting_radius=6.0, p=0.25,
        realizations=20, master_seed=4,
    )
    table = run_ids(cfg, g, np.array([9.0]))
    mass = table.rows[:, -1] * table.volume
    ok = bool(np.allclose(mass, table.window_vertices, atol=1e-8))
    return ok, f"window mass {mass[0]:.6f} vs {table.window_vertices} vertices"


def _check_bracket_consistency() -> tuple[bool, str]:
    worst = np.inf
    for e in np.logspace(-2, 0.7, 30):
        lb = lower_bound(float(e), 0.1, 4, 1.0)
        ub = upper_bound(float(e), 0.1, 1.0, 2.0, lambda_decay=0.2)
        worst = min(worst, ub / lb)
    return worst >= 1.0, f"min upper/lower ratio {worst:.3e}"


def _check_tail_fit_selftest() -> tuple[bool, str]:
    e = 0.1 * 10 ** (-np.arange(13) / 12.0)
    grid = np.concatenate([[0.0], e[::-1]])
    vals = np.concatenate([[0.0], np.exp(-3.0 * e[::-1] ** -0.5)])
    table = IdsTable(
        energies=grid,
        rows=np.tile(vals, (120, 1)),
        volume=1e18,
        window_vertices=0,
        p=0.1,
        master_seed=0,
        counting_radius=None,
        requested_realizations=120,
        truncated_realizations=0,
    )
    fit = tail_fit(table)
    ok = abs(fit.slope - 3.0) < 1e-6
    return ok, f"recovered slope {fit.slope:.8f} (target 3 to 6 digits)"


_VERIFY_CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("chain-closed-form", _check_chain_closed_form),
    ("threshold-closed-form", _check_threshold_closed_form),
    ("ids-vs-enumeration", _check_ids_vs_enumeration),
    ("cheeger-gate", _check_cheeger),
    ("monotone-coupling", _check_monotone_coupling),
    ("determinism-chunking", _check_determinism),
    ("window-total-mass", _check_total_mass),
    ("bracket-consistency", _check_bracket_consistency),
    ("tail-fit-selftest", _check_tail_fit_selftest),
]


def cmd_verify(cfg: ExperimentConfig) -> int:
    writer = OutputWriter("verify", cfg)
    results = []
    width = max(len(name) for name, _ in _VERIFY_CHECKS)
    all_ok = True
    for name, check in _VERIFY_CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = check()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        all_ok &= ok
        results.append({"name": name, "pass": ok, "detail": detail, "seconds": round(dt, 3)})
        print(f"{'ok  ' if ok else 'FAIL'} {name:<{width}}  {detail}  [{dt:.2f}s]")
    writer.stage("checks")
    writer.add("verify.json", _json_text({"all_pass": all_ok, "checks": results}))
    writer.finish()
    print(f"{'all checks passed' if all_ok else 'CHECKS FAILED'} -> {cfg.out_dir}")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# argument parsing and entry point


_COMMANDS = {
    "generate": cmd_generate,
    "census": cmd_census,
    "percolate": cmd_percolate,
    "ids": cmd_ids,
    "lifshits": cmd_lifshits,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="percospec",
        description="Percolation, pattern, and spectral-tail experiments "
        "on periodic and aperiodic planar graphs.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file (flags win)")
    common.add_argument("--seed", type=int, help="master seed for all randomness")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker cap; results identical for any value")
    common.add_argument("--format", choices=["csv", "json"], help="primary table format")
    common.add_argument("--family", help="graph family: square, triangular, penrose, ammann_beenker")
    common.add_argument("--radius", type=float, help="generation radius of the patch")

    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("generate", parents=[common], help="generate a patch and its geometry report")
    sp = sub.add_parser("census", parents=[common], help="r-pattern census and FLC stability verdict")
    sp.add_argument("--pattern-radius", dest="pattern_radius", type=float, help="pattern ball radius")
    for name, hlp in (
        ("percolate", "cluster statistics and decay-constant report"),
        ("ids", "Monte Carlo spectral counting table"),
        ("lifshits", "counting table, tail fit, and bracket certification"),
    ):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("--p", type=float, help="bond probability")
        sp.add_argument("--realizations", type=int, help="number of bond realizations")
        if name == "percolate":
            sp.add_argument("--n-max", dest="n_max", type=int, help="largest cluster-size scale")
        else:
            sp.add_argument("--counting-radius", dest="counting_radius", type=float,
                            help="radius of the counting window (default: radius - margin)")
            sp.add_argument("--e-min", dest="e_min", type=float, help="lowest grid energy")
            sp.add_argument("--e-max", dest="e_max", type=float, help="highest grid energy")
            sp.add_argument("--per-decade", dest="per_decade", type=int,
                            help="grid points per decade of energy")
    sub.add_parser("verify", parents=[common], help="run fast invariant checks and print a table")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = merge_flags(cfg, args)
        if args.out is None and args.config is None:
            cfg.out_dir = os.path.join("runs", args.command)
        cfg.validate()
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return 2
    except (InsufficientTailData, AllRealizationsTruncated) as exc:
        print(f"statistical failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
