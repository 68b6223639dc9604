"""
Command-line entry point: ``chansim run|sweep-pathloss|figures|stats``.
"""
import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

from chansim import __version__
from chansim.antenna import AntennaArraySpec, ElementPattern, array_gain_pattern, directivity_dbi, hpbw
from chansim.errors import ConfigError, ModelValidityError
from chansim.export import cluster_frame, write_frame, write_tensor_binary, write_tensor_csv
from chansim.gscm import LSP_NAMES, ScenarioParameterTable, assemble_link, draw_lsps, resolve_link_state
from chansim.link_state import MaterialMix, o2i_loss
from chansim.pathloss import pl_5g_uma
from chansim.runconfig import RunConfig, SweepSettings, parse_config
from chansim.scenario import LinkGeometry, Position3D
from chansim.spatial import SCMode, max_step_delay_jump, simulate_trajectory
from utils.config import DEFAULT_WORKERS, ENV_HEIGHT_M, LOG_LEVEL
from utils.helpers import drop_rng

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_IO = 4
MIN_STATS_DROPS = 100
O2I_PRESETS = ("low-loss", "high-loss")


def _ordered_map(func: Callable, items: Iterable, workers: int) -> list:
    """Map in input order; results do not depend on the worker count."""
    items = list(items)
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _versions() -> dict:
    return {"chansim": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__}


def _file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(output_dir: Path, command: str, cfg: Optional[RunConfig], files: Sequence[Path]) -> Path:
    """
    Manifest with config hash, package versions and output digests.

    Contains nothing time- or host-dependent, so reruns produce the same bytes.
    """
    manifest = {
        "command": command,
        "versions": _versions(),
        "files": {Path(f).name: _file_digest(f) for f in sorted(files, key=lambda p: Path(p).name)},
    }
    if cfg is not None:
        manifest.update({"config_sha256": cfg.config_hash(), "seed": cfg.seed, "config": cfg.raw})
    path = Path(output_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run_pathloss_sweep(settings: SweepSettings, h_env: float = ENV_HEIGHT_M) -> pd.DataFrame:
    """
    UMa LOS and NLOS pathloss over a distance grid and a frequency list.

    Args:
        settings: Distance grid (ground distance), frequencies and heights
        h_env: Effective environment height

    Returns:
        Frame with columns d_m, f_GHz, state, pl_db
    """
    rows = []
    bs = Position3D(0.0, 0.0, settings.h_bs)
    for f_ghz in settings.freqs_ghz:
        for d in settings.distances():
            los, nlos = pl_5g_uma(LinkGeometry(bs, Position3D(float(d), 0.0, settings.h_ms)), f_ghz, h_env)
            rows.append((float(d), f_ghz, "LOS", los))
            rows.append((float(d), f_ghz, "NLOS", nlos))
    return pd.DataFrame(rows, columns=["d_m", "f_GHz", "state", "pl_db"])


def run_drops(cfg: RunConfig, workers: Optional[int] = None) -> list:
    """Assemble every drop of the run, ordered by drop index."""
    link = cfg.link_config()
    return _ordered_map(lambda i: assemble_link(link, cfg.seed, i, cfg.table),
                        range(cfg.drops), workers or cfg.workers)


def command_run(cfg: RunConfig, workers: Optional[int] = None) -> list[Path]:
    tensors = run_drops(cfg, workers)
    out = cfg.output_dir
    files = [
        write_frame(pd.concat([cluster_frame(t.clusters, i) for i, t in enumerate(tensors)], ignore_index=True),
                    out / "clusters.csv"),
        write_frame(pd.DataFrame({
            "drop": [t.metadata["drop"] for t in tensors],
            "state": [t.metadata["state"] for t in tensors],
            "pathloss_db": [t.metadata["pathloss_db"] if t.metadata["pathloss_db"] is not None else np.nan
                            for t in tensors],
            "shadow_db": [t.metadata["shadow_db"] for t in tensors],
            "wideband_power": [float(t.wideband_power().mean()) for t in tensors],
        }), out / "drops.csv"),
        write_tensor_csv(tensors[0], out / "channel.csv"),
        write_tensor_binary(tensors[0], out / "channel.bin"),
    ]
    if cfg.sc:
        track = simulate_trajectory(cfg.link_config(), cfg.route(), SCMode.SC_I, cfg.seed, cfg.table)
        files.append(write_frame(track.to_frame(), out / "sc_tracks.csv"))
    files.append(write_manifest(out, "run", cfg, files))
    return files


def array_figure(panel: tuple, grid_step_deg: float) -> tuple[pd.DataFrame, dict]:
    """Gain map and beam summary of a dual-polarized (rows, columns, d_h, d_v) panel."""
    rows, columns, d_h, d_v = panel
    spec = AntennaArraySpec(rows=rows, columns=columns, polarizations=2, d_h=d_h, d_v=d_v, element=ElementPattern())
    gain_map = array_gain_pattern(spec, (90.0, 0.0), grid_step_deg)
    peak_gain, _, _ = gain_map.peak()
    summary = {
        "array": f"{rows}x{columns}x2",
        "peak_dbi": peak_gain,
        "directivity_dbi": directivity_dbi(gain_map),
        "hpbw_azimuth_deg": hpbw(gain_map, "azimuth"),
        "hpbw_zenith_deg": hpbw(gain_map, "zenith"),
    }
    return gain_map.to_frame(), summary


def o2i_figure(freqs_ghz: Sequence[float], draws: int, seed: int) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Penetration loss samples (through-wall plus excess) per preset and frequency."""
    rows = []
    for index, preset in enumerate(O2I_PRESETS):
        mix = MaterialMix.preset(preset)
        rng = drop_rng(seed, index)
        for f_ghz in freqs_ghz:
            for sample in range(draws):
                loss = o2i_loss(mix, f_ghz, 0.0, rng)
                rows.append((preset, f_ghz, sample, loss.pl_tw + loss.excess))
    samples = pd.DataFrame(rows, columns=["preset", "f_GHz", "sample", "loss_db"])
    means = (samples.groupby(["preset", "f_GHz"], sort=False)["loss_db"]
             .agg(mean_db="mean", std_db="std").reset_index())
    return samples, means


def command_figures(cfg: RunConfig, workers: Optional[int] = None) -> list[Path]:
    out = cfg.output_dir
    fig = cfg.figures
    link = cfg.link_config()
    route = cfg.route()
    tasks = {
        "sweep": lambda: run_pathloss_sweep(cfg.sweep, cfg.h_env),
        "large": lambda: array_figure(fig.large_array, fig.grid_step_deg),
        "small": lambda: array_figure(fig.small_array, fig.grid_step_deg),
        "o2i": lambda: o2i_figure(fig.o2i_freqs_ghz, fig.o2i_draws, cfg.seed),
        "sc": lambda: simulate_trajectory(link, route, SCMode.SC_I, cfg.seed, cfg.table),
        "drop": lambda: simulate_trajectory(link, route, SCMode.DROP, cfg.seed, cfg.table),
    }
    names = list(tasks)
    results = dict(zip(names, _ordered_map(lambda name: tasks[name](), names, workers or cfg.workers)))

    large_frame, large_summary = results["large"]
    small_frame, small_summary = results["small"]
    o2i_samples, o2i_means = results["o2i"]
    sc_track, drop_track = results["sc"], results["drop"]
    logger.info("SC-I max step delay jump %.3g ns, drop-based %.3g ns",
                max_step_delay_jump(sc_track) * 1e9, max_step_delay_jump(drop_track) * 1e9)
    files = [
        write_frame(results["sweep"], out / "pathloss_sweep.csv"),
        write_frame(large_frame, out / "array_gain_large.csv"),
        write_frame(small_frame, out / "array_gain_small.csv"),
        write_frame(pd.DataFrame([large_summary, small_summary]), out / "array_summary.csv"),
        write_frame(o2i_samples, out / "o2i_loss.csv"),
        write_frame(o2i_means, out / "o2i_loss_mean.csv"),
        write_frame(sc_track.to_frame(), out / "sc_tracks.csv"),
        write_frame(drop_track.to_frame(), out / "drop_tracks.csv"),
    ]
    files.append(write_manifest(out, "figures", cfg, files))
    return files


def run_statistics(cfg: RunConfig, workers: Optional[int] = None) -> dict:
    """
    Large-scale parameter statistics over the run's drops against the table targets.

    Drops use the same streams as ``run``, so drop k here is drop k there.
    """
    if cfg.drops < MIN_STATS_DROPS:
        raise ConfigError(f"stats needs at least {MIN_STATS_DROPS} drops, got {cfg.drops}", "drops")
    link = cfg.link_config()
    table = cfg.table or ScenarioParameterTable.load()

    def one_drop(index: int):
        rng = drop_rng(cfg.seed, index)
        state = resolve_link_state(link, rng)
        return state, draw_lsps(table, cfg.scenario, state, cfg.carrier.f_c, rng)

    drops = _ordered_map(one_drop, range(cfg.drops), workers or cfg.workers)
    records = []
    for state in sorted({s for s, _ in drops}, key=lambda s: s.value):
        lsps = [lsp for s, lsp in drops if s is state]
        entry = table.entry(cfg.scenario, state)
        n = len(lsps)
        for name in LSP_NAMES:
            values = np.array([lsp.lg[name] for lsp in lsps])
            mu, sigma = entry.mu(name, cfg.carrier.f_ghz), entry.sigma(name, cfg.carrier.f_ghz)
            mean = float(values.mean())
            std = float(values.std(ddof=1)) if n > 1 else 0.0
            half_width = 1.96 * std / np.sqrt(n)
            records.append({
                "state": state.value,
                "parameter": f"lg{name}",
                "n": n,
                "mean_lg": mean,
                "std_lg": std,
                "ci95_low_lg": mean - half_width,
                "ci95_high_lg": mean + half_width,
                "target_mu_lg": mu,
                "target_sigma_lg": sigma,
                "mean_pass": bool(abs(mean - mu) <= 3.0 * sigma / np.sqrt(n)),
                "std_pass": bool(abs(std - sigma) <= 0.05 * sigma),
            })
    return {"config_sha256": cfg.config_hash(), "seed": cfg.seed, "drops": cfg.drops,
            "f_c_ghz": cfg.carrier.f_ghz, "scenario": cfg.scenario.value, "records": records}


def command_stats(cfg: RunConfig, workers: Optional[int] = None) -> list[Path]:
    summary = run_statistics(cfg, workers)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files = [summary_path, write_frame(pd.DataFrame(summary["records"]), out / "stats.csv")]
    files.append(write_manifest(out, "stats", cfg, files))
    return files


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, help=f"worker threads (default from config, else {DEFAULT_WORKERS})")
    common.add_argument("--output", type=Path, help="output directory (file for sweep-pathloss)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    parser = argparse.ArgumentParser(prog="chansim", description="Seedable radio channel simulator")
    parser.add_argument("--version", action="version", version=f"chansim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "generate drops and channel tensors"),
                            ("figures", "write the plot-ready figure data"),
                            ("stats", "large-scale parameter statistics")):
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        cmd.add_argument("config", type=Path, help="run configuration (JSON)")

    sweep = sub.add_parser("sweep-pathloss", parents=[common], help="UMa LOS/NLOS pathloss sweep")
    defaults = SweepSettings()
    sweep.add_argument("--d-min", type=float, default=defaults.d_min, help="first ground distance in m")
    sweep.add_argument("--d-max", type=float, default=defaults.d_max, help="last ground distance in m")
    sweep.add_argument("--d-step", type=float, default=defaults.d_step, help="distance step in m")
    sweep.add_argument("--freqs", default=",".join(f"{f:g}" for f in defaults.freqs_ghz),
                       help="comma separated carrier frequencies in GHz")
    sweep.add_argument("--h-bs", type=float, default=defaults.h_bs, help="BS height in m")
    sweep.add_argument("--h-ms", type=float, default=defaults.h_ms, help="MS height in m")
    return parser


def _configure_logging(verbose: int) -> None:
    level = {0: LOG_LEVEL, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _sweep_settings(args: argparse.Namespace) -> SweepSettings:
    try:
        freqs = tuple(float(f) for f in args.freqs.split(",") if f.strip())
    except ValueError:
        raise ConfigError(f"--freqs must be comma separated numbers, got '{args.freqs}'", "freqs") from None
    if not freqs:
        raise ConfigError("--freqs is empty", "freqs")
    return SweepSettings(args.d_min, args.d_max, args.d_step, freqs, args.h_bs, args.h_ms)


def _dispatch(args: argparse.Namespace) -> list[Path]:
    if args.workers is not None and args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}", "workers")
    if args.command == "sweep-pathloss":
        frame = run_pathloss_sweep(_sweep_settings(args))
        return [write_frame(frame, args.output or Path("pathloss_sweep.csv"))]

    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    handler = {"run": command_run, "figures": command_figures, "stats": command_stats}[args.command]
    return handler(cfg, args.workers)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI.

    Returns:
        0 on success, 2 config error, 3 model-validity error, 4 I/O error
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        files = _dispatch(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelValidityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    for path in files:
        logger.info("output: %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
