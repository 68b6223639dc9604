"""
Run configuration: strict JSON schema, defaults and conversion to model objects.
"""
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from chansim.antenna import LARGE_PANEL, SMALL_PANEL, AntennaArraySpec, ElementPattern
from chansim.errors import ConfigError, ModelValidityError
from chansim.gscm import LOS_MODELS, LinkConfig, ScenarioParameterTable
from chansim.link_state import AngleSide, draw_blocker_regions, self_blocking_region
from chansim.scenario import CarrierSpec, LinkGeometry, LinkState, MsVelocity, Position3D, ScenarioKind
from chansim.spatial import Trajectory
from utils.config import DEFAULT_WORKERS, ENV_HEIGHT_M
from utils.helpers import drop_rng

logger = logging.getLogger(__name__)

NUMBER = (int, float)
# stream index reserved for run-level draws that are not tied to a drop
BLOCKER_STREAM = 2 ** 32 - 1

ARRAY_SCHEMA = {
    "rows": int,
    "columns": int,
    "polarizations": int,
    "d_h": NUMBER,
    "d_v": NUMBER,
    "isotropic": bool,
    "max_gain": NUMBER,
    "hpbw_deg": NUMBER,
    "boresight_azimuth_deg": NUMBER,
}

SCHEMA = {
    "scenario": {"name": str, "state": str, "o2i_preset": str},
    "carrier": {"f_ghz": NUMBER, "bandwidth_mhz": NUMBER},
    "geometry": {"bs": list, "ms": list, "speed": NUMBER, "travel_azimuth_deg": NUMBER, "h_env": NUMBER},
    "antennas": {"bs": ARRAY_SCHEMA, "ms": ARRAY_SCHEMA},
    "features": {"oxygen": bool, "o2i": bool, "blockage": bool, "self_blocking": str, "blockers": int, "sc": bool},
    "run": {"seed": int, "drops": int, "workers": int, "output": str, "times_s": list},
    "sweep": {"d_min": NUMBER, "d_max": NUMBER, "d_step": NUMBER, "freqs_ghz": list, "h_bs": NUMBER, "h_ms": NUMBER},
    "figures": {"grid_step_deg": NUMBER, "o2i_draws": int, "o2i_freqs_ghz": list,
                "large_array": list, "small_array": list},
    "trajectory": {"waypoints": list, "speed": NUMBER, "step": NUMBER},
    "overrides": dict,
}

OVERRIDE_FIELDS = {
    "clusters": int,
    "delay_scaling": NUMBER,
    "cluster_shadowing_db": NUMBER,
    "c_asd": NUMBER,
    "c_asa": NUMBER,
    "c_zsa": NUMBER,
    "xpr_mu_db": NUMBER,
    "xpr_sigma_db": NUMBER,
    "k_mu_db": NUMBER,
    "k_sigma_db": NUMBER,
}

REQUIRED = (("scenario", "name"), ("carrier", "f_ghz"), ("run", "seed"))


@dataclass(frozen=True)
class SweepSettings:
    d_min: float = 10.0
    d_max: float = 4000.0
    d_step: float = 10.0
    freqs_ghz: tuple = (2.0, 28.0, 100.0)
    h_bs: float = 25.0
    h_ms: float = 1.5

    def distances(self) -> np.ndarray:
        if self.d_step <= 0 or self.d_max < self.d_min:
            raise ConfigError(f"bad sweep range [{self.d_min:g}, {self.d_max:g}] step {self.d_step:g}")
        return np.arange(self.d_min, self.d_max + self.d_step / 2.0, self.d_step)


@dataclass(frozen=True)
class FigureSettings:
    grid_step_deg: float = 0.5
    o2i_draws: int = 1000
    o2i_freqs_ghz: tuple = (2.0, 6.0, 10.0, 28.0, 39.0, 60.0, 73.0, 100.0)
    # (rows, columns, d_h, d_v)
    large_array: tuple = (LARGE_PANEL.rows, LARGE_PANEL.columns, LARGE_PANEL.d_h, LARGE_PANEL.d_v)
    small_array: tuple = (SMALL_PANEL.rows, SMALL_PANEL.columns, SMALL_PANEL.d_h, SMALL_PANEL.d_v)


@dataclass
class RunConfig:
    """Validated run configuration plus the raw document it came from."""

    scenario: ScenarioKind
    state: Optional[LinkState]
    carrier: CarrierSpec
    geometry: LinkGeometry
    bs_array: AntennaArraySpec
    ms_array: AntennaArraySpec
    seed: int
    drops: int = 1
    workers: int = DEFAULT_WORKERS
    output_dir: Path = Path("output")
    times: tuple = (0.0,)
    h_env: float = ENV_HEIGHT_M
    oxygen: bool = False
    o2i_preset: Optional[str] = None
    blockage: bool = False
    self_blocking: Optional[str] = None
    blocker_count: int = 0
    sc: bool = False
    sweep: SweepSettings = field(default_factory=SweepSettings)
    figures: FigureSettings = field(default_factory=FigureSettings)
    trajectory: Optional[Trajectory] = None
    table: Optional[ScenarioParameterTable] = None
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form of the raw document."""
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("run", {})["seed"] = int(seed)
        return replace(self, seed=int(seed), raw=raw)

    def blockers(self) -> tuple:
        if not self.blockage:
            return ()
        regions = []
        if self.self_blocking:
            regions.append(self_blocking_region(self.self_blocking))
        if self.blocker_count:
            regions.extend(draw_blocker_regions(self.blocker_count, drop_rng(self.seed, BLOCKER_STREAM),
                                                AngleSide.AOA))
        return tuple(regions)

    def link_config(self) -> LinkConfig:
        return LinkConfig(
            scenario=self.scenario,
            carrier=self.carrier,
            geometry=self.geometry,
            state=self.state,
            tx_array=self.bs_array,
            rx_array=self.ms_array,
            times=tuple(self.times),
            oxygen=self.oxygen,
            o2i_preset=self.o2i_preset,
            blockers=self.blockers(),
            h_env=self.h_env,
        )

    def route(self) -> Trajectory:
        """Configured trajectory, or 20 m along +x from the MS at walking speed."""
        if self.trajectory is not None:
            return self.trajectory
        start = self.geometry.ms_pos
        end = Position3D(start.x + 20.0, start.y, start.z)
        return Trajectory((start, end), speed=0.83, step=0.1)


def _key_line(text: str, key: str, section: str = "") -> Optional[int]:
    """
    Line of ``key`` inside the dotted ``section`` path, 1-based.

    Each path component is located after the previous one, so a key name
    shared by two sections resolves to the one under ``section``.
    """
    position = 0
    for name in [part for part in section.split(".") if part] + [key]:
        match = re.compile(rf'"{re.escape(name)}"\s*:').search(text, position)
        if match is None:
            return None
        position = match.end()
    return text.count("\n", 0, position) + 1


def _check_type(value: Any, expected, key: str, text: str, path: str = "") -> None:
    types = expected if isinstance(expected, tuple) else (expected,)
    # bool is an int subclass; only accept it where bool is asked for
    if isinstance(value, bool) and bool not in types:
        ok = False
    else:
        ok = isinstance(value, types)
    if not ok:
        names = "/".join(t.__name__ for t in types)
        raise ConfigError(f"key '{key}' must be {names}, got {type(value).__name__}",
                          key, _key_line(text, key, path))


def _validate(document: dict, schema: dict, text: str, path: str = "") -> None:
    for key, value in document.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' in {path or 'config'}", key, _key_line(text, key, path))
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"section '{where}' must be an object", key, _key_line(text, key, path))
            _validate(value, expected, text, where)
        elif expected is dict:
            _check_type(value, dict, key, text, path)
        else:
            _check_type(value, expected, key, text, path)


def _array_spec(section: dict, default_rows: int = 1, default_columns: int = 1) -> AntennaArraySpec:
    if section.get("isotropic", False):
        element = ElementPattern.isotropic_element()
    else:
        hpbw = float(section.get("hpbw_deg", 65.0))
        element = ElementPattern(max_gain=float(section.get("max_gain", 8.0)),
                                 hpbw_azimuth_deg=hpbw, hpbw_zenith_deg=hpbw)
    return AntennaArraySpec(
        rows=int(section.get("rows", default_rows)),
        columns=int(section.get("columns", default_columns)),
        polarizations=int(section.get("polarizations", 1)),
        d_h=float(section.get("d_h", 0.5)),
        d_v=float(section.get("d_v", 0.7)),
        element=element,
        boresight_azimuth_deg=float(section.get("boresight_azimuth_deg", 0.0)),
    )


def _position(values: list, key: str, text: str, section: str = "") -> Position3D:
    if len(values) != 3 or not all(isinstance(v, NUMBER) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"'{key}' must be a list of three numbers", key, _key_line(text, key, section))
    return Position3D.from_sequence(values)


def _number_list(values: list, key: str, text: str, section: str = "") -> tuple:
    if not values or not all(isinstance(v, NUMBER) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"'{key}' must be a non-empty list of numbers", key, _key_line(text, key, section))
    return tuple(float(v) for v in values)


def _panel(section: dict, key: str, default: tuple, text: str) -> tuple:
    """[rows, columns] keeps the default spacings; [rows, columns, d_h, d_v] sets them."""
    if key not in section:
        return default
    values = section[key]
    layout_ok = len(values) in (2, 4) and all(isinstance(v, int) and not isinstance(v, bool) for v in values[:2])
    if not layout_ok or not all(isinstance(v, NUMBER) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"'{key}' must be [rows, columns] or [rows, columns, d_h, d_v]",
                          key, _key_line(text, key, "figures"))
    if len(values) == 2:
        return (int(values[0]), int(values[1])) + tuple(default[2:])
    return int(values[0]), int(values[1]), float(values[2]), float(values[3])


def _apply_overrides(table: ScenarioParameterTable, overrides: dict, text: str) -> ScenarioParameterTable:
    for target, changes in overrides.items():
        try:
            scenario_name, state_name = target.split("/")
            scenario, state = ScenarioKind.parse(scenario_name), LinkState.parse(state_name)
        except ValueError:
            raise ConfigError(f"override target '{target}' must be '<scenario>/<state>'",
                              target, _key_line(text, target, "overrides")) from None
        if not isinstance(changes, dict):
            raise ConfigError(f"override '{target}' must be an object",
                              target, _key_line(text, target, "overrides"))
        _validate(changes, OVERRIDE_FIELDS, text, f"overrides.{target}")
        table = table.override(scenario, state, **changes)
    return table


def parse_config_text(text: str, base_dir: Path = Path(".")) -> RunConfig:
    """
    Parse and validate a run configuration document.

    Args:
        text: JSON document
        base_dir: Directory relative output paths are resolved against

    Returns:
        RunConfig with defaults filled in

    Raises:
        ConfigError: Malformed JSON, unknown or missing keys, wrong types, or a
            carrier outside the scenario's frequency range
        ModelValidityError: Values outside model validity ranges
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(document, dict):
        raise ConfigError("config must be a JSON object")
    _validate(document, SCHEMA, text)
    for section, key in REQUIRED:
        if key not in document.get(section, {}):
            raise ConfigError(f"missing required key '{section}.{key}'", key)

    scenario_sec = document["scenario"]
    try:
        scenario = ScenarioKind.parse(scenario_sec["name"])
        state_name = scenario_sec.get("state", "probabilistic")
        state = None if state_name.lower() == "probabilistic" else LinkState.parse(state_name)
    except ValueError as e:
        raise ConfigError(str(e), "scenario", _key_line(text, "scenario")) from None
    if state is None and scenario not in LOS_MODELS:
        raise ConfigError(f"{scenario.value} has no LOS probability model; set scenario.state",
                          "state", _key_line(text, "state", "scenario"))

    carrier_sec = document["carrier"]
    carrier = CarrierSpec.from_ghz(float(carrier_sec["f_ghz"]), float(carrier_sec.get("bandwidth_mhz", 100.0)))

    table = ScenarioParameterTable.load()
    try:
        table.check_frequency(scenario, carrier.f_ghz)
    except ModelValidityError as e:
        raise ConfigError(str(e), "f_ghz", _key_line(text, "f_ghz", "carrier")) from None
    table = _apply_overrides(table, document.get("overrides", {}), text)

    geo = document.get("geometry", {})
    velocity = MsVelocity(float(geo.get("speed", 0.0)), float(geo.get("travel_azimuth_deg", 0.0)))
    geometry = LinkGeometry.from_positions(
        _position(geo.get("bs", [0.0, 0.0, 25.0]), "bs", text, "geometry"),
        _position(geo.get("ms", [100.0, 0.0, 1.5]), "ms", text, "geometry"),
        velocity,
    )

    antennas = document.get("antennas", {})
    bs_array = _array_spec(antennas["bs"]) if "bs" in antennas else AntennaArraySpec.isotropic()
    ms_array = _array_spec(antennas["ms"]) if "ms" in antennas else AntennaArraySpec.isotropic()

    features = document.get("features", {})
    run = document["run"]
    drops = int(run.get("drops", 1))
    if drops < 1:
        raise ConfigError(f"run.drops must be >= 1, got {drops}", "drops", _key_line(text, "drops", "run"))
    workers = int(run.get("workers", DEFAULT_WORKERS))
    if workers < 1:
        raise ConfigError(f"run.workers must be >= 1, got {workers}", "workers", _key_line(text, "workers", "run"))
    output = Path(run.get("output", "output"))
    times = _number_list(run["times_s"], "times_s", text, "run") if "times_s" in run else (0.0,)

    sweep_sec = document.get("sweep", {})
    sweep = SweepSettings(**{k: (_number_list(v, k, text, "sweep") if k == "freqs_ghz" else float(v))
                             for k, v in sweep_sec.items()})

    fig_sec = document.get("figures", {})
    figures = FigureSettings(
        grid_step_deg=float(fig_sec.get("grid_step_deg", 0.5)),
        o2i_draws=int(fig_sec.get("o2i_draws", 1000)),
        o2i_freqs_ghz=_number_list(fig_sec["o2i_freqs_ghz"], "o2i_freqs_ghz", text, "figures")
        if "o2i_freqs_ghz" in fig_sec else FigureSettings.o2i_freqs_ghz,
        large_array=_panel(fig_sec, "large_array", FigureSettings.large_array, text),
        small_array=_panel(fig_sec, "small_array", FigureSettings.small_array, text),
    )

    trajectory = None
    if "trajectory" in document:
        traj = document["trajectory"]
        if "waypoints" not in traj:
            raise ConfigError("missing required key 'trajectory.waypoints'", "waypoints")
        trajectory = Trajectory(
            tuple(_position(p, "waypoints", text, "trajectory") for p in traj["waypoints"]),
            speed=float(traj.get("speed", 0.83)),
            step=float(traj.get("step", 0.1)),
        )

    o2i_preset = scenario_sec.get("o2i_preset", "low-loss") if features.get("o2i", False) else None
    logger.debug("parsed config: %s %s at %.3g GHz", scenario.value,
                 state.value if state else "probabilistic", carrier.f_ghz)
    return RunConfig(
        scenario=scenario,
        state=state,
        carrier=carrier,
        geometry=geometry,
        bs_array=bs_array,
        ms_array=ms_array,
        seed=int(run["seed"]),
        drops=drops,
        workers=workers,
        output_dir=output if output.is_absolute() else Path(base_dir) / output,
        times=times,
        h_env=float(geo.get("h_env", ENV_HEIGHT_M)),
        oxygen=bool(features.get("oxygen", False)),
        o2i_preset=o2i_preset,
        blockage=bool(features.get("blockage", False)),
        self_blocking=features.get("self_blocking"),
        blocker_count=int(features.get("blockers", 0)),
        sc=bool(features.get("sc", False)),
        sweep=sweep,
        figures=figures,
        trajectory=trajectory,
        table=table,
        raw=document,
    )


def parse_config(path: Path) -> RunConfig:
    """
    Read and validate a run configuration file.

    Relative output directories resolve against the current directory.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text)

