"""Hand-editable scenario files.

INI syntax (``configparser``), one section per module::

    [scenario]
    preset = static          ; optional starting point, then overrides
    duration_s = 2.0
    mode = montecarlo

    [detector]
    pbs_extinction_db = 22

    [phase.1]
    name = a
    duration_s = 60
    control_enabled = true

Phases are run in the numeric order of their section suffix.  Every
problem in a file (syntax, unknown keys, bad values, failed invariants) is
collected and raised together as one :class:`ConfigError`, each prefixed
with ``path:line``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import replace

from .bb84 import DetectorConfig, SourceConfig
from .engine import PHASE_KEYS, Phase, ScenarioConfig, config_problems
from .errors import ConfigError
from .fiber import ChannelBudget
from .polarization import StokesVector

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _bool(text):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text):
    return int(text.strip(), 0)


def _seed(text):
    v = _int(text)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return v


def _optional_state(text):
    t = text.strip().lower()
    return None if t in ("", "none", "random") else _int(t)


def _floats(n):
    def parse(text):
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {len(parts)}")
        return tuple(float(p) for p in parts)
    return parse


def _stokes(text):
    return StokesVector(*_floats(3)(text))


# section -> key -> (parser, target, attribute); target is where the value lands
_SCHEMA = {
    "scenario": {
        "name": (str, "cfg", "name"),
        "duration_s": (float, "cfg", "duration_s"),
        "control_period_s": (float, "cfg", "control_period_s"),
        "pulses_per_point": (_int, "cfg", "pulses_per_point"),
        "drift_rate": (float, "cfg", "drift_rate"),
        "drift_correlation_s": (float, "cfg", "drift_correlation_s"),
        "scramble_frequency_hz": (float, "cfg", "scramble_frequency_hz"),
        "control_enabled": (_bool, "cfg", "control_enabled"),
        "mode": (str, "cfg", "mode"),
        "seed": (_seed, "cfg", "seed"),
        "align_at_start": (_bool, "cfg", "align_at_start"),
    },
    "source": {
        "mu": (float, "source", "mu"),
        "rep_rate_hz": (float, "source", "rep_rate_hz"),
        "modulator_error_rms": (float, "source", "modulator_error_rms"),
        "fixed_state": (_optional_state, "source", "fixed_state"),
    },
    "detector": {
        "efficiency": (float, "detector", "efficiency"),
        "dark_count_prob": (float, "detector", "dark_count_prob"),
        "gate_ns": (float, "detector", "gate_ns"),
        "pbs_extinction_db": (float, "detector", "pbs_extinction_db"),
        "side_noise_prob": (float, "detector", "side_noise_prob"),
    },
    "budget": {
        "fiber_loss_db": (float, "budget", "fiber_loss_db"),
        "mux_insertion_db": (float, "budget", "mux_insertion_db"),
        "demux_insertion_db": (float, "budget", "demux_insertion_db"),
        "bpf_insertion_db": (float, "budget", "bpf_insertion_db"),
        "adjacent_extinction_db": (float, "budget", "adjacent_extinction_db"),
        "nonadjacent_extinction_db": (float, "budget", "nonadjacent_extinction_db"),
        "dark_slot_ns": (float, "cfg", "dark_slot_ns"),
    },
    "fiber": {
        "mean_dgd_ps": (float, "cfg", "mean_dgd_s"),
        "pmd_correlation_s": (float, "cfg", "pmd_correlation_s"),
        "scrambler_phases": (_floats(3), "cfg", "scrambler_phases"),
    },
    "references": {
        "s1": (_stokes, "cfg", "reference_s1"),
        "s3": (_stokes, "cfg", "reference_s3"),
        "spacing_ghz": (float, "cfg", "reference_spacing_rad_s"),
        "side_power_dbm": (float, "cfg", "side_power_dbm"),
        "photodiode_noise_rms": (float, "cfg", "photodiode_noise_rms"),
    },
    "controller": {
        "dither_amplitude": (float, "cfg", "dither_amplitude"),
        "step_gain": (float, "cfg", "step_gain"),
        "phi_max": (float, "cfg", "phi_max"),
    },
}
_PHASE_SCHEMA = {
    "name": str,
    "duration_s": float,
    "control_enabled": _bool,
    "drift_rate": float,
    "drift_correlation_s": float,
    "scramble_frequency_hz": float,
}
assert set(_PHASE_SCHEMA) - {"name", "duration_s"} == set(PHASE_KEYS)

# unit conversions between file and ScenarioConfig
_TO_INTERNAL = {
    "mean_dgd_s": lambda ps: ps * 1e-12,
    "reference_spacing_rad_s": lambda ghz: 2.0 * math.pi * ghz * 1e9,
}
_TO_FILE = {
    "mean_dgd_s": lambda s: s * 1e12,
    "reference_spacing_rad_s": lambda w: w / (2.0 * math.pi * 1e9),
}
_PHASE_RE = re.compile(r"^phase\.(\d+)$")


def _line_index(text):
    """``(section, key) -> line number`` by a plain scan of the file."""
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = n
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
        lines.setdefault((section, key), n)
    return lines


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate; raise :class:`ConfigError` listing every problem."""
    problems = []
    where = _line_index(text)

    def at(section, key=None):
        n = where.get((section, key), where.get((section, None)))
        return f"{source}:{n}" if n else source

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                       strict=True)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}".replace("\n", " ")]) from None

    preset = None
    if parser.has_option("scenario", "preset"):
        from .scenarios import PRESETS

        name = parser.get("scenario", "preset").strip()
        if name in PRESETS:
            preset = PRESETS[name]()
        else:
            problems.append(f"{at('scenario', 'preset')}: unknown preset {name!r} "
                            f"(known: {', '.join(sorted(PRESETS))})")
    cfg = preset if preset is not None else ScenarioConfig()
    parts = {"cfg": {}, "source": {}, "detector": {}, "budget": {}}
    phases = []
    for section in parser.sections():
        pm = _PHASE_RE.match(section)
        if pm:
            phase, ok = {}, True
            for key, raw in parser.items(section):
                if key not in _PHASE_SCHEMA:
                    problems.append(f"{at(section, key)}: [{section}] unknown key {key!r}")
                    ok = False
                    continue
                try:
                    phase[key] = _PHASE_SCHEMA[key](raw)
                except ValueError as exc:
                    problems.append(f"{at(section, key)}: [{section}] {key}: {exc}")
                    ok = False
            if "duration_s" not in phase and ok:
                problems.append(f"{at(section)}: [{section}] needs duration_s")
                ok = False
            if ok:
                name = phase.pop("name", pm.group(1))
                dur = phase.pop("duration_s")
                phases.append((int(pm.group(1)), Phase(name, dur, phase)))
            continue
        if section not in _SCHEMA:
            problems.append(f"{at(section)}: unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            if section == "scenario" and key == "preset":
                continue
            if key not in _SCHEMA[section]:
                problems.append(f"{at(section, key)}: [{section}] unknown key {key!r}")
                continue
            fn, target, attr = _SCHEMA[section][key]
            try:
                value = fn(raw)
            except ValueError as exc:
                problems.append(f"{at(section, key)}: [{section}] {key}: {exc}")
                continue
            parts[target][attr] = _TO_INTERNAL.get(attr, lambda v: v)(value)
    if problems:
        raise ConfigError(problems)
    cfg = replace(cfg,
                  source=replace(cfg.source, **parts["source"]),
                  detector=replace(cfg.detector, **parts["detector"]),
                  budget=replace(cfg.budget, **parts["budget"]),
                  **parts["cfg"])
    if phases:
        schedule = tuple(p for _, p in sorted(phases, key=lambda t: t[0]))
        if "duration_s" not in parts["cfg"]:
            cfg = replace(cfg, phase_schedule=schedule,
                          duration_s=sum(p.duration_s for p in schedule))
        else:
            cfg = replace(cfg, phase_schedule=schedule)
    invariants = config_problems(cfg)
    if invariants:
        raise ConfigError([f"{source}: {p}" for p in invariants])
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror or exc})"]) from None
    return parse_config(text, str(path))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, StokesVector):
        return ", ".join(repr(x) for x in (v.s1, v.s2, v.s3))
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ScenarioConfig) -> str:
    """Full INI text for ``cfg``; ``parse_config(dump_config(c)) == c``."""
    objects = {"cfg": cfg, "source": cfg.source, "detector": cfg.detector, "budget": cfg.budget}
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, target, attr) in keys.items():
            v = getattr(objects[target], attr)
            v = _TO_FILE.get(attr, lambda x: x)(v)
            lines.append(f"{key} = {_fmt(v)}")
        lines.append("")
    for i, ph in enumerate(cfg.phase_schedule, start=1):
        lines.append(f"[phase.{i}]")
        lines.append(f"name = {ph.name}")
        lines.append(f"duration_s = {_fmt(float(ph.duration_s))}")
        for k in PHASE_KEYS:
            if k in ph.overrides:
                lines.append(f"{k} = {_fmt(ph.overrides[k])}")
        lines.append("")
    return "\n".join(lines)
