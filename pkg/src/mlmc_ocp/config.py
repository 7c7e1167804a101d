"""Plain-text experiment configuration.

Files hold ``key = value`` lines.  Keys are dotted (``ocp.alpha``) and may be
grouped under ``[section]`` headers, so ``[ocp]`` followed by ``alpha = 0.01``
is the same as ``ocp.alpha = 0.01``.  ``preset = NAME`` loads a bundled
preset (or a file path) first; keys in the file override it.  ``#`` and ``;``
start comments.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ocp import DesiredState, OCPConfig
from .randfield import FREQ_HIGH, FREQ_LOW, KLBasis, make_basis

__all__ = ["ExperimentConfig", "load_config", "parse_config", "PRESET_DIR", "EXPERIMENTS", "SCHEMA"]

PRESET_DIR = Path(__file__).with_name("presets")
EXPERIMENTS = ("pathwise", "convergence", "mc", "mlmc", "allocate", "rates")
_ROOT = "__root__"


def _float(text: str) -> float:
    t = text.strip().lower().replace(" ", "")
    if t.endswith("pi"):
        head = t[:-2].rstrip("*")
        return (float(head) if head not in ("", "+", "-") else float(head + "1")) * math.pi
    return float(t)


def _int(text: str) -> int:
    return int(text.strip())


def _floats(text: str) -> tuple:
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple:
    """``2..5`` (inclusive) or a comma list."""
    t = text.strip()
    if ".." in t:
        lo, hi = t.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in t.split(",") if v.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return parse


def _threads(text: str):
    t = text.strip().lower()
    if t == "auto":
        return "auto"
    n = int(t)
    if n < 1:
        raise ValueError("threads must be positive or 'auto'")
    return n


def _gamma(text: str):
    t = text.strip().lower()
    return "auto" if t == "auto" else _float(t)


def _costs(text: str):
    t = text.strip().lower()
    if t in ("power_law", "measured", "work"):
        return t
    return _floats(t)


def _str(text: str) -> str:
    return text.strip()


# key -> (parser, default as text)
SCHEMA: dict[str, tuple] = {
    "experiment": (_choice(*EXPERIMENTS), "pathwise"),
    "out_dir": (_str, "results"),
    "threads": (_threads, "1"),
    "seed.master": (_int, "2024"),
    "cost.mode": (_choice("wallclock", "work"), "wallclock"),
    "field.amplitudes": (_floats, "0.84, 0.45, 0.45, 0.25"),
    "field.freq_low": (_float, repr(FREQ_LOW)),
    "field.freq_high": (_float, repr(FREQ_HIGH)),
    "fem.coeff_quadrature": (_choice("centroid", "vertex_avg"), "centroid"),
    "fem.solve_rtol": (_float, "1e-12"),
    "ocp.alpha": (_float, "1e-2"),
    "ocp.z": (_str, "paper"),
    "ocp.u_a": (_float, "-inf"),
    "ocp.u_b": (_float, "inf"),
    "ocp.newton_tol": (_float, "1e-10"),
    "ocp.newton_maxit": (_int, "50"),
    "ocp.control_integration": (_choice("quadrature5", "cutcell"), "quadrature5"),
    "pathwise.level": (_int, "4"),
    "pathwise.sample_id": (_int, "0"),
    "convergence.levels": (_ints, "2..5"),
    "convergence.reference": (_int, "7"),
    "convergence.M": (_int, "50"),
    "mc.M": (_int, "64"),
    "mc.level": (_int, "3"),
    "mc.study_M": (_ints, ""),
    "mc.replications": (_int, "20"),
    "mc.reference_M": (_int, "4096"),
    "mlmc.L": (_int, "2"),
    "mlmc.h0_level": (_int, "2"),
    "mlmc.c0": (_float, "0.5"),
    "mlmc.s": (_float, "1.0"),
    "mlmc.t": (_float, "1.0"),
    "mlmc.gamma": (_gamma, "2.4"),
    "mlmc.costs": (_costs, "power_law"),
    "mlmc.pilot_M": (_int, "10"),
    "mlmc.sample_scale": (_float, "1.0"),
    "mlmc.coupled_streams": (_bool, "false"),
    "mlmc.study_L": (_ints, ""),
    "mlmc.reference_L": (_int, "4"),
    "mlmc.replications": (_int, "1"),
    "rates.levels": (_ints, "2..5"),
    "rates.reference": (_int, "7"),
    "rates.pilot_M": (_int, "50"),
    "allocate.L": (_int, "5"),
}


def _read_pairs(text: str, source: str) -> dict[str, str]:
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{_ROOT}]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    pairs = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            pairs[key if section == _ROOT else f"{section}.{key}"] = value
    return pairs


def _preset_path(name: str, base: Path | None) -> Path:
    candidates = [PRESET_DIR / f"{name}.cfg", Path(name)]
    if base is not None:
        candidates.insert(1, base / name)
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"preset {name!r} not found (looked in {PRESET_DIR})")


def _collect(text: str, source: str, base: Path | None, depth: int = 0) -> dict[str, str]:
    if depth > 8:
        raise ConfigError("preset chain too deep")
    pairs = _read_pairs(text, source)
    preset = pairs.pop("preset", None)
    if preset is None:
        return pairs
    path = _preset_path(preset.strip(), base)
    merged = _collect(path.read_text(), str(path), path.parent, depth + 1)
    merged.update(pairs)
    return merged


@dataclass
class ExperimentConfig:
    """Resolved configuration: every schema key with a typed value."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def seed(self) -> int:
        return self.values["seed.master"]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["out_dir"])

    @property
    def workers(self) -> int:
        t = self.values["threads"]
        return (os.cpu_count() or 1) if t == "auto" else int(t)

    def ocp(self) -> OCPConfig:
        v = self.values
        try:
            return OCPConfig(
                alpha=v["ocp.alpha"],
                z=DesiredState.parse(v["ocp.z"]),
                u_a=v["ocp.u_a"],
                u_b=v["ocp.u_b"],
                control_integration=v["ocp.control_integration"],
                coeff_quadrature=v["fem.coeff_quadrature"],
                newton_tol=v["ocp.newton_tol"],
                newton_maxit=v["ocp.newton_maxit"],
                solve_rtol=v["fem.solve_rtol"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def basis(self) -> KLBasis:
        v = self.values
        try:
            return make_basis(v["field.amplitudes"], v["field.freq_low"], v["field.freq_high"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved(self) -> dict:
        """JSON-ready copy (infinities as strings, tuples as lists)."""
        out = {}
        for k, v in sorted(self.values.items()):
            if isinstance(v, float) and not math.isfinite(v):
                v = str(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[k] = v
        return out


def parse_config(text: str = "", overrides: dict | None = None, source: str = "<config>", base=None) -> ExperimentConfig:
    """Resolve ``text`` plus ``overrides`` (raw strings) against the schema."""
    pairs = _collect(text, source, Path(base) if base else None)
    pairs.update(overrides or {})
    unknown = sorted(set(pairs) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, (parse, default) in SCHEMA.items():
        raw = pairs.get(key, default)
        try:
            values[key] = parse(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key} = {raw!r}: {exc}") from exc
    cfg = ExperimentConfig(values)
    cfg.ocp()
    cfg.basis()
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides, str(path), path.parent)
