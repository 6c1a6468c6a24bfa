"""Run configuration in a flat ``key = value`` format with ``[section]`` headers.

Example::

    [run]
    mode = poincare
    out = results/section
    format = csv
    seed = 7

    [chaos]
    energy = 100.0
    c2 = 1.1

Keys are unique across sections, so the section only groups related
settings; unknown keys are rejected.  ``None`` values are not rendered and
mean "use the module default".
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "MODES", "FORMATS", "parse_config", "render_config",
           "load_config"]

MODES = ("quantum", "meanfield", "classical", "poincare", "lyapunov", "sweep")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _strs(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _fmt_tuple(vals) -> str:
    return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in vals)


@dataclass(frozen=True)
class RunConfig:
    mode: str
    out: str = "ultrakin-out"
    reaction: str | None = None
    network_file: str | None = None
    energies: str | None = field(default=None, metadata={"section": "network"})
    formats: tuple[str, ...] = ("csv",)
    seed: int | None = None
    # quantum / sweep
    n: float | None = field(default=None, metadata={"section": "quantum"})
    cutoff: int | None = field(default=None, metadata={"section": "quantum"})
    tau_max: float | None = field(default=None, metadata={"section": "numerics"})
    dtau: float | None = field(default=None, metadata={"section": "numerics"})
    entropy_dtau: float | None = field(default=None, metadata={"section": "quantum"})
    ns: tuple[float, ...] | None = field(default=None, metadata={"section": "quantum"})
    rtol: float | None = field(default=None, metadata={"section": "numerics"})
    atol: float | None = field(default=None, metadata={"section": "numerics"})
    # mean field / classical
    initial: tuple[float, ...] | None = field(default=None, metadata={"section": "meanfield"})
    # chaos
    c1: float | None = field(default=None, metadata={"section": "chaos"})
    c2: float | None = field(default=None, metadata={"section": "chaos"})
    energy: float | None = field(default=None, metadata={"section": "chaos"})
    trajectories: int | None = field(default=None, metadata={"section": "chaos"})
    horizon: float | None = field(default=None, metadata={"section": "chaos"})
    grid: int | None = field(default=None, metadata={"section": "chaos"})
    c1_grid: tuple[float, ...] | None = field(default=None, metadata={"section": "chaos"})

    def __post_init__(self):
        if self.reaction is not None:
            # one line per reaction is joined with ';' so the value fits on one line
            parts = [ln.split("#", 1)[0].strip() for ln in self.reaction.splitlines()]
            object.__setattr__(self, "reaction", "; ".join(p for p in parts if p))
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.reaction is not None and self.network_file is not None:
            raise ConfigError("give either a reaction string or a network file, not both")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ConfigError(f"unknown output format(s) {bad}; expected a subset of {FORMATS}")
        for name in ("n", "tau_max", "dtau", "entropy_dtau", "horizon", "rtol", "atol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("cutoff", "trajectories", "grid"):
            v = getattr(self, name)
            if v is not None and v < (8 if name == "grid" else 0 if name == "cutoff" else 1):
                raise ConfigError(f"{name} = {v} out of range")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def network_text(self) -> str | None:
        if self.reaction is not None:
            return self.reaction
        if self.network_file is not None:
            try:
                return Path(self.network_file).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read network file {self.network_file}: {exc}") from exc
        return None

    def with_updates(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


_SECTION_OF = {f.name: f.metadata.get("section", "run") for f in fields(RunConfig)}
_KIND = {}
for _f in fields(RunConfig):
    t = str(_f.type)
    _KIND[_f.name] = ("tuple_str" if _f.name == "formats" else "tuple_float" if "tuple" in t
                      else "int" if t.startswith("int") else "float" if t.startswith("float")
                      else "str")


def _convert(name: str, text: str):
    kind = _KIND[name]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple_float":
            return _floats(text)
        if kind == "tuple_str":
            return _strs(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    return text


def parse_config(text: str) -> RunConfig:
    """Parse the ``key = value`` format produced by :func:`render_config`."""
    values = {}
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key == "format":
            key = "formats"
        if key == "network":
            key = "network_file"
        if key not in _KIND:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value.strip())
    if "mode" not in values:
        raise ConfigError("missing 'mode'")
    return RunConfig(**values)


def render_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (``None`` entries are omitted)."""
    sections: dict[str, list[str]] = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        key = {"formats": "format", "network_file": "network"}.get(f.name, f.name)
        if isinstance(v, tuple):
            text = _fmt_tuple(v)
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        sections.setdefault(_SECTION_OF[f.name], []).append(f"{key} = {text}")
    order = ["run", "network", "quantum", "meanfield", "numerics", "chaos"]
    out = []
    for sec in order:
        if sec in sections:
            out.append(f"[{sec}]")
            out.extend(sections[sec])
            out.append("")
    return "\n".join(out)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
