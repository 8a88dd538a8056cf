"""Scenario files: flat ``section.key = value`` lines, ``#`` comments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .link_model import ChannelActors, LinkParams
from .protocol_codec import KINDS, TransitionModel


class ConfigError(ValueError):
    """Invalid scenario file or value; the message names the key."""


REQUIRED = object()


@dataclass(frozen=True)
class Key:
    kind: str  # float, int, str, bool, floats, path
    default: Any
    unit: str
    doc: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _prob(v):
    return 0.0 <= v <= 1.0


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


KEYS: dict[str, Key] = {
    "link.n_quantum": Key("float", REQUIRED, "pairs/s", "photon-pair rate reaching the link", _nonneg, ">= 0"),
    "link.eta_det": Key("float", REQUIRED, "1", "Alice's detection efficiency", _prob, "in [0, 1]"),
    "link.t_meas": Key("float", REQUIRED, "s", "measurement window per symbol decision", _pos, "> 0"),
    "link.phi": Key("float", 0.0, "rad", "source phase (or link.phi_deg in degrees)"),
    "link.phi_a": Key("float", 0.0, "rad", "Alice's idler phase (or link.phi_a_deg)"),
    "link.phi_b": Key("float", 0.0, "rad", "Bob's signal phase (or link.phi_b_deg)"),
    "actors.alpha_sq": Key("float", 0.0, "1", "Bob's blocked power fraction", _prob, "in [0, 1]"),
    "actors.alpha_e_sq": Key("float", REQUIRED, "1", "fraction of the signal Eve taps", _prob, "in [0, 1]"),
    "actors.eta_det_e": Key("float", REQUIRED, "1", "Eve's detection efficiency", _prob, "in [0, 1]"),
    "actors.n_class": Key("float", None, "photons/s", "jamming-laser rate (or actors.jamming_ratio)", _nonneg, ">= 0"),
    "actors.jamming_ratio": Key("float", None, "1", "n_class / n_quantum", _nonneg, ">= 0"),
    "actors.eta_losses_sq": Key("float", 0.0, "1", "power loss of the signal arm", _prob, "in [0, 1]"),
    "encoding.kind": Key("str", "amplitude", "-", "amplitude | phase", lambda v: v in KINDS, "amplitude or phase"),
    "encoding.bit_duration": Key("float", 0.5, "s", "duration of one bit", _pos, "> 0"),
    "encoding.rise_time": Key("float", 0.0, "s", "linear switching ramp of Bob's modulator", _nonneg, ">= 0"),
    "encoding.preamble_len": Key("int", 8, "bits", "1010... calibration preamble", lambda v: v >= 2, ">= 2"),
    "encoding.guard": Key("float", 0.1, "1", "fraction of each bit ignored at both edges", lambda v: 0 <= v < 0.5, "in [0, 0.5)"),
    "payload.text": Key("str", "MPQ", "-", "ASCII message"),
    "payload.image": Key("path", None, "-", "PGM object (P2/P5); built-in logo when unset"),
    "payload.pixel_pitch": Key("float", 0.5, "mm", "pixel size along the scan", _pos, "> 0"),
    "payload.scan_speed": Key("float", 1.0, "mm/s", "translation-stage speed", _pos, "> 0"),
    "payload.calibration_events": Key("int", 200, "events", "open and blocked reference events each", _nonneg, ">= 0"),
    "sampling.bin_duration": Key("float", 0.05, "s", "detector integration bin", _pos, "> 0"),
    "sampling.seed": Key("int", REQUIRED, "-", "master seed, unsigned 64-bit", lambda v: 0 <= v < 2**64, "in [0, 2^64)"),
    "sweep.ratios": Key("floats", None, "1", "comma list of n_class/n_quantum (default 21 log-spaced in 1..1e5)",
                        lambda v: all(x >= 0 for x in v) and len(v) > 0, "non-empty, each >= 0"),
    "sweep.seeds": Key("int", 20, "-", "independent repetitions per ratio", _pos, ">= 1"),
    "sweep.n_blocks": Key("int", 20, "-", "blocks of t_meas per SNR estimate", lambda v: v >= 2, ">= 2"),
    "eye.bit_rates": Key("floats", (1.2, 8.0), "bit/s", "comma list of bit rates",
                         lambda v: all(x > 0 for x in v) and len(v) > 0, "non-empty, each > 0"),
    "eye.samples_per_bit": Key("int", 200, "-", "detector bins per bit", lambda v: v >= 2, ">= 2"),
    "eye.repetitions": Key("int", 20, "-", "101/010 window pairs overlaid", _pos, ">= 1"),
    "eye.excess_noise": Key("float", 0.23, "1", "relative white intensity noise per bin", _nonneg, ">= 0"),
    "eye.tune": Key("bool", False, "-", "refit rise_time and excess_noise at the first bit rate"),
    "eye.tune_transition": Key("float", 0.06, "1", "transition-fraction target of the fit", _prob, "in [0, 1]"),
    "eye.tune_vertical": Key("float", 0.30, "1", "vertical-opening target of the fit", _prob, "in [0, 1]"),
    "image.null_trials": Key("int", 100_000, "-", "random matrices in the correlation null", lambda v: v >= 100, ">= 100"),
    "dfg.pump_rate": Key("float", 2e16, "photons/s", "pump rate for the low-gain check", _pos, "> 0"),
    "outputs.dir": Key("str", "out", "-", "output directory (relative to the working directory)"),
}

DEGREE_KEYS = {f"{k}_deg": k for k in ("link.phi", "link.phi_a", "link.phi_b")}


def required_keys() -> list[str]:
    return [k for k, spec in KEYS.items() if spec.default is REQUIRED]


def help_table() -> str:
    lines = []
    for name, k in KEYS.items():
        d = "required" if k.default is REQUIRED else f"default {_format(k.default, k.kind)}" if k.default is not None else "optional"
        lines.append(f"  {name:28s} [{k.unit}] {k.doc} ({d})")
    return "\n".join(lines)


def _convert(name: str, kind: str, raw: str) -> Any:
    try:
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            return int(raw, 0)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind == "floats":
            vals = tuple(float(x) for x in raw.split(",") if x.strip())
            if not all(math.isfinite(x) for x in vals):
                raise ValueError
            return vals
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind}") from None


def _format(v: Any, kind: str) -> str:
    if kind == "float":
        return repr(float(v))
    if kind == "floats":
        return ",".join(repr(float(x)) for x in v)
    if kind == "bool":
        return "true" if v else "false"
    return str(v)


@dataclass(frozen=True)
class Scenario:
    values: dict[str, Any]
    source: Path | None = None

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["sampling.seed"]

    @property
    def link(self) -> LinkParams:
        v = self.values
        return LinkParams(v["link.n_quantum"], v["link.eta_det"], v["link.t_meas"],
                          v["link.phi"], v["link.phi_a"], v["link.phi_b"])

    @property
    def actors(self) -> ChannelActors:
        v = self.values
        return ChannelActors(v["actors.alpha_sq"], v["actors.alpha_e_sq"], v["actors.eta_det_e"],
                             v["actors.n_class"], v["actors.eta_losses_sq"])

    @property
    def transition(self) -> TransitionModel | None:
        r = self.values["encoding.rise_time"]
        return TransitionModel(r) if r > 0 else None

    def with_seed(self, seed: int) -> "Scenario":
        vals = dict(self.values)
        vals["sampling.seed"] = _validated("sampling.seed", seed)
        return Scenario(vals, self.source)

    def to_text(self, exclude: tuple[str, ...] = ("outputs.dir",)) -> str:
        out = []
        for name, k in KEYS.items():
            if name in exclude or name == "actors.jamming_ratio":
                continue
            v = self.values.get(name)
            if v is None:
                continue
            out.append(f"{name} = {_format(v, k.kind)}")
        return "\n".join(out) + "\n"


def _validated(name: str, v: Any) -> Any:
    k = KEYS[name]
    if k.check is not None and not k.check(v):
        raise ConfigError(f"{name}: value {v!r} out of range ({k.rule})")
    return v


def parse_text(text: str, base_dir: Path | None = None, seed_override: int | None = None) -> Scenario:
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS and key not in DEGREE_KEYS:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
        if key in raw:
            raise ConfigError(f"{key}: given twice (line {lineno})")
        raw[key] = (val, lineno)

    for deg, rad in DEGREE_KEYS.items():
        if deg in raw:
            if rad in raw:
                raise ConfigError(f"{deg}: conflicts with {rad}")
            val, lineno = raw.pop(deg)
            raw[rad] = (repr(math.radians(_convert(deg, "float", val))), lineno)

    if seed_override is not None:
        raw["sampling.seed"] = (str(int(seed_override)), 0)

    missing = [k for k in required_keys() if k not in raw]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))

    values: dict[str, Any] = {}
    for name, k in KEYS.items():
        if name in raw:
            v = _convert(name, k.kind, raw[name][0])
            values[name] = _validated(name, v)
        else:
            values[name] = k.default

    if values["actors.n_class"] is not None and values["actors.jamming_ratio"] is not None:
        raise ConfigError("actors.jamming_ratio: conflicts with actors.n_class")
    if values["actors.jamming_ratio"] is not None:
        values["actors.n_class"] = values["actors.jamming_ratio"] * values["link.n_quantum"]
    if values["actors.n_class"] is None:
        values["actors.n_class"] = 0.0
    values["actors.jamming_ratio"] = None

    if values["encoding.rise_time"] >= values["encoding.bit_duration"]:
        raise ConfigError("encoding.rise_time: must be shorter than encoding.bit_duration")

    img = values["payload.image"]
    if img is not None:
        p = Path(img)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        p = p.resolve()
        if not p.is_file():
            raise ConfigError(f"payload.image: file not found: {p}")
        values["payload.image"] = str(p)

    text_payload = values["payload.text"]
    if not text_payload or not text_payload.isascii():
        raise ConfigError("payload.text: must be non-empty ASCII")
    return Scenario(values)


def parse_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    sc = parse_text(text, path.parent, seed_override)
    return Scenario(sc.values, path)
