"""Run configuration: JSON parsing, validation and construction of the solver
objects. Every problem found is collected before raising, so one
ConfigError lists all violations of a config file."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .basis import ColoringError, build_noise_spectrum
from .det_solver import DetParams
from .errors import ConfigError
from .field import Field
from .splitting import SplitSchedule
from .stoch_solver import LipschitzCoefficient, StochParams

IC_KINDS = ("constant", "bump", "cosine", "samples")


@dataclass
class DomainConfig:
    L: float
    M: int


@dataclass
class HorizonConfig:
    T: float
    N_split: int = 0


@dataclass
class DetConfig:
    eps: float = 1e-6
    r: float | None = 1.0
    dt: float = 1e-4
    theta: float = 1.0


@dataclass
class StochConfig:
    eps: float = 0.0
    dt: float = 1e-3
    K_modes: int = 0
    spectrum: dict = field(default_factory=lambda: {"lambda": None, "gamma": None})
    f: dict = field(default_factory=lambda: {"kind": "linear", "c": 1.0})


@dataclass
class EnsembleConfig:
    M_paths: int = 100
    p_list: list = field(default_factory=lambda: [2, 4])


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_stride: int = 0


@dataclass
class RunConfig:
    domain: DomainConfig
    horizon: HorizonConfig
    det: DetConfig = field(default_factory=DetConfig)
    stoch: StochConfig = field(default_factory=StochConfig)
    initial_condition: dict = field(default_factory=lambda: {"kind": "constant", "c": 1.0})
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    master_seed: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)

    # --- builders -------------------------------------------------------

    def schedule(self) -> SplitSchedule:
        return SplitSchedule(self.horizon.T, self.horizon.N_split)

    def det_params(self) -> DetParams:
        d = self.det
        return DetParams(dt=d.dt, eps=d.eps, r=d.r, theta=d.theta)

    def spectrum(self):
        sp = self.stoch.spectrum
        return build_noise_spectrum(sp.get("lambda"), self.stoch.K_modes, sp.get("gamma"))

    def coefficient(self) -> LipschitzCoefficient:
        return LipschitzCoefficient(self.stoch.f.get("kind", "linear"), float(self.stoch.f.get("c", 1.0)))

    def stoch_params(self) -> StochParams:
        return StochParams(dt=self.stoch.dt, spectrum=self.spectrum(), f=self.coefficient(),
                           eps=self.stoch.eps)

    def initial_field(self, base_dir: Path | None = None) -> Field:
        return make_initial_condition(self.initial_condition, self.domain.L, self.domain.M, base_dir)

    # --- serialisation --------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def make_initial_condition(ic: dict, L: float, M: int, base_dir: Path | None = None) -> Field:
    """constant(c); bump(center, width, floor, height=1), a periodic Gaussian-like
    bump floor + height * exp(-(L / (2 pi width))^2 (1 - cos(2 pi (x - center) / L)));
    cosine(mean, amplitude, mode=1); samples(file) with one value per grid node."""
    kind = ic.get("kind")
    if kind == "constant":
        return Field.constant(float(ic.get("c", 1.0)), L, M)
    if kind == "bump":
        c, w = float(ic["center"]), float(ic["width"])
        floor, h = float(ic.get("floor", 0.0)), float(ic.get("height", 1.0))
        a = (L / (2 * math.pi * w)) ** 2
        return Field.from_function(
            lambda x: floor + h * np.exp(-a * (1.0 - np.cos(2 * math.pi * (x - c) / L))), L, M)
    if kind == "cosine":
        m, amp, k = float(ic.get("mean", 1.0)), float(ic.get("amplitude", 0.0)), int(ic.get("mode", 1))
        return Field.from_function(lambda x: m + amp * np.cos(2 * math.pi * k * x / L), L, M)
    if kind == "samples":
        path = Path(ic["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        text = path.read_text()
        vals = np.array([float(tok) for tok in text.replace(",", " ").split()
                         if not tok[0].isalpha()])
        if vals.size != M:
            raise ConfigError([f"initial_condition.file has {vals.size} values, domain.M is {M}"])
        return Field(vals, L)
    raise ConfigError([f"initial_condition.kind must be one of {IC_KINDS}, got {kind!r}"])


# --- parsing ---------------------------------------------------------------

_SECTIONS = {
    "domain": DomainConfig, "horizon": HorizonConfig, "det": DetConfig,
    "stoch": StochConfig, "ensemble": EnsembleConfig, "output": OutputConfig,
}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"JSON syntax error: {exc.msg} at line {exc.lineno}, column {exc.colno}"],
                          line=exc.lineno, column=exc.colno) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    return config_from_dict(raw)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_from_dict(raw: dict) -> RunConfig:
    errs: list[str] = []
    raw = copy.deepcopy(raw)
    known = set(_SECTIONS) | {"initial_condition", "master_seed"}
    for key in raw:
        if key not in known:
            errs.append(f"unknown key {key!r}")

    sections = {}
    for name, cls in _SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            errs.append(f"{name} must be an object")
            sec = {}
        fields = cls.__dataclass_fields__
        for key in sec:
            if key not in fields:
                errs.append(f"unknown key {name}.{key}")
        sections[name] = {k: v for k, v in sec.items() if k in fields}

    dom, hor = sections["domain"], sections["horizon"]
    for key, sec, name in (("L", dom, "domain"), ("M", dom, "domain"), ("T", hor, "horizon")):
        if key not in sec:
            errs.append(f"{name}.{key} is required")

    _check_numbers(sections, raw, errs)
    ic = raw.get("initial_condition", {"kind": "constant", "c": 1.0})
    _check_ic(ic, errs)
    if errs:
        raise ConfigError(errs)

    cfg = RunConfig(
        domain=DomainConfig(**dom), horizon=HorizonConfig(**hor),
        det=DetConfig(**sections["det"]), stoch=StochConfig(**sections["stoch"]),
        initial_condition=ic, ensemble=EnsembleConfig(**sections["ensemble"]),
        master_seed=raw.get("master_seed", 0), output=OutputConfig(**sections["output"]),
    )
    _normalise(cfg)
    # constructing the solver objects runs their own validation
    for build in (cfg.det_params, cfg.stoch_params, cfg.schedule):
        try:
            build()
        except ColoringError as exc:
            errs.append(f"stoch.spectrum: {exc}")
        except (ValueError, TypeError, KeyError) as exc:
            errs.append(str(exc))
    if errs:
        raise ConfigError(errs)
    return cfg


def _check_numbers(sec: dict, raw: dict, errs: list[str]) -> None:
    dom, hor, det, st = sec["domain"], sec["horizon"], sec["det"], sec["stoch"]
    ens, out = sec["ensemble"], sec["output"]

    def need(cond, msg):
        if not cond:
            errs.append(msg)

    if "L" in dom:
        need(_is_num(dom["L"]) and dom["L"] > 0, f"domain.L must be a positive number, got {dom['L']!r}")
    if "M" in dom:
        need(_is_int(dom["M"]) and dom["M"] >= 8 and dom["M"] % 2 == 0,
             f"domain.M must be an even integer >= 8, got {dom['M']!r}")
    if "T" in hor:
        need(_is_num(hor["T"]) and hor["T"] > 0, f"horizon.T must be positive, got {hor['T']!r}")
    if "N_split" in hor:
        need(_is_int(hor["N_split"]) and hor["N_split"] >= 0,
             f"horizon.N_split must be a non-negative integer, got {hor['N_split']!r}")
    if "eps" in det:
        need(_is_num(det["eps"]) and 0 < det["eps"] <= 1, f"det.eps must lie in (0, 1], got {det['eps']!r}")
    if "r" in det:
        need(det["r"] is None or (_is_num(det["r"]) and det["r"] >= 1),
             f"det.r must be >= 1 or null, got {det['r']!r}")
    if "dt" in det:
        need(_is_num(det["dt"]) and det["dt"] > 0, f"det.dt must be positive, got {det['dt']!r}")
    if "theta" in det:
        need(_is_num(det["theta"]) and 0.5 <= det["theta"] <= 1,
             f"det.theta must lie in [0.5, 1], got {det['theta']!r}")
    if "eps" in st:
        need(_is_num(st["eps"]) and st["eps"] >= 0, f"stoch.eps must be >= 0, got {st['eps']!r}")
    if "dt" in st:
        need(_is_num(st["dt"]) and st["dt"] > 0, f"stoch.dt must be positive, got {st['dt']!r}")
    if "K_modes" in st:
        need(_is_int(st["K_modes"]) and st["K_modes"] >= 0,
             f"stoch.K_modes must be a non-negative integer, got {st['K_modes']!r}")
    if "spectrum" in st:
        sp = st["spectrum"]
        if not isinstance(sp, dict) or set(sp) - {"lambda", "gamma"}:
            errs.append("stoch.spectrum must be an object with keys 'lambda' and/or 'gamma'")
    if "f" in st:
        f = st["f"]
        if not isinstance(f, dict) or f.get("kind", "linear") not in ("linear", "saturating"):
            errs.append("stoch.f.kind must be 'linear' or 'saturating'")
        elif "c" in f:
            need(_is_num(f["c"]) and f["c"] >= 0, f"stoch.f.c must be >= 0, got {f['c']!r}")
    if "M_paths" in ens:
        need(_is_int(ens["M_paths"]) and ens["M_paths"] >= 2,
             f"ensemble.M_paths must be an integer >= 2, got {ens['M_paths']!r}")
    if "p_list" in ens:
        need(isinstance(ens["p_list"], list) and ens["p_list"]
             and all(_is_num(p) and p >= 1 for p in ens["p_list"]),
             "ensemble.p_list must be a non-empty list of numbers >= 1")
    if "master_seed" in raw:
        need(_is_int(raw["master_seed"]) and 0 <= raw["master_seed"] < 2**64,
             f"master_seed must be an unsigned 64-bit integer, got {raw['master_seed']!r}")
    if "snapshot_stride" in out:
        need(_is_int(out["snapshot_stride"]) and out["snapshot_stride"] >= 0,
             f"output.snapshot_stride must be a non-negative integer, got {out['snapshot_stride']!r}")
    if "directory" in out:
        need(isinstance(out["directory"], str), "output.directory must be a string")


def _check_ic(ic, errs: list[str]) -> None:
    if not isinstance(ic, dict):
        errs.append("initial_condition must be an object")
        return
    kind = ic.get("kind")
    required = {"constant": ("c",), "bump": ("center", "width", "floor"),
                "cosine": ("mean", "amplitude"), "samples": ("file",)}
    if kind not in required:
        errs.append(f"initial_condition.kind must be one of {IC_KINDS}, got {kind!r}")
        return
    for key in required[kind]:
        if key not in ic:
            errs.append(f"initial_condition.{key} is required for kind {kind!r}")
    for key, v in ic.items():
        if key in ("kind", "file"):
            continue
        if not _is_num(v):
            errs.append(f"initial_condition.{key} must be a number, got {v!r}")
    if kind == "bump" and _is_num(ic.get("width")) and ic["width"] <= 0:
        errs.append("initial_condition.width must be positive")


def _normalise(cfg: RunConfig) -> None:
    # JSON ints are fine where floats are meant; store floats so that the
    # config round-trips to the same object
    cfg.domain.L = float(cfg.domain.L)
    cfg.horizon.T = float(cfg.horizon.T)
    for sec, keys in ((cfg.det, ("eps", "dt", "theta")), (cfg.stoch, ("eps", "dt"))):
        for k in keys:
            setattr(sec, k, float(getattr(sec, k)))
    if cfg.det.r is not None:
        cfg.det.r = float(cfg.det.r)
    cfg.ensemble.p_list = [float(p) for p in cfg.ensemble.p_list]
    sp = cfg.stoch.spectrum
    cfg.stoch.spectrum = {"lambda": sp.get("lambda"), "gamma": sp.get("gamma")}
    cfg.stoch.f = {"kind": cfg.stoch.f.get("kind", "linear"), "c": float(cfg.stoch.f.get("c", 1.0))}
