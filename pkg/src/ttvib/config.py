"""INI run configuration.

Sections and keys (defaults in parentheses)::

    [model]
    kind = coupled | pes            (coupled)
    d = 2                           number of modes (coupled model only)
    n = 15                          one size for all modes, or a comma list
    alpha = 0.1                     bilinear coupling (coupled model)
    omegas =                        comma list; default sqrt(j/2), j = 1..d
    coefficients =                  force-field file (pes model), relative
                                    to the config file
    rel_tol = 1e-10                 assembly rounding tolerance

    [solver]
    B = 10                          number of eigenpairs
    seed = 0
    shift = harmonic                LOBPCG preconditioner shift or a number
    delta = 1e-4                    cluster threshold
    conv_tol = 1e-8
    workers = 1                     threads for independent clusters

    [lobpcg]
    rank = 8
    max_iter = 30
    n_swp = 2, local_solver = auto, local_tol = 1e-2, local_max_iter = 25
    preconditioner = residual | energy
    block_method = als | auto | direct | cross
    cross_tol = 1e-8
    deflation = true
    rank_increase = 5

    [sii]
    ranks = 10                      comma list, one inverse-iteration stage each
    max_iter = 10
    n_swp, local_solver as above
    local_tol = 1e-8, local_max_iter = 300
                                    inverse iteration needs accurate inner solves

    [output]
    directory = out                 relative to the working directory
    checkpoint = true
    verify_tol = 1e-8
"""

import configparser
import io
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .als import AlsOptions
from .errors import ConfigError

SCHEMA = {
    "model": {"kind": "coupled", "d": "2", "n": "15", "alpha": "0.1", "omegas": "",
              "coefficients": "", "rel_tol": "1e-10"},
    "solver": {"B": "10", "seed": "0", "shift": "harmonic", "delta": "1e-4",
               "conv_tol": "1e-8", "workers": "1"},
    "lobpcg": {"rank": "8", "max_iter": "30", "n_swp": "2", "local_solver": "auto",
               "local_tol": "1e-2", "local_max_iter": "25", "preconditioner": "residual",
               "block_method": "als", "cross_tol": "1e-8", "deflation": "true",
               "rank_increase": "5"},
    "sii": {"ranks": "10", "max_iter": "10", "n_swp": "2", "local_solver": "auto",
            "local_tol": "1e-8", "local_max_iter": "300"},
    "output": {"directory": "out", "checkpoint": "true", "verify_tol": "1e-8"},
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    d: int
    mode_sizes: tuple
    alpha: float
    omegas: tuple
    coefficients: str
    rel_tol: float


@dataclass(frozen=True)
class SolverSection:
    B: int
    seed: int
    shift: str
    delta: float
    conv_tol: float
    workers: int


@dataclass(frozen=True)
class LobpcgSection:
    rank: int
    max_iter: int
    als: AlsOptions
    preconditioner: str
    block_method: str
    cross_tol: float
    deflation: bool
    rank_increase: int


@dataclass(frozen=True)
class SiiSection:
    ranks: tuple
    max_iter: int
    als: AlsOptions


@dataclass(frozen=True)
class OutputSection:
    directory: str
    checkpoint: bool
    verify_tol: float


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    solver: SolverSection
    lobpcg: LobpcgSection
    sii: SiiSection
    output: OutputSection
    raw: dict

    def with_seed(self, seed):
        raw = {s: dict(v) for s, v in self.raw.items()}
        raw["solver"]["seed"] = str(int(seed))
        return replace(self, solver=replace(self.solver, seed=int(seed)), raw=raw)

    def echo(self):
        """The fully resolved configuration as INI text."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section in SCHEMA:
            parser[section] = self.raw[section]
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("ttvib").joinpath("configs", p.name)
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file {path} not found")


def _conv(section, key, value, kind):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {value!r} is not a valid "
                          f"{kind.__name__}") from None


def _list(section, key, value, kind):
    items = [v.strip() for v in value.split(",") if v.strip()]
    return tuple(_conv(section, key, v, kind) for v in items)


def _als(section, raw):
    try:
        return AlsOptions(n_swp=_conv(section, "n_swp", raw["n_swp"], int),
                          local_solver=raw["local_solver"],
                          local_tol=_conv(section, "local_tol", raw["local_tol"], float),
                          local_max_iter=_conv(section, "local_max_iter",
                                               raw["local_max_iter"], int))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def parse_config(text, base_dir="."):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    raw = {s: dict(keys) for s, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            raw[section][key] = value.strip()

    m = raw["model"]
    kind = m["kind"]
    if kind not in ("coupled", "pes"):
        raise ConfigError("[model] kind must be 'coupled' or 'pes'")
    sizes = _list("model", "n", m["n"], int)
    omegas = _list("model", "omegas", m["omegas"], float) or None
    coeff = ""
    if kind == "pes":
        if not m["coefficients"]:
            raise ConfigError("[model] coefficients is required for kind = pes")
        coeff = str((Path(base_dir) / m["coefficients"]).resolve())
        if not Path(coeff).is_file():
            raise ConfigError(f"coefficient file {coeff} not found")
        m["coefficients"] = coeff
        if len(sizes) < 2:
            raise ConfigError("[model] n must list one size per mode for kind = pes")
        d = len(sizes)
    else:
        d = _conv("model", "d", m["d"], int)
        if d < 2:
            raise ConfigError("[model] d must be >= 2")
        if len(sizes) == 1:
            sizes = sizes * d
        if len(sizes) != d:
            raise ConfigError(f"[model] n lists {len(sizes)} sizes for d = {d}")
        if omegas is not None and len(omegas) != d:
            raise ConfigError(f"[model] omegas lists {len(omegas)} values for d = {d}")
    model = ModelConfig(kind, d, sizes, _conv("model", "alpha", m["alpha"], float),
                        omegas, coeff, _conv("model", "rel_tol", m["rel_tol"], float))

    s = raw["solver"]
    shift = s["shift"]
    if shift != "harmonic":
        _conv("solver", "shift", shift, float)
    solver = SolverSection(_conv("solver", "B", s["B"], int),
                           _conv("solver", "seed", s["seed"], int), shift,
                           _conv("solver", "delta", s["delta"], float),
                           _conv("solver", "conv_tol", s["conv_tol"], float),
                           _conv("solver", "workers", s["workers"], int))
    if solver.B < 1 or solver.B > math.prod(sizes):
        raise ConfigError("[solver] B must be between 1 and the grid size")

    lo = raw["lobpcg"]
    lobpcg = LobpcgSection(_conv("lobpcg", "rank", lo["rank"], int),
                           _conv("lobpcg", "max_iter", lo["max_iter"], int),
                           _als("lobpcg", lo), lo["preconditioner"], lo["block_method"],
                           _conv("lobpcg", "cross_tol", lo["cross_tol"], float),
                           _conv("lobpcg", "deflation", lo["deflation"], bool),
                           _conv("lobpcg", "rank_increase", lo["rank_increase"], int))
    if lobpcg.preconditioner not in ("residual", "energy"):
        raise ConfigError("[lobpcg] preconditioner must be 'residual' or 'energy'")
    if lobpcg.block_method not in ("als", "auto", "direct", "cross"):
        raise ConfigError("[lobpcg] block_method must be 'als', 'auto', 'direct' or 'cross'")

    si = raw["sii"]
    sii = SiiSection(_list("sii", "ranks", si["ranks"], int),
                     _conv("sii", "max_iter", si["max_iter"], int), _als("sii", si))
    o = raw["output"]
    output = OutputSection(o["directory"], _conv("output", "checkpoint", o["checkpoint"], bool),
                           _conv("output", "verify_tol", o["verify_tol"], float))
    for name, value in (("lobpcg rank", lobpcg.rank), ("lobpcg max_iter", lobpcg.max_iter),
                        ("sii max_iter", sii.max_iter), ("solver workers", solver.workers)):
        if value < 1:
            raise ConfigError(f"{name} must be >= 1")
    if any(r < 1 for r in sii.ranks):
        raise ConfigError("[sii] ranks must be >= 1")
    return RunConfig(model, solver, lobpcg, sii, output, raw)


def load_config(path):
    p = _resolve(path)
    return parse_config(p.read_text(), p.parent)
