"""Run configuration: defaults, ``key = value`` files and validation."""

import configparser
import dataclasses
import math
from dataclasses import dataclass

from .problem import BUILTIN_PROBLEMS, AffineProblem, build_problem

METHODS = ("lsrcm", "ercm")


@dataclass
class StudyConfig:
    """Validated settings shared by every CLI command.

    Parameters
    ----------
    problem : str
        Built-in problem id, or the name of a custom problem given by
        ``operator``/``rhs``/``bounds``.
    nx : int
        Chebyshev order per direction of the truth grid.
    train_grid : tuple of int
        Training lattice counts per parameter.
    method : {'lsrcm', 'ercm'}
    nmax, tol, seed :
        Greedy settings; ``seed`` picks the first parameter.
    test_seed, samples :
        Random test set for studies.
    operator, rhs, bounds : str
        Custom problem, e.g. ``operator = -dxx | 1 ; -dyy | mu1``,
        ``rhs = sin(x*y) | 1``, ``bounds = 0.1:4, 0:2``.
    """

    problem: str = "anisotropic"
    nx: int = 40
    train_grid: tuple = (32, 32)
    method: str = "lsrcm"
    nmax: int = 17
    tol: float = 1e-8
    seed: int = 0
    test_seed: int = 1
    samples: int = 200
    model: str = None
    out: str = None
    mu: tuple = None
    nx_list: tuple = (12, 16, 20, 24, 28, 32, 36, 40, 44, 48, 50)
    ref_nx: int = 80
    repetitions: int = 50
    operator: str = None
    rhs: str = None
    bounds: str = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        custom = [self.operator, self.rhs, self.bounds]
        if any(v is not None for v in custom) and not all(v is not None for v in custom):
            raise ValueError("a custom problem needs operator, rhs and bounds together")
        if self.operator is None and self.problem not in BUILTIN_PROBLEMS:
            raise ValueError(
                f"unknown problem {self.problem!r}; built-ins are {sorted(BUILTIN_PROBLEMS)}"
            )
        for name in ("nx", "ref_nx"):
            if getattr(self, name) < 4:
                raise ValueError(f"{name} must be at least 4")
        for name in ("nmax", "samples", "repetitions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(k < 1 for k in self.train_grid):
            raise ValueError("train_grid counts must be positive")
        if any(k < 4 for k in self.nx_list):
            raise ValueError("nx_list entries must be at least 4")
        if not (self.tol >= 0 and math.isfinite(self.tol)):
            raise ValueError("tol must be a finite non-negative number")
        if self.operator is not None:
            self.problem_description()

    def problem_description(self):
        """Plain-data description of the configured problem."""
        if self.operator is None:
            d = build_problem(self.problem, 4).describe()
        else:
            d = {
                "name": self.problem,
                "bounds": _parse_bounds(self.bounds),
                "operator": _parse_terms(self.operator),
                "rhs": _parse_terms(self.rhs),
            }
        d["nx"] = self.nx
        d["train_shape"] = list(self.train_grid)
        if len(d["train_shape"]) != len(d["bounds"]):
            raise ValueError(
                f"train_grid has {len(self.train_grid)} counts for a "
                f"{len(d['bounds'])}-parameter problem"
            )
        return d

    def build_problem(self, nx=None):
        return AffineProblem.from_description(self.problem_description(), nx)

    def echo(self):
        """Flat ``{key: string}`` view, written into every output."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out[f.name] = _format_value(v)
        return out


def _format_value(v):
    if _is_seq(v):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _is_seq(v):
    return isinstance(v, (tuple, list))


def _parse_terms(text):
    terms = []
    for part in text.split(";"):
        if not part.strip():
            continue
        if part.count("|") != 1:
            raise ValueError(f"term {part.strip()!r} must read 'expression | coefficient'")
        expr, coef = (s.strip() for s in part.split("|"))
        terms.append([expr, coef])
    if not terms:
        raise ValueError("empty term list")
    return terms


def _parse_bounds(text):
    bounds = []
    for part in text.split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise ValueError(f"bound {part.strip()!r} must read 'lo:hi'")
        bounds.append([float(lo), float(hi)])
    return bounds


def parse_grid(text):
    """``'32x32'`` -> ``(32, 32)``."""
    try:
        return tuple(int(k) for k in str(text).lower().split("x"))
    except ValueError:
        raise ValueError(f"grid must look like AxB, got {text!r}") from None


def _parse_ints(text):
    return tuple(int(k) for k in str(text).split(","))


def _parse_floats(text):
    return tuple(float(k) for k in str(text).split(","))


_PARSERS = {
    "nx": int,
    "train_grid": parse_grid,
    "nmax": int,
    "tol": float,
    "seed": int,
    "test_seed": int,
    "samples": int,
    "mu": _parse_floats,
    "nx_list": _parse_ints,
    "ref_nx": int,
    "repetitions": int,
}

KEYS = tuple(f.name for f in dataclasses.fields(StudyConfig))


def coerce(key, value):
    """Convert a raw string setting to its typed value."""
    if key not in KEYS:
        raise ValueError(f"unknown setting {key!r}")
    if value is None or not isinstance(value, str):
        return value
    try:
        return _PARSERS.get(key, str)(value.strip())
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {exc}") from None


def read_config_file(path):
    """Read a flat ``key = value`` file (``#`` comments) into typed settings."""
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = lambda k: k.strip().replace("-", "_")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ValueError(f"cannot parse config file {path}: {exc}".replace("\n", " ")) from None
    return {k: coerce(k, v) for k, v in parser["config"].items()}


def make_config(file_settings=None, overrides=None):
    """Defaults, then file settings, then overrides (``None`` values ignored)."""
    values = {}
    for source in (file_settings or {}, overrides or {}):
        for k, v in source.items():
            if v is not None:
                values[k] = coerce(k, v)
    return StudyConfig(**values)
