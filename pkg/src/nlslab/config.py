"""Experiment configuration: a single YAML document, validated before any compute.

Example::

    params: {n: 1, rho: 1.0, lam: 1.0}
    grid: {dim: 1, half_width: 64.0, points_per_axis: 2048}
    mesh: {T: 1.0, M: 64, grading: 2.0}
    datum: {kind: Gaussian, amplitude: 0.1, width: 1.0}
    suites: [dispersive, local]
    output_dir: out

Every threshold a check uses lives under ``tolerances``; suite knobs that
are not thresholds (time lists, sweep factors) live under ``options``.
Missing entries take the defaults below, and :meth:`ExperimentConfig.to_dict`
writes the fully expanded form, so parse(dump(cfg)) == cfg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .exponents import ProblemParams, Regime, compute_exponents
from .grid import Bump, Gaussian, GridSpec, HomogeneousPower, Indicator, SelfSimilarPower
from .lab import DecayMode, validate_decay_exponent
from .mild import TimeMesh

__all__ = [
    "SUITES",
    "DEFAULT_TOLERANCES",
    "DEFAULT_OPTIONS",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "dump_config",
]

SUITES = {
    "dispersive": "decay slope of ||S(t)phi||_(p',inf) / ||phi||_(p,inf) for Gaussian data",
    "local": "contraction, uniqueness and existence-time scaling (Local regime)",
    "global": "global solve with small data (Global regime)",
    "selfsimilar": "u(t,x) against mu^(2/rho) u(mu^2 t, mu x) for homogeneous data (Global regime)",
    "decay": "weighted distance of two solutions over the last mesh decade (Global regime)",
    "dependence": "Lipschitz ratios of the data-to-solution map",
}

DEFAULT_TOLERANCES = {
    "slope_rtol": 0.02,
    "slope_atol": 0.005,
    "constant_tol": 0.05,
    "wrap_tol": 1e-6,
    "picard_tol": 1e-10,
    "uniqueness_factor": 10.0,
    "scaling_tol": 0.05,
    "residual_tol": 1e-5,
    "selfsimilar_tol": 0.01,
    "decay_tol": 1e-3,
    "dependence_tol": 0.1,
}

DEFAULT_OPTIONS = {
    "dispersive": {
        "p_list": [1.25, 4.0 / 3.0, 1.5],
        "t_list": [float(t) for t in np.geomspace(1.0, 100.0, 9)],
        "width": 1.0,
        "constant_window": [10.0, 100.0],
    },
    "local": {"theta": 0.25, "sweep": [0.5, 1.0, 2.0]},
    "global": {},
    "selfsimilar": {"mu": 2.0, "window": 0.25},
    "decay": {"h_list": [0.0], "mode": "AtInfinity", "perturbation_amplitude": 5e-4, "perturbation_width": 2.0},
    "dependence": {"indices": [2, 4, 8], "theta": 0.25},
}

_TOP_KEYS = ("params", "grid", "mesh", "datum", "suites", "tolerances", "options", "output_dir", "seed", "max_iter")
_DATUM_KINDS = {
    "Gaussian": (Gaussian, ("amplitude", "width")),
    "Indicator": (Indicator, ("amplitude", "radius")),
    "Bump": (Bump, ("amplitude", "radius")),
    "HomogeneousPower": (HomogeneousPower, ("coefficients", "degree", "exponent")),
    "SelfSimilarPower": (SelfSimilarPower, ("amplitude",)),
}
_REGIME_OF_SUITE = {
    "local": Regime.LOCAL,
    "global": Regime.GLOBAL,
    "selfsimilar": Regime.GLOBAL,
    "decay": Regime.GLOBAL,
}


@dataclass(frozen=True)
class ExperimentConfig:
    params: ProblemParams
    grid: GridSpec
    mesh: TimeMesh
    datum: object
    suites: tuple
    tolerances: dict
    options: dict
    output_dir: str = "nlslab-output"
    seed: int = 0
    max_iter: int = 100
    cell_average: bool = False

    def to_dict(self) -> dict:
        lam = self.params.lam
        datum = {"kind": type(self.datum).__name__}
        for name in _DATUM_KINDS[datum["kind"]][1]:
            datum[name] = _out(getattr(self.datum, name))
        if self.cell_average:
            datum["cell_average"] = True
        return {
            "params": {"n": self.params.n, "rho": self.params.rho, "lam": _out(lam)},
            "grid": {"dim": self.grid.dim, "half_width": self.grid.half_width,
                     "points_per_axis": self.grid.points_per_axis, "staggered": self.grid.staggered},
            "mesh": {"T": self.mesh.T, "M": self.mesh.M, "grading": self.mesh.grading},
            "datum": datum,
            "suites": list(self.suites),
            "tolerances": dict(self.tolerances),
            "options": {k: dict(v) for k, v in self.options.items()},
            "output_dir": self.output_dir,
            "seed": self.seed,
            "max_iter": self.max_iter,
        }


def _out(value):
    """Plain YAML/JSON form of config values (complex as [re, im] when needed)."""
    if isinstance(value, complex):
        return value.real if value.imag == 0 else [value.real, value.imag]
    if isinstance(value, dict):
        return [[list(k), _out(v)] for k, v in sorted(value.items())]
    return value


class _Reader:
    def __init__(self, lines: dict):
        self.lines = lines

    def error(self, message: str, path: tuple):
        line = None
        probe = tuple(path)
        while probe and line is None:
            line = self.lines.get(probe)
            probe = probe[:-1]
        key = ".".join(str(p) for p in path) if path else None
        return ConfigError(f"{key}: {message}" if key else message, line=line, key=key)

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            raise self.error("expected a mapping", path)
        for k in value:
            if k not in allowed:
                raise self.error(f"unknown key {k!r}", path + (k,))
        return value

    def number(self, value, path, positive=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", path)
        if integer and int(value) != value:
            raise self.error(f"expected an integer, got {value!r}", path)
        if not math.isfinite(value) or (positive and not value > 0):
            raise self.error(f"expected a {'positive ' if positive else ''}finite number, got {value!r}", path)
        return int(value) if integer else float(value)

    def complex_value(self, value, path):
        if isinstance(value, list) and len(value) == 2:
            return complex(self.number(value[0], path + (0,)), self.number(value[1], path + (1,)))
        return complex(self.number(value, path))

    def number_list(self, value, path, **kw):
        if not isinstance(value, list) or not value:
            raise self.error("expected a nonempty list", path)
        return [self.number(v, path + (i,), **kw) for i, v in enumerate(value)]


def _index_lines(node, path, out):
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = key_node.value
            out[path + (key,)] = key_node.start_mark.line + 1
            _index_lines(value_node, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            out[path + (i,)] = item.start_mark.line + 1
            _index_lines(item, path + (i,), out)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML configuration; errors carry the offending line."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"malformed YAML: {exc.problem}", line=mark.line + 1 if mark else None) from exc
    lines: dict = {}
    if node is not None:
        _index_lines(node, (), lines)
    r = _Reader(lines)
    if data is None:
        raise ConfigError("empty configuration")
    r.mapping(data, (), _TOP_KEYS)
    for key in ("params", "grid", "datum", "suites"):
        if key not in data:
            raise r.error(f"missing required section {key!r}", ())

    p = r.mapping(data["params"], ("params",), ("n", "rho", "lam"))
    try:
        params = ProblemParams(
            r.number(p.get("n", 1), ("params", "n"), positive=True, integer=True),
            r.number(p.get("rho"), ("params", "rho"), positive=True),
            r.complex_value(p.get("lam", 1.0), ("params", "lam")),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise r.error(str(exc), ("params",)) from exc

    g = r.mapping(data["grid"], ("grid",), ("dim", "half_width", "points_per_axis", "staggered"))
    try:
        grid = GridSpec(
            r.number(g.get("dim", params.n), ("grid", "dim"), positive=True, integer=True),
            r.number(g.get("half_width"), ("grid", "half_width"), positive=True),
            r.number(g.get("points_per_axis"), ("grid", "points_per_axis"), positive=True, integer=True),
            bool(g.get("staggered", False)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise r.error(str(exc), ("grid",)) from exc
    if grid.dim != params.n:
        raise r.error(f"grid dimension {grid.dim} differs from n={params.n}", ("grid", "dim"))

    m = r.mapping(data.get("mesh", {}) or {}, ("mesh",), ("T", "M", "grading"))
    try:
        mesh = TimeMesh(
            r.number(m.get("T", 1.0), ("mesh", "T"), positive=True),
            r.number(m.get("M", 64), ("mesh", "M"), positive=True, integer=True),
            r.number(m.get("grading", 2.0), ("mesh", "grading"), positive=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise r.error(str(exc), ("mesh",)) from exc

    datum, cell_average = _parse_datum(r, data["datum"], grid)

    suites = data["suites"]
    if not isinstance(suites, list):
        raise r.error("expected a list of suite names", ("suites",))
    if not suites:
        raise r.error("no suites selected", ("suites",))
    for i, name in enumerate(suites):
        if name not in SUITES:
            raise r.error(f"unknown suite {name!r}; choose from {', '.join(SUITES)}", ("suites", i))
    if len(set(suites)) != len(suites):
        raise r.error("suites listed more than once", ("suites",))

    tol_in = r.mapping(data.get("tolerances", {}) or {}, ("tolerances",), tuple(DEFAULT_TOLERANCES))
    tolerances = dict(DEFAULT_TOLERANCES)
    for k, v in tol_in.items():
        tolerances[k] = r.number(v, ("tolerances", k), positive=True)

    opt_in = r.mapping(data.get("options", {}) or {}, ("options",), tuple(SUITES))
    options = {}
    for name in suites:
        merged = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULT_OPTIONS[name].items()}
        given = r.mapping(opt_in.get(name, {}) or {}, ("options", name), tuple(DEFAULT_OPTIONS[name]))
        for k, v in given.items():
            merged[k] = v
        options[name] = _check_options(r, name, merged)

    exps = compute_exponents(params)
    for i, name in enumerate(suites):
        need = _REGIME_OF_SUITE.get(name)
        if need is not None and exps.regime is not need:
            raise r.error(
                f"suite {name!r} needs the {need.value} regime but (n={params.n}, rho={params.rho}) is {exps.regime.value}",
                ("suites", i),
            )
        if name == "dependence" and exps.regime is Regime.INADMISSIBLE:
            raise r.error("dependence needs an admissible (n, rho)", ("suites", i))
    if "selfsimilar" in suites:
        if not isinstance(datum, SelfSimilarPower):
            raise r.error("selfsimilar needs datum kind SelfSimilarPower", ("datum", "kind"))
        if not grid.staggered:
            raise r.error("selfsimilar needs a staggered grid", ("grid", "staggered"))
    if "decay" in suites:
        for i, h in enumerate(options["decay"]["h_list"]):
            try:
                validate_decay_exponent(exps, h, options["decay"]["mode"])
            except ValueError as exc:
                raise r.error(str(exc), ("options", "decay", "h_list", i)) from exc

    output_dir = data.get("output_dir", "nlslab-output")
    if not isinstance(output_dir, str) or not output_dir:
        raise r.error("expected a nonempty path", ("output_dir",))
    seed = r.number(data.get("seed", 0), ("seed",), integer=True)
    max_iter = r.number(data.get("max_iter", 100), ("max_iter",), positive=True, integer=True)
    return ExperimentConfig(params, grid, mesh, datum, tuple(suites), tolerances, options,
                            output_dir, seed, max_iter, cell_average)


def _parse_datum(r: _Reader, d, grid: GridSpec):
    if not isinstance(d, dict) or "kind" not in d:
        raise r.error("expected a mapping with a 'kind' entry", ("datum",))
    kind = d["kind"]
    if kind not in _DATUM_KINDS:
        raise r.error(f"unknown datum kind {kind!r}; choose from {', '.join(_DATUM_KINDS)}", ("datum", "kind"))
    cls, names = _DATUM_KINDS[kind]
    r.mapping(d, ("datum",), ("kind", "cell_average") + names)
    kwargs = {}
    for name in names:
        if name not in d:
            continue
        path = ("datum", name)
        if name == "amplitude":
            kwargs[name] = r.complex_value(d[name], path)
        elif name == "coefficients":
            raw = d[name]
            if not isinstance(raw, list):
                raise r.error("expected a list of [multi-index, coefficient] pairs", path)
            coeffs = {}
            for i, item in enumerate(raw):
                if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], list)):
                    raise r.error("expected [multi-index, coefficient]", path + (i,))
                key = tuple(r.number(v, path + (i, 0), integer=True) for v in item[0])
                coeffs[key] = r.complex_value(item[1], path + (i, 1))
            kwargs[name] = coeffs
        elif name == "degree":
            kwargs[name] = r.number(d[name], path, integer=True)
        else:
            kwargs[name] = r.number(d[name], path, positive=name != "exponent")
    try:
        datum = cls(**kwargs)
    except ValueError as exc:
        raise r.error(str(exc), ("datum",)) from exc
    if getattr(datum, "singular", False) and not grid.staggered:
        raise r.error(f"{kind} is singular at the origin and needs a staggered grid", ("datum", "kind"))
    return datum, bool(d.get("cell_average", False))


def _check_options(r: _Reader, name: str, opts: dict) -> dict:
    base = ("options", name)
    if name == "dispersive":
        opts["p_list"] = r.number_list(opts["p_list"], base + ("p_list",))
        for i, p in enumerate(opts["p_list"]):
            if not 1 < p < 2:
                raise r.error(f"p must lie in (1, 2), got {p!r}", base + ("p_list", i))
        opts["t_list"] = r.number_list(opts["t_list"], base + ("t_list",), positive=True)
        opts["width"] = r.number(opts["width"], base + ("width",), positive=True)
        window = r.number_list(opts["constant_window"], base + ("constant_window",), positive=True)
        if len(window) != 2 or window[0] >= window[1]:
            raise r.error("expected [t_lo, t_hi] with t_lo < t_hi", base + ("constant_window",))
        opts["constant_window"] = window
    elif name == "local":
        opts["theta"] = r.number(opts["theta"], base + ("theta",), positive=True)
        if opts["theta"] > 1:
            raise r.error("theta must lie in (0, 1]", base + ("theta",))
        opts["sweep"] = r.number_list(opts["sweep"], base + ("sweep",), positive=True)
        if len(opts["sweep"]) < 2:
            raise r.error("the amplitude sweep needs at least two factors", base + ("sweep",))
    elif name == "selfsimilar":
        mu = r.number(opts["mu"], base + ("mu",), positive=True)
        if math.frexp(mu)[0] != 0.5:
            raise r.error(f"mu must be a power of two, got {mu!r}", base + ("mu",))
        opts["mu"] = mu
        opts["window"] = r.number(opts["window"], base + ("window",), positive=True)
    elif name == "decay":
        opts["h_list"] = r.number_list(opts["h_list"], base + ("h_list",))
        if opts["mode"] not in [m.value for m in DecayMode]:
            raise r.error(f"mode must be AtInfinity or AtZero, got {opts['mode']!r}", base + ("mode",))
        opts["perturbation_amplitude"] = r.number(opts["perturbation_amplitude"], base + ("perturbation_amplitude",), positive=True)
        opts["perturbation_width"] = r.number(opts["perturbation_width"], base + ("perturbation_width",), positive=True)
    elif name == "dependence":
        opts["indices"] = r.number_list(opts["indices"], base + ("indices",), positive=True, integer=True)
        opts["theta"] = r.number(opts["theta"], base + ("theta",), positive=True)
        if opts["theta"] > 1:
            raise r.error("theta must lie in (0, 1]", base + ("theta",))
    return opts


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)
