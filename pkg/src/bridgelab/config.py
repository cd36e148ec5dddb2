"""Run configuration: JSON parsing and validation with line-precise errors."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .grid import Grid
from .kernels import ReferenceProcess
from . import marginals

EXPERIMENTS = ("figure1", "stationary", "sweep", "hot_gas", "fisher", "fk", "kernels", "oracle", "full")
TOP_KEYS = {"experiment", "description", "instance", "tolerances", "t_samples", "dt", "epsilons",
            "seed", "output_dir", "lambdas", "claims", "hot_gas", "fk", "fisher", "sweep", "plot"}
FAMILY_KEYS = {
    "gaussian": ({"mean", "variance"}, {"variance"}),
    "gaussian_mixture": ({"components"}, {"components"}),
    "uniform": ({"a", "b"}, {"a", "b"}),
    "tabulated": ({"file"}, {"file"}),
}

Path_ = Tuple[Union[str, int], ...]


class ConfigError(ValueError):
    def __init__(self, message: str, path: Path_ = (), line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.path = tuple(path)
        self.line = line

    def __str__(self):
        where = ".".join(str(p) for p in self.path)
        loc = f"line {self.line}: " if self.line else ""
        return f"{loc}{where + ': ' if where else ''}{self.message}"


def locate(text: str, path: Path_) -> int:
    """Best-effort 1-based line of the JSON value at ``path``.

    Keys are searched for in order, each after the previous match; list
    indices are resolved by counting top-level elements of the array.
    """
    pos = 0
    for p in path:
        if isinstance(p, int):
            m = re.compile(r"\[").search(text, pos)
            if not m:
                break
            pos = _nth_element(text, m.end(), p)
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(p))).search(text, pos)
        if not m:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def _nth_element(text: str, start: int, n: int) -> int:
    if n == 0:
        return _skip_ws(text, start)
    depth, k, i = 0, 0, start
    in_str = False
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch in "[{":
            depth += 1
        elif ch in "]}":
            if depth == 0:
                return i
            depth -= 1
        elif ch == "," and depth == 0:
            k += 1
            if k == n:
                return _skip_ws(text, i + 1)
        i += 1
    return start


def _num(v, path, positive=False, integer=False, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError("expected a finite number", path)
    if integer and int(v) != v:
        raise ConfigError("expected an integer", path)
    if positive and not v > 0:
        raise ConfigError("expected a positive number", path)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}", path)
    return int(v) if integer else float(v)


def _obj(v, path):
    if not isinstance(v, dict):
        raise ConfigError("expected an object", path)
    return v


def _keys(d, path, allowed, required=()):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r}", path + (k,))
    for k in required:
        if k not in d:
            raise ConfigError(f"missing required key {k!r}", path)


def _marginal(spec, path):
    if spec == "stationary":
        return spec
    _obj(spec, path)
    fam = spec.get("family")
    if fam not in FAMILY_KEYS:
        raise ConfigError(f"unknown marginal family {fam!r}", path + ("family",))
    allowed, required = FAMILY_KEYS[fam]
    _keys(spec, path, allowed | {"family"}, required)
    if fam == "gaussian":
        _num(spec.get("mean", 0.0), path + ("mean",))
        _num(spec["variance"], path + ("variance",), positive=True)
    elif fam == "gaussian_mixture":
        comps = spec["components"]
        if not isinstance(comps, list) or not comps:
            raise ConfigError("expected a non-empty list", path + ("components",))
        for i, c in enumerate(comps):
            cp = path + ("components", i)
            _obj(c, cp)
            _keys(c, cp, {"weight", "mean", "variance"}, {"mean", "variance"})
            _num(c["mean"], cp + ("mean",))
            _num(c["variance"], cp + ("variance",), positive=True)
            _num(c.get("weight", 1.0), cp + ("weight",), positive=True)
    elif fam == "uniform":
        a = _num(spec["a"], path + ("a",))
        if not _num(spec["b"], path + ("b",)) > a:
            raise ConfigError("need b > a", path + ("b",))
    elif not isinstance(spec["file"], str):
        raise ConfigError("expected a file path", path + ("file",))
    return spec


@dataclass
class InstanceSpec:
    process: Dict[str, Any]
    grid: Dict[str, Any]
    mu: Any
    nu: Any

    def make_grid(self, resolution: float = 1.0) -> Grid:
        g = Grid(self.grid["lower"], self.grid["upper"], self.grid["n_points"])
        return g if resolution == 1.0 else g.refine(resolution)

    def make_process(self, grid: Grid, **override) -> ReferenceProcess:
        p = dict(self.process, **override)
        kind, sigma = p["kind"], p.get("sigma", 1.0)
        if kind == "ou":
            return ReferenceProcess.ou(grid, p["alpha"], sigma)
        if kind == "brownian":
            return ReferenceProcess.brownian(grid, sigma)
        data = np.loadtxt(p["U"], delimiter="," if str(p["U"]).endswith(".csv") else None, ndmin=2)
        return ReferenceProcess.tabulated(grid, np.interp(grid.points, data[:, 0], data[:, 1]), sigma)

    def make_marginal(self, which: str, grid: Grid, process: ReferenceProcess):
        spec = self.mu if which == "mu" else self.nu
        if spec == "stationary":
            if process.improper:
                raise ConfigError("stationary marginal needs a proper reference", ("instance", which))
            return marginals.Density.from_log(grid, process.log_m)
        return marginals.from_spec(grid, spec)


def _instance(d, path=("instance",)) -> InstanceSpec:
    _obj(d, path)
    _keys(d, path, {"process", "grid", "mu", "nu"}, ("process", "grid", "mu", "nu"))
    p = _obj(d["process"], path + ("process",))
    pp = path + ("process",)
    _keys(p, pp, {"kind", "alpha", "sigma", "U"}, ("kind",))
    if p["kind"] not in ("ou", "brownian", "tabulated"):
        raise ConfigError(f"unknown process kind {p['kind']!r}", pp + ("kind",))
    if p["kind"] == "ou":
        if "alpha" not in p:
            raise ConfigError("OU process needs alpha", pp)
        _num(p["alpha"], pp + ("alpha",), positive=True)
    if p["kind"] == "tabulated" and not isinstance(p.get("U"), str):
        raise ConfigError("tabulated process needs a U file", pp)
    if "sigma" in p:
        _num(p["sigma"], pp + ("sigma",), positive=True)
    g = _obj(d["grid"], path + ("grid",))
    gp = path + ("grid",)
    _keys(g, gp, {"lower", "upper", "n_points"}, ("lower", "upper", "n_points"))
    lo = _num(g["lower"], gp + ("lower",))
    if not _num(g["upper"], gp + ("upper",)) > lo:
        raise ConfigError("upper must exceed lower", gp + ("upper",))
    _num(g["n_points"], gp + ("n_points",), integer=True, minimum=3)
    mu = _marginal(d["mu"], path + ("mu",))
    nu = _marginal(d["nu"], path + ("nu",))
    if mu == "stationary" or nu == "stationary":
        if p["kind"] == "brownian":
            raise ConfigError("stationary marginal needs a proper reference", path + ("nu",))
    return InstanceSpec(p, g, mu, nu)


@dataclass
class RunConfig:
    experiment: str
    instance: Optional[InstanceSpec]
    tolerances: Dict[str, float] = field(default_factory=dict)
    t_samples: Union[int, List[float]] = 41
    dt: float = 1e-3
    epsilons: Tuple[float, ...] = (1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01)
    seed: int = 0
    output_dir: str = "out"
    lambdas: Tuple[float, ...] = (1.0, 2.0)
    claims: Optional[List[str]] = None
    hot_gas: Dict[str, Any] = field(default_factory=dict)
    fk: Dict[str, Any] = field(default_factory=dict)
    fisher: Dict[str, Any] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)
    plot: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)
    source: str = field(default="", repr=False)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def times(self) -> np.ndarray:
        if isinstance(self.t_samples, int):
            return np.linspace(0.0, 1.0, self.t_samples)
        return np.array(self.t_samples, dtype=float)


def validate(d: Dict[str, Any]) -> RunConfig:
    _obj(d, ())
    _keys(d, (), TOP_KEYS, ("experiment",))
    exp = d["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r} (choose from {', '.join(EXPERIMENTS)})", ("experiment",))
    inst = None
    if "instance" in d:
        inst = _instance(d["instance"])
    elif exp not in ("kernels", "oracle", "fk"):
        raise ConfigError("missing required key 'instance'", ())
    cfg = RunConfig(exp, inst, raw=d)
    if "tolerances" in d:
        for k, v in _obj(d["tolerances"], ("tolerances",)).items():
            _num(v, ("tolerances", k), positive=True)
        cfg.tolerances = dict(d["tolerances"])
    if "t_samples" in d:
        ts = d["t_samples"]
        if isinstance(ts, list):
            vals = [_num(v, ("t_samples", i)) for i, v in enumerate(ts)]
            if any(not 0 <= v <= 1 for v in vals) or vals != sorted(vals) or len(vals) < 3:
                raise ConfigError("t_samples must be >= 3 increasing values in [0, 1]", ("t_samples",))
            cfg.t_samples = vals
        else:
            cfg.t_samples = _num(ts, ("t_samples",), integer=True, minimum=3)
    if "dt" in d:
        cfg.dt = _num(d["dt"], ("dt",), positive=True)
        if cfg.dt >= 0.05:
            raise ConfigError("dt must be < 0.05", ("dt",))
    if "epsilons" in d:
        eps = d["epsilons"]
        if not isinstance(eps, list) or not eps:
            raise ConfigError("expected a non-empty list", ("epsilons",))
        vals = [_num(v, ("epsilons", i), positive=True) for i, v in enumerate(eps)]
        for i in range(1, len(vals)):
            if not vals[i] < vals[i - 1]:
                raise ConfigError("epsilons must be strictly decreasing", ("epsilons", i))
        cfg.epsilons = tuple(vals)
    if "seed" in d:
        cfg.seed = _num(d["seed"], ("seed",), integer=True, minimum=0)
    if "output_dir" in d:
        if not isinstance(d["output_dir"], str):
            raise ConfigError("expected a string", ("output_dir",))
        cfg.output_dir = d["output_dir"]
    if "lambdas" in d:
        lam = d["lambdas"]
        if not isinstance(lam, list) or not lam:
            raise ConfigError("expected a non-empty list", ("lambdas",))
        cfg.lambdas = tuple(_num(v, ("lambdas", i), positive=True) for i, v in enumerate(lam))
    if "claims" in d:
        from .claims import ALL_CLAIMS
        cl = d["claims"]
        if not isinstance(cl, list):
            raise ConfigError("expected a list of claim ids", ("claims",))
        for i, c in enumerate(cl):
            if c not in ALL_CLAIMS:
                raise ConfigError(f"unknown claim id {c!r}", ("claims", i))
        cfg.claims = list(cl)
    for key in ("hot_gas", "fk", "fisher", "sweep", "plot"):
        if key in d:
            setattr(cfg, key, dict(_obj(d[key], (key,))))
    _check_sections(cfg)
    return cfg


def _check_sections(cfg: RunConfig):
    hg = cfg.hot_gas
    _keys(hg, ("hot_gas",), {"n_particles", "replicates", "t_samples"})
    if "n_particles" in hg:
        if not isinstance(hg["n_particles"], list) or len(hg["n_particles"]) < 2:
            raise ConfigError("need at least two particle counts", ("hot_gas", "n_particles"))
        for i, v in enumerate(hg["n_particles"]):
            _num(v, ("hot_gas", "n_particles", i), integer=True, minimum=1)
    if "replicates" in hg:
        _num(hg["replicates"], ("hot_gas", "replicates"), integer=True, minimum=1)
    fk = cfg.fk
    _keys(fk, ("fk",), {"K", "f", "levels", "t_samples", "lower", "upper", "shift"})
    if "K" in fk:
        K = _obj(fk["K"], ("fk", "K"))
        _keys(K, ("fk", "K"), {"kind", "c", "a"}, ("kind",))
        if K["kind"] not in ("quadratic", "constant"):
            raise ConfigError("K kind must be 'quadratic' or 'constant'", ("fk", "K", "kind"))
    if "f" in fk:
        _marginal(fk["f"], ("fk", "f"))
    if "levels" in fk:
        lv = fk["levels"]
        if not isinstance(lv, list) or len(lv) < 2:
            raise ConfigError("need at least two refinement levels", ("fk", "levels"))
        for i, l in enumerate(lv):
            lp = ("fk", "levels", i)
            _keys(_obj(l, lp), lp, {"n_points", "dt", "n_trotter"}, ("n_points", "dt", "n_trotter"))
            _num(l["n_points"], lp + ("n_points",), integer=True, minimum=3)
            _num(l["dt"], lp + ("dt",), positive=True)
            _num(l["n_trotter"], lp + ("n_trotter",), integer=True, minimum=1)
    fi = cfg.fisher
    _keys(fi, ("fisher",), {"alphas", "instances", "t_samples"})
    if "instances" in fi:
        for i, spec in enumerate(fi["instances"]):
            ip = ("fisher", "instances", i)
            _keys(_obj(spec, ip), ip, {"name", "mu", "nu"}, ("mu", "nu"))
            _marginal(spec["mu"], ip + ("mu",))
            _marginal(spec["nu"], ip + ("nu",))
    sw = cfg.sweep
    _keys(sw, ("sweep",), {"family", "alpha", "lambda", "t_samples"})
    if sw.get("family", "brownian") not in ("brownian", "ou"):
        raise ConfigError("family must be 'brownian' or 'ou'", ("sweep", "family"))
    pl = cfg.plot
    _keys(pl, ("plot",), {"svg", "x_range", "y_range"})
    for k in ("x_range", "y_range"):
        if k in pl:
            r = pl[k]
            if not (isinstance(r, list) and len(r) == 2):
                raise ConfigError("expected [low, high]", ("plot", k))
            lo, hi = (_num(v, ("plot", k, i)) for i, v in enumerate(r))
            if not hi > lo:
                raise ConfigError("need high > low", ("plot", k))


def _resolve_files(node, base: Path, path: Path_ = ()):
    # tabulated inputs are resolved against the config's directory
    if isinstance(node, dict):
        for k, v in node.items():
            if k in ("file", "U") and isinstance(v, str):
                p = Path(v) if Path(v).is_absolute() else base / v
                if not p.is_file():
                    raise ConfigError(f"file not found: {v}", path + (k,))
                node[k] = str(p)
            else:
                _resolve_files(v, base, path + (k,))
    elif isinstance(node, list):
        for i, v in enumerate(node):
            _resolve_files(v, base, path + (i,))


def load(path: Union[str, Path]) -> RunConfig:
    """Parse and validate a config file; errors carry a line number."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", line=e.lineno) from None
    try:
        _resolve_files(d, Path(path).resolve().parent)
        cfg = validate(d)
    except ConfigError as e:
        e.line = locate(text, e.path)
        raise
    cfg.source = text
    cfg.raw = json.loads(text)  # verbatim echo, before path resolution
    return cfg
