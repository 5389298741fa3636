"""Run configuration: JSON files parsed into dataclasses.

Complex numbers are written as ``[re, im]``; a bare number or a Python-style
string such as ``"0.21+0.1j"`` is accepted on input.  Unknown keys are
rejected with the dotted path of the offending field.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .assembly import METHODS, AssemblyError, ImpedanceField, ProblemSpec
from .mesh import EDGES, TAGS, RectDomain, TwoDomainGeometry
from .scenarios import muffler_geometry, waveguide_geometry


class ConfigError(ValueError):
    pass


def parse_complex(v, path: str) -> complex:
    if isinstance(v, bool):
        raise ConfigError(f"{path}: expected a complex number, got {v!r}")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(c, (int, float)) for c in v):
        return complex(v[0], v[1])
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", "").replace("i", "j"))
        except ValueError:
            pass
    raise ConfigError(f"{path}: expected a complex number as [re, im], got {v!r}")


def dump_complex(z: complex) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _number(v, path, positive=False, integer=False, minimum=None):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if integer:
        ok = ok and float(v).is_integer()
    if not ok:
        raise ConfigError(f"{path}: expected {'an integer' if integer else 'a number'}, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be positive, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {v!r}")
    return int(v) if integer else float(v)


def _check_keys(d, cls, path):
    if not isinstance(d, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(d) - known)
    if extra:
        where = f"{path}." if path else ""
        raise ConfigError(f"{where}{extra[0]}: unknown key")


def _list(v, path, item, min_len=1):
    if not isinstance(v, list) or len(v) < min_len:
        raise ConfigError(f"{path}: expected a list with at least {min_len} entries")
    return [item(x, f"{path}[{i}]") for i, x in enumerate(v)]


# ------------------------------------------------------------------ geometry

GEOMETRY_KINDS = ("waveguide", "muffler", "rectangles")


def _tag_rule(v, path):
    if isinstance(v, str):
        if v not in TAGS:
            raise ConfigError(f"{path}: unknown tag {v!r} (expected one of {TAGS})")
        return v
    if isinstance(v, list):
        out = []
        for i, seg in enumerate(v):
            if not (isinstance(seg, list) and len(seg) == 3 and seg[2] in TAGS):
                raise ConfigError(f"{path}[{i}]: expected [t0, t1, tag]")
            out.append((_number(seg[0], f"{path}[{i}][0]"), _number(seg[1], f"{path}[{i}][1]"), seg[2]))
        return out
    raise ConfigError(f"{path}: expected a tag or a list of [t0, t1, tag]")


def _tags(v, path):
    if not isinstance(v, dict) or set(v) != set(EDGES):
        raise ConfigError(f"{path}: needs exactly the edges {EDGES}")
    return {e: _tag_rule(v[e], f"{path}.{e}") for e in EDGES}


def _box(v, path):
    b = _list(v, path, _number, 4)
    if len(b) != 4 or not (b[0] < b[1] and b[2] < b[3]):
        raise ConfigError(f"{path}: expected [x_min, x_max, y_min, y_max] with min < max")
    return b


@dataclass
class GeometryConfig:
    kind: str = "waveguide"
    ny1: int = 1  # waveguide: elements across the strip; muffler: pipe rows
    ny2: int | None = None
    nx: int = 360  # muffler: elements along the pipe
    grading: float = 1.0
    omega1: list | None = None  # rectangles: [x_min, x_max, y_min, y_max]
    omega2: list | None = None
    tags1: dict | None = None
    tags2: dict | None = None
    resolution1: list | None = None
    resolution2: list | None = None

    @classmethod
    def from_dict(cls, d, path="geometry"):
        _check_keys(d, cls, path)
        c = cls(**d)
        if c.kind not in GEOMETRY_KINDS:
            raise ConfigError(f"{path}.kind: expected one of {GEOMETRY_KINDS}, got {c.kind!r}")
        c.ny1 = _number(c.ny1, f"{path}.ny1", positive=True, integer=True)
        if c.ny2 is not None:
            c.ny2 = _number(c.ny2, f"{path}.ny2", positive=True, integer=True)
        c.nx = _number(c.nx, f"{path}.nx", positive=True, integer=True)
        c.grading = _number(c.grading, f"{path}.grading", minimum=1.0)
        if c.kind == "rectangles":
            for name in ("omega1", "omega2", "tags1", "tags2", "resolution1", "resolution2"):
                if getattr(c, name) is None:
                    raise ConfigError(f"{path}.{name}: required for kind 'rectangles'")
            c.omega1, c.omega2 = _box(c.omega1, f"{path}.omega1"), _box(c.omega2, f"{path}.omega2")
            c.tags1 = _tags(c.tags1, f"{path}.tags1")
            c.tags2 = _tags(c.tags2, f"{path}.tags2")
            for name in ("resolution1", "resolution2"):
                r = _list(getattr(c, name), f"{path}.{name}",
                          lambda x, p: _number(x, p, positive=True, integer=True), 2)
                if len(r) != 2:
                    raise ConfigError(f"{path}.{name}: expected [nx, ny]")
                setattr(c, name, r)
        return c

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("tags1", "tags2"):
            if d[k] is not None:
                d[k] = {e: r if isinstance(r, str) else [list(s) for s in r] for e, r in d[k].items()}
        return d

    def build(self) -> TwoDomainGeometry:
        ny2 = self.ny1 if self.ny2 is None else self.ny2
        if self.kind == "waveguide":
            return waveguide_geometry(self.ny1, ny2)
        if self.kind == "muffler":
            return muffler_geometry(self.nx, self.ny1, ny2, self.grading)
        return TwoDomainGeometry(RectDomain(*self.omega1, side_id=1), RectDomain(*self.omega2, side_id=2),
                                 self.tags1, self.tags2, tuple(self.resolution1), tuple(self.resolution2),
                                 self.grading)


# ------------------------------------------------------------------- problem

def _impedance(v, path) -> ImpedanceField:
    try:
        return _impedance_raw(v, path)
    except AssemblyError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _impedance_raw(v, path) -> ImpedanceField:
    if isinstance(v, dict):
        if set(v) == {"breaks", "values"}:
            return ImpedanceField.piecewise(_list(v["breaks"], f"{path}.breaks", _number, 2),
                                            _list(v["values"], f"{path}.values", parse_complex))
        keys = ("mass", "damping", "spring", "rho", "c", "omega")
        if set(v) == set(keys):
            return ImpedanceField.mass_spring_damper(*(_number(v[k], f"{path}.{k}") for k in keys))
        raise ConfigError(f"{path}: expected a complex number, {{breaks, values}} or a mass-spring-damper object")
    return ImpedanceField.constant(parse_complex(v, path))


def _dump_impedance(z: ImpedanceField):
    if z.kind == "constant":
        return dump_complex(z.value)
    if z.kind == "piecewise":
        return {"breaks": list(z.breaks), "values": [dump_complex(v) for v in z.values]}
    return dict(zip(("mass", "damping", "spring", "rho", "c", "omega"), z.msd))


@dataclass
class ProblemConfig:
    kappa: float = 5.0
    zeta: object = (0.0, 0.0)
    g: list = field(default_factory=lambda: [{"side": 1, "edge": "left", "value": [1.0, 0.0]}])
    method: str = "nitsche"
    order: int = 1
    gamma: float | None = None

    @classmethod
    def from_dict(cls, d, path="problem"):
        _check_keys(d, cls, path)
        c = cls(**d)
        c.kappa = _number(c.kappa, f"{path}.kappa", positive=True)
        c.zeta = _impedance(c.zeta, f"{path}.zeta")
        if c.method not in METHODS:
            raise ConfigError(f"{path}.method: expected one of {METHODS}, got {c.method!r}")
        c.order = _number(c.order, f"{path}.order", integer=True)
        if c.order not in (1, 2, 3):
            raise ConfigError(f"{path}.order: must be 1, 2 or 3, got {c.order}")
        if c.gamma is not None:
            c.gamma = _number(c.gamma, f"{path}.gamma", positive=True)
        g = []
        if not isinstance(c.g, list):
            raise ConfigError(f"{path}.g: expected a list of {{side, edge, value}}")
        for i, e in enumerate(c.g):
            p = f"{path}.g[{i}]"
            if not isinstance(e, dict) or set(e) != {"side", "edge", "value"}:
                raise ConfigError(f"{p}: expected {{side, edge, value}}")
            if e["side"] not in (1, 2) or e["edge"] not in EDGES:
                raise ConfigError(f"{p}: side must be 1 or 2 and edge one of {EDGES}")
            g.append({"side": e["side"], "edge": e["edge"], "value": dump_complex(parse_complex(e["value"], f"{p}.value"))})
        c.g = g
        return c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zeta"] = _dump_impedance(self.zeta)
        return d

    def spec(self, **overrides) -> ProblemSpec:
        g = {(e["side"], e["edge"]): complex(*e["value"]) for e in self.g}
        kw = dict(kappa=self.kappa, zeta=self.zeta, g=g, method=self.method, order=self.order, gamma=self.gamma)
        kw.update(overrides)
        return ProblemSpec(**kw)


# ------------------------------------------------------- per-command options

@dataclass
class SolveConfig:
    level: int = 0
    grid: list = field(default_factory=lambda: [201, 11])
    vtk: bool = False

    @classmethod
    def from_dict(cls, d, path="solve"):
        _check_keys(d, cls, path)
        c = cls(**d)
        c.level = _number(c.level, f"{path}.level", integer=True, minimum=0)
        c.grid = _list(c.grid, f"{path}.grid", lambda x, p: _number(x, p, integer=True, minimum=2), 2)
        if not isinstance(c.vtk, bool):
            raise ConfigError(f"{path}.vtk: expected true or false")
        return c


@dataclass
class ConvergenceConfig:
    levels: list = field(default_factory=lambda: [0, 1, 2, 3])
    kappas: list = field(default_factory=lambda: [5.0])
    orders: list = field(default_factory=lambda: [1, 2, 3])
    zetas: list = field(default_factory=lambda: [[0.21, 0.1]])
    methods: list = field(default_factory=lambda: ["nitsche"])

    @classmethod
    def from_dict(cls, d, path="convergence"):
        _check_keys(d, cls, path)
        c = cls(**d)
        c.levels = _list(c.levels, f"{path}.levels", lambda x, p: _number(x, p, integer=True, minimum=0))
        if len(c.levels) < 4:
            raise ConfigError(f"{path}.levels: at least 4 refinement levels are needed for a rate, got {len(c.levels)}")
        c.kappas = _list(c.kappas, f"{path}.kappas", lambda x, p: _number(x, p, positive=True))
        c.orders = _list(c.orders, f"{path}.orders", lambda x, p: _number(x, p, integer=True))
        if any(k not in (1, 2, 3) for k in c.orders):
            raise ConfigError(f"{path}.orders: entries must be 1, 2 or 3")
        c.zetas = [dump_complex(parse_complex(z, f"{path}.zetas[{i}]")) for i, z in enumerate(c.zetas)]
        if not c.methods or any(m not in METHODS for m in c.methods):
            raise ConfigError(f"{path}.methods: entries must be in {METHODS}")
        return c


@dataclass
class CheckConfig:
    n_samples: int = 200
    lambda_samples: int = 10_000
    n_probes: int = 10
    level: int = 0

    @classmethod
    def from_dict(cls, d, path="check"):
        _check_keys(d, cls, path)
        c = cls(**d)
        for name in ("n_samples", "lambda_samples", "n_probes"):
            setattr(c, name, _number(getattr(c, name), f"{path}.{name}", integer=True, positive=True))
        c.level = _number(c.level, f"{path}.level", integer=True, minimum=0)
        return c


@dataclass
class SurfaceWaveConfig:
    kappas: list = field(default_factory=lambda: [10.0, 20.0])
    zetas: list = field(default_factory=lambda: [[0.0, -0.2]])
    side: int = 1

    @classmethod
    def from_dict(cls, d, path="surface_wave"):
        _check_keys(d, cls, path)
        c = cls(**d)
        c.kappas = _list(c.kappas, f"{path}.kappas", lambda x, p: _number(x, p, positive=True))
        c.zetas = [dump_complex(parse_complex(z, f"{path}.zetas[{i}]")) for i, z in enumerate(c.zetas)]
        if c.side not in (1, 2):
            raise ConfigError(f"{path}.side: must be 1 or 2")
        return c


@dataclass
class RunConfig:
    scenario: str = "waveguide"
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    problem: ProblemConfig = field(default_factory=lambda: ProblemConfig.from_dict({}))
    output: str = "out"
    seed: int = 0
    solve: SolveConfig = field(default_factory=SolveConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    surface_wave: SurfaceWaveConfig = field(default_factory=SurfaceWaveConfig)

    _SECTIONS = {"geometry": GeometryConfig, "problem": ProblemConfig, "solve": SolveConfig,
                 "convergence": ConvergenceConfig, "check": CheckConfig, "surface_wave": SurfaceWaveConfig}

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        _check_keys(d, cls, "")
        kw = {}
        for name, sub in cls._SECTIONS.items():
            kw[name] = sub.from_dict(d.get(name, {}), name)
        if not isinstance(d.get("scenario", "waveguide"), str):
            raise ConfigError("scenario: expected a string")
        if not isinstance(d.get("output", "out"), str):
            raise ConfigError("output: expected a path string")
        kw["scenario"] = d.get("scenario", "waveguide")
        kw["output"] = d.get("output", "out")
        kw["seed"] = _number(d.get("seed", 0), "seed", integer=True, minimum=0)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {"scenario": self.scenario, "output": self.output, "seed": self.seed}
        for name in self._SECTIONS:
            sub = getattr(self, name)
            d[name] = sub.to_dict() if hasattr(sub, "to_dict") else asdict(sub)
        return d

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
