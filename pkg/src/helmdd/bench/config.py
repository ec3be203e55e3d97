"""Flat ``key = value`` configuration files.

One setting per line, ``#`` starts a comment. Values are numbers, booleans
(``true``/``false``), ``none``, bare words, or comma-separated lists of those.
Keys live in the namespaces ``problem.*``, ``decomp.*``, ``coarse.*``, ``krylov.*``
and ``output.*``. For ``sweep`` the axis keys (``problem.frequency``,
``problem.wave_number``, ``problem.n_ppwl``, ``decomp.N``, ``decomp.overlap``,
``coarse.method``, ``coarse.nu``) accept lists.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from ..krylov import ConfigError, KrylovConfig
from ..mesh import BoundaryTag
from .experiment import ExperimentGrid, SolverSettings, default_krylov_method
from .problems import (
    ConstantVelocity,
    LayeredVelocity,
    MarmousiLike,
    ProblemSpec,
    VelocityError,
    load_velocity_raster,
)

SCHEMA = {
    "problem.x_extent": "pair of floats, default 0, 1",
    "problem.y_extent": "pair of floats, default 0, 1",
    "problem.velocity": "constant | layers | raster | marmousi",
    "problem.c": "constant velocity (default 1)",
    "problem.layer_interfaces": "ascending y-values of layer interfaces",
    "problem.layer_speeds": "speeds bottom to top (one more than interfaces)",
    "problem.raster": "path of a velocity raster file",
    "problem.seed": "seed of the marmousi-like model (default 0)",
    "problem.frequency": "frequency in Hz (list allowed in sweeps)",
    "problem.wave_number": "maximum wave number (list allowed in sweeps)",
    "problem.bc.bottom": "dirichlet | neumann | robin (default robin)",
    "problem.bc.right": "dirichlet | neumann | robin",
    "problem.bc.top": "dirichlet | neumann | robin",
    "problem.bc.left": "dirichlet | neumann | robin",
    "problem.source": "x, y of the mollified point source, or none",
    "problem.source_amplitude": "source amplitude (default 1)",
    "problem.incident": "dx, dy of an incoming plane wave through the Robin sides, or none",
    "problem.n_ppwl": "points per wavelength (list allowed in sweeps)",
    "problem.refine": "coarse-to-fine refinement factor s (default 2)",
    "decomp.N": "number of subdomains (list allowed in sweeps)",
    "decomp.mode": "strips | grid",
    "decomp.overlap": "min | coarse (list allowed in sweeps)",
    "coarse.method": "ras | oras | grid | dtn | geneo-overlap | geneo-subdomain | geneo-laplace | h-geneo",
    "coarse.nu": "eigenvectors per subdomain (list allowed in sweeps)",
    "coarse.eta_max": "abscissa threshold instead of nu",
    "coarse.c_abs": "grid coarse absorption factor, eps = c_abs * k_max / L (default 1)",
    "coarse.absorption_length": "reference length L of the absorption (default: longer domain side)",
    "coarse.deflate_with_absorption": "use the absorptive fine matrix in the outer deflation (default false)",
    "coarse.inner_tol": "inner coarse GMRES tolerance (default 0.1)",
    "coarse.inner_max_iter": "inner coarse iteration cap (default 200)",
    "coarse.exact": "exact LU for the grid coarse problem (default false)",
    "coarse.dagger": "conjugate | transpose",
    "coarse.combination": "deflation | additive",
    "krylov.method": "gmres | fgmres (default: fgmres for iterative grid coarse solves)",
    "krylov.tol": "relative residual tolerance (default 1e-6)",
    "krylov.max_iter": "iteration cap (default 500)",
    "krylov.restart": "restart length (default none = full GMRES)",
    "output.dir": "output directory (default helmdd-out)",
    "output.title": "table title",
}

SWEEP_KEYS = {
    "problem.frequency", "problem.wave_number", "problem.n_ppwl",
    "decomp.N", "decomp.overlap", "coarse.method", "coarse.nu",
}


def _scalar(text):
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_value(text):
    parts = [p for p in text.split(",")]
    if len(parts) == 1:
        return _scalar(parts[0])
    return [_scalar(p) for p in parts if p.strip()]


def parse_config(text: str) -> dict:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = parse_value(value)
    return cfg


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def _scalar_only(cfg, key, default=None):
    v = cfg.get(key, default)
    if isinstance(v, list) and key not in ("problem.x_extent", "problem.y_extent", "problem.layer_interfaces",
                                           "problem.layer_speeds", "problem.source", "problem.incident"):
        raise ConfigError(f"{key} takes a single value here (lists are only allowed by 'sweep')")
    return v


def _pair(cfg, key, default):
    v = cfg.get(key, default)
    if v is None:
        return None
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError(f"{key} must be two comma-separated numbers")
    return tuple(float(x) for x in v)


def _velocity(cfg, x_extent, y_extent):
    kind = cfg.get("problem.velocity", "constant")
    try:
        if kind == "constant":
            return ConstantVelocity(float(cfg.get("problem.c", 1.0)))
        if kind == "layers":
            interfaces = _as_list(cfg.get("problem.layer_interfaces", []))
            speeds = _as_list(cfg.get("problem.layer_speeds"))
            return LayeredVelocity([float(v) for v in interfaces if v is not None], [float(v) for v in speeds])
        if kind == "raster":
            if "problem.raster" not in cfg:
                raise ConfigError("problem.velocity = raster needs problem.raster")
            return load_velocity_raster(cfg["problem.raster"])
        if kind == "marmousi":
            return MarmousiLike(x_extent, y_extent, seed=int(cfg.get("problem.seed", 0)))
    except (VelocityError, TypeError) as exc:
        raise ConfigError(f"invalid velocity model: {exc}") from exc
    raise ConfigError(f"unknown velocity model {kind!r}")


def problem_spec_from_config(cfg, sweep=False) -> ProblemSpec:
    get = (lambda k, d=None: _as_list(cfg.get(k, d))[0]) if sweep else (lambda k, d=None: _scalar_only(cfg, k, d))
    x_extent = _pair(cfg, "problem.x_extent", [0.0, 1.0])
    y_extent = _pair(cfg, "problem.y_extent", [0.0, 1.0])
    boundary = []
    for side in ("bottom", "right", "top", "left"):
        name = cfg.get(f"problem.bc.{side}")
        if name is not None:
            try:
                boundary.append((side, BoundaryTag[str(name).upper()]))
            except KeyError:
                raise ConfigError(f"problem.bc.{side}: unknown boundary type {name!r}") from None
    freq, wave = get("problem.frequency"), get("problem.wave_number")
    if (freq is None) == (wave is None):
        raise ConfigError("set exactly one of problem.frequency / problem.wave_number")
    source = _pair(cfg, "problem.source", [0.5 * sum(x_extent), 0.5 * sum(y_extent)])
    return ProblemSpec(
        x_extent=x_extent,
        y_extent=y_extent,
        velocity=_velocity(cfg, x_extent, y_extent),
        frequency=None if freq is None else float(freq),
        wave_number=None if wave is None else float(wave),
        boundary=tuple(boundary),
        source=source,
        source_amplitude=float(cfg.get("problem.source_amplitude", 1.0)),
        incident=_pair(cfg, "problem.incident", None),
        n_ppwl=float(get("problem.n_ppwl", 10)),
        refine=int(cfg.get("problem.refine", 2)),
    )


def settings_from_config(cfg, sweep=False) -> SolverSettings:
    get = (lambda k, d=None: _as_list(cfg.get(k, d))[0]) if sweep else (lambda k, d=None: _scalar_only(cfg, k, d))
    method = get("coarse.method", "oras")
    exact = bool(cfg.get("coarse.exact", False))
    kmethod = cfg.get("krylov.method") or default_krylov_method(method, exact)
    try:
        krylov = KrylovConfig(
            method=kmethod,
            tol=float(cfg.get("krylov.tol", 1e-6)),
            max_iter=int(cfg.get("krylov.max_iter", 500)),
            restart=cfg.get("krylov.restart"),
        )
        nu = get("coarse.nu")
        settings = SolverSettings(
            method=method,
            N=int(get("decomp.N", 4)),
            partition_mode=cfg.get("decomp.mode", "strips"),
            overlap=get("decomp.overlap", "min"),
            nu=None if nu is None else int(nu),
            eta_max=cfg.get("coarse.eta_max"),
            c_abs=float(cfg.get("coarse.c_abs", 1.0)),
            absorption_length=cfg.get("coarse.absorption_length"),
            deflate_with_absorption=bool(cfg.get("coarse.deflate_with_absorption", False)),
            inner_tol=float(cfg.get("coarse.inner_tol", 0.1)),
            inner_max_iter=int(cfg.get("coarse.inner_max_iter", 200)),
            exact_coarse=exact,
            dagger=cfg.get("coarse.dagger", "conjugate"),
            combination=cfg.get("coarse.combination", "deflation"),
            krylov=krylov,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if sweep:
        return settings
    return settings.validate()


def grid_from_config(cfg) -> ExperimentGrid:
    base = problem_spec_from_config(cfg, sweep=True)
    settings = settings_from_config(cfg, sweep=True)
    axis_key = "problem.frequency" if base.frequency is not None else "problem.wave_number"
    nus = _as_list(cfg.get("coarse.nu"))
    grid = ExperimentGrid(
        base=base,
        values=tuple(float(v) for v in _as_list(cfg[axis_key])),
        N_values=tuple(int(v) for v in _as_list(cfg.get("decomp.N", 4))),
        nus=tuple(None if v is None else int(v) for v in nus),
        overlaps=tuple(_as_list(cfg.get("decomp.overlap", "min"))),
        methods=tuple(_as_list(cfg.get("coarse.method", "oras"))),
        n_ppwl=tuple(float(v) for v in _as_list(cfg.get("problem.n_ppwl", 10))),
        max_iter=settings.krylov.max_iter,
        tol=settings.krylov.tol,
        seed=int(cfg.get("problem.seed", 0)),
        krylov_method=cfg.get("krylov.method"),
        settings=dataclasses.replace(settings, method="oras", nu=None),
    )
    return grid.validate()


def describe_schema() -> str:
    width = max(map(len, SCHEMA))
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in SCHEMA.items())
