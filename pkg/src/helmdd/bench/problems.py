"""Velocity models and problem construction for the benchmark catalog."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..assembly import (
    AssemblyRecipe,
    WaveNumberField,
    assemble,
    assemble_boundary_rhs,
    assemble_rhs,
    eliminate_dirichlet,
    gaussian_source,
)
from ..mesh import BoundaryTag, FeSpace, Mesh, build_p2_space, build_rect_mesh, mesh_resolution_for, refine_uniform


class VelocityError(ValueError):
    pass


# ---------------------------------------------------------------- velocity models


class ConstantVelocity:
    def __init__(self, c):
        if c <= 0:
            raise VelocityError("velocity must be positive")
        self.c = float(c)
        self.c_min = self.c_max = self.c

    def __call__(self, xy):
        return np.full(np.shape(xy)[:-1], self.c)


class LayeredVelocity:
    """Horizontal layers; ``interfaces`` are ascending y-values, ``speeds`` run bottom to top."""

    def __init__(self, interfaces, speeds):
        self.interfaces = np.asarray(interfaces, dtype=float)
        self.speeds = np.asarray(speeds, dtype=float)
        if len(self.speeds) != len(self.interfaces) + 1:
            raise VelocityError("need one more speed than interfaces")
        if np.any(self.speeds <= 0):
            raise VelocityError("velocity must be positive")
        if np.any(np.diff(self.interfaces) <= 0):
            raise VelocityError("layer interfaces must be strictly increasing")
        self.c_min = float(self.speeds.min())
        self.c_max = float(self.speeds.max())

    def __call__(self, xy):
        return self.speeds[np.searchsorted(self.interfaces, xy[..., 1], side="right")]


class MarmousiLike:
    """Synthetic subsurface: dipping layers from 1500 m/s (top) to 5500 m/s plus a slow lens.

    Fully determined by the extents and ``seed``.
    """

    def __init__(self, x_extent, y_extent, seed=0, n_layers=8, c_top=1500.0, c_bottom=5500.0):
        rng = np.random.default_rng(seed)
        (self.x0, self.x1), (self.y0, self.y1) = x_extent, y_extent
        Lx, Ly = self.x1 - self.x0, self.y1 - self.y0
        depth = np.sort(rng.uniform(0.05, 0.95, n_layers - 1)) * Ly
        self.depths = depth
        self.slopes = rng.uniform(-0.15, 0.15, n_layers - 1) * Ly / Lx
        self.speeds = np.linspace(c_top, c_bottom, n_layers)
        self.lens_center = (self.x0 + rng.uniform(0.3, 0.7) * Lx, self.y1 - rng.uniform(0.4, 0.7) * Ly)
        self.lens_radius = 0.12 * min(Lx, Ly)
        self.lens_drop = 0.3
        # the lens lowers the local layer speed by at most lens_drop
        self.c_min = float(self.speeds.min() * (1 - self.lens_drop))
        self.c_max = float(c_bottom)

    def __call__(self, xy):
        x, y = xy[..., 0], xy[..., 1]
        d = self.y1 - y  # depth below the surface
        layer = np.zeros(np.shape(x), dtype=np.int64)
        for j, (dj, sj) in enumerate(zip(self.depths, self.slopes)):
            layer += d > dj + sj * (x - self.x0)
        c = self.speeds[layer]
        r2 = (x - self.lens_center[0]) ** 2 + (y - self.lens_center[1]) ** 2
        return c * (1 - self.lens_drop * np.exp(-r2 / self.lens_radius**2))


@dataclass(frozen=True)
class VelocityRaster:
    """Regular grid of velocities; ``values[j, i]`` sits at ``(x0 + i dx, y0 + j dy)``."""

    nx: int
    ny: int
    dx: float
    dy: float
    x0: float
    y0: float
    values: np.ndarray

    @property
    def c_min(self):
        return float(self.values.min())

    @property
    def c_max(self):
        return float(self.values.max())

    def __call__(self, xy):
        return self.sample(xy)

    def sample(self, xy):
        """Bilinear interpolation, clamped to the raster extent."""
        xy = np.asarray(xy, dtype=float)
        fx = np.clip((xy[..., 0] - self.x0) / self.dx, 0, self.nx - 1)
        fy = np.clip((xy[..., 1] - self.y0) / self.dy, 0, self.ny - 1)
        i0 = np.minimum(np.floor(fx).astype(np.int64), max(self.nx - 2, 0))
        j0 = np.minimum(np.floor(fy).astype(np.int64), max(self.ny - 2, 0))
        i1 = np.minimum(i0 + 1, self.nx - 1)
        j1 = np.minimum(j0 + 1, self.ny - 1)
        tx, ty = fx - i0, fy - j0
        v = self.values
        return (
            (1 - tx) * (1 - ty) * v[j0, i0]
            + tx * (1 - ty) * v[j0, i1]
            + (1 - tx) * ty * v[j1, i0]
            + tx * ty * v[j1, i1]
        )


def load_velocity_raster(path) -> VelocityRaster:
    """Read ``nx ny dx dy x0 y0`` followed by ``nx*ny`` velocities (row-major, y outer)."""
    text = Path(path).read_text().split("\n", 1)
    header = text[0].split()
    if len(header) != 6:
        raise VelocityError(f"malformed raster header in {path}: expected 'nx ny dx dy x0 y0'")
    try:
        nx, ny = int(header[0]), int(header[1])
        dx, dy, x0, y0 = (float(v) for v in header[2:])
        values = np.array((text[1] if len(text) > 1 else "").split(), dtype=float)
    except ValueError as exc:
        raise VelocityError(f"malformed raster file {path}: {exc}") from exc
    if nx < 1 or ny < 1 or dx <= 0 or dy <= 0:
        raise VelocityError("raster dimensions and spacings must be positive")
    if values.size != nx * ny:
        raise VelocityError(f"raster header announces {nx * ny} values, file has {values.size}")
    if np.any(values <= 0):
        raise VelocityError("raster velocities must be positive")
    return VelocityRaster(nx, ny, dx, dy, x0, y0, values.reshape(ny, nx))


def save_velocity_raster(raster: VelocityRaster, path) -> None:
    lines = [f"{raster.nx} {raster.ny} {raster.dx:.17g} {raster.dy:.17g} {raster.x0:.17g} {raster.y0:.17g}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in raster.values]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- problems


@dataclass(frozen=True)
class ProblemSpec:
    """Rectangular Helmholtz problem.

    Give either ``frequency`` (Hz, ``k = 2 pi f / c``) or ``wave_number`` (the maximum
    wave number; ``k = wave_number * c_min / c``).
    """

    x_extent: tuple = (0.0, 1.0)
    y_extent: tuple = (0.0, 1.0)
    velocity: object = field(default_factory=lambda: ConstantVelocity(1.0))
    frequency: float | None = None
    wave_number: float | None = None
    boundary: tuple = ()  # (side, BoundaryTag) pairs; unnamed sides are Robin
    source: tuple | None = (0.5, 0.5)
    source_amplitude: float = 1.0
    incident: tuple | None = None  # plane-wave direction entering through the Robin sides
    n_ppwl: float = 10.0
    refine: int = 2
    label: str = ""

    def __post_init__(self):
        if (self.frequency is None) == (self.wave_number is None):
            raise ValueError("set exactly one of frequency / wave_number")

    @property
    def omega(self):
        if self.frequency is not None:
            return 2 * math.pi * self.frequency
        return self.wave_number * self.velocity.c_min

    @property
    def k_max(self):
        return self.omega / self.velocity.c_min

    def wave_number_field(self) -> WaveNumberField:
        omega = self.omega
        velocity = self.velocity
        return WaveNumberField(lambda xy: omega / velocity(xy), k_max=self.k_max, label=self.label or "k")


@dataclass(eq=False)
class Problem:
    spec: ProblemSpec
    coarse_mesh: Mesh
    mesh: Mesh
    coarse_space: FeSpace
    space: FeSpace
    k: WaveNumberField
    A: object
    f: np.ndarray
    A_full: object
    rhs_full: np.ndarray
    metadata: dict


def cells_for(length, h, s):
    """Smallest coarse cell count whose refined cell diagonal (the longest edge) does not exceed ``h``."""
    return max(1, math.ceil(length * math.sqrt(2) / (h * s) - 1e-9))


def _incident_data(spec: ProblemSpec, k: WaveNumberField):
    """Robin data ``g = i k (1 + d.n) e^{i k d.x}`` of a plane wave on the rectangle's sides."""
    d = np.asarray(spec.incident, dtype=float)
    d = d / np.linalg.norm(d)
    (x0, x1), (y0, y1) = spec.x_extent, spec.y_extent
    normals = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

    def g(pts):
        gap = np.stack([pts[..., 1] - y0, x1 - pts[..., 0], y1 - pts[..., 1], pts[..., 0] - x0])
        n = normals[np.argmin(np.abs(gap), axis=0)]
        kq = k(pts)
        return 1j * kq * (1 + n @ d) * np.exp(1j * kq * (pts @ d))

    return g


def build_problem(spec: ProblemSpec) -> Problem:
    """Mesh at the points-per-wavelength rule, assemble and eliminate Dirichlet dofs.

    The fine mesh is always the ``refine``-times refinement of a coarse mesh so grid
    coarse spaces and coarse-overlap decompositions can be built on the same problem.
    """
    s = int(spec.refine)
    k_max = spec.k_max
    h_target = mesh_resolution_for(k_max, spec.n_ppwl)
    (x0, x1), (y0, y1) = spec.x_extent, spec.y_extent
    nxc = cells_for(x1 - x0, h_target, s)
    nyc = cells_for(y1 - y0, h_target, s)
    coarse_mesh = build_rect_mesh(spec.x_extent, spec.y_extent, nxc, nyc, dict(spec.boundary))
    mesh = refine_uniform(coarse_mesh, s)
    coarse_space = build_p2_space(coarse_mesh)
    space = build_p2_space(mesh)
    k = spec.wave_number_field()

    A_full = assemble(space, AssemblyRecipe(), k)
    if spec.source is not None:
        rhs_full = assemble_rhs(space, gaussian_source(spec.source, spec.source_amplitude, 2 * mesh.h))
    else:
        rhs_full = np.zeros(space.ndof, dtype=complex)
    if spec.incident is not None:
        rhs_full = rhs_full + assemble_boundary_rhs(space, _incident_data(spec, k))
    A, f = eliminate_dirichlet(A_full, rhs_full, np.zeros(space.d), n=space.n)
    metadata = {
        "n": space.n,
        "d": space.d,
        "h": mesh.h,
        "k_max": k_max,
        "nx": nxc * s,
        "ny": nyc * s,
        "resolution_ratio": spec.n_ppwl * mesh.h * k_max / (2 * math.pi),
    }
    return Problem(spec, coarse_mesh, mesh, coarse_space, space, k, A, f, A_full, rhs_full, metadata)


def marmousi_like_spec(frequency, n_ppwl=10, extent=(2000.0, 1000.0), seed=0, **kw) -> ProblemSpec:
    """Synthetic layered subsurface: Dirichlet at the surface, absorbing elsewhere, shallow source."""
    Lx, Ly = extent
    return ProblemSpec(
        x_extent=(0.0, Lx),
        y_extent=(0.0, Ly),
        velocity=MarmousiLike((0.0, Lx), (0.0, Ly), seed=seed),
        frequency=frequency,
        boundary=(("top", BoundaryTag.DIRICHLET),),
        source=(0.5 * Lx, Ly - 0.05 * Ly),
        n_ppwl=n_ppwl,
        label=f"marmousi-like f={frequency:g}",
        **kw,
    )


def waveguide_spec(wave_number, n_ppwl=10, extent=(4.0, 1.0), **kw) -> ProblemSpec:
    """Rectangular cavity analogue: closed (Dirichlet) walls, absorbing far end, source near the opening."""
    Lx, Ly = extent
    return ProblemSpec(
        x_extent=(0.0, Lx),
        y_extent=(0.0, Ly),
        velocity=ConstantVelocity(1.0),
        wave_number=wave_number,
        boundary=(("top", BoundaryTag.DIRICHLET), ("bottom", BoundaryTag.DIRICHLET), ("left", BoundaryTag.DIRICHLET)),
        source=(0.9 * Lx, 0.5 * Ly),
        n_ppwl=n_ppwl,
        label=f"waveguide k={wave_number:g}",
        **kw,
    )
