"""Spatial discretization of the plant on [0, L].

Builds uniform interior grids with Dirichlet boundary treatment, assembles
the catalog plant operators by finite differences, and provides the weighted
state-space inner product used everywhere else in the package.

State vectors are nodal values of the interior nodes, stacked channel by
channel for multi-channel plants; the inner product is the quadrature
approximation of the L2 inner product on [0, L] summed over channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError

__all__ = [
    "SpatialGrid",
    "Nonlinearity",
    "PlantModel",
    "build_grid",
    "euclidean_grid",
    "make_nonlinearity",
    "eval_nonlinearity",
    "assemble_plant",
    "z_inner",
    "z_norm",
    "mass_matrix",
    "influence_shape",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform interior grid on [0, L] with quadrature weights.

    Nodes exclude the boundary points (Dirichlet treatment); the first and
    last weights absorb the boundary trapezoid cells so the weights sum to L.
    """

    L: float
    N: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def h(self) -> float:
        return self.L / (self.N + 1)


def build_grid(L: float, N: int) -> SpatialGrid:
    """Uniform interior grid x_j = j L/(N+1), j = 1..N, trapezoid weights."""
    if not np.isfinite(L) or L <= 0:
        raise ConfigError(f"domain length must be positive, got {L}")
    if N < 4:
        raise ConfigError(f"need at least 4 interior nodes, got {N}")
    h = L / (N + 1)
    nodes = h * np.arange(1, N + 1, dtype=float)
    weights = np.full(N, h)
    # boundary half-cells: integrand vanishes at the ends, so the endpoint
    # trapezoid contribution is h/2 per side, attached to the nearest node
    weights[0] += 0.5 * h
    weights[-1] += 0.5 * h
    return SpatialGrid(L=float(L), N=int(N), nodes=nodes, weights=weights)


def euclidean_grid(dim: int) -> SpatialGrid:
    """Degenerate grid with unit weights: the inner product is plain dot.

    Used by dense test plants supplied as raw matrices, where no spatial
    structure exists. Weights sum to L = dim by construction.
    """
    if dim < 1:
        raise ConfigError("dimension must be positive")
    return SpatialGrid(L=float(dim), N=int(dim),
                       nodes=np.arange(1, dim + 1, dtype=float),
                       weights=np.ones(dim))


def mass_matrix(grid: SpatialGrid, n_channels: int = 1) -> np.ndarray:
    """Diagonal quadrature (mass) matrix for n stacked channels."""
    w = np.tile(grid.weights, n_channels)
    return np.diag(w)


def z_inner(grid: SpatialGrid, a: np.ndarray, b: np.ndarray) -> float:
    """Quadrature approximation of the state-space inner product.

    Handles stacked multi-channel vectors: the weight pattern repeats per
    channel and channel contributions are summed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size % grid.N != 0:
        raise DimensionError(
            f"vector length {a.size} not a multiple of grid size {grid.N}")
    n = a.size // grid.N
    w = np.tile(grid.weights, n)
    return float(np.dot(a * w, b))


def z_norm(grid: SpatialGrid, a: np.ndarray) -> float:
    return float(np.sqrt(max(z_inner(grid, a, a), 0.0)))


@dataclass(frozen=True)
class Nonlinearity:
    """Named pointwise nonlinearity with a closed-form evaluator."""

    name: str
    scale: float
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, field_values: np.ndarray) -> np.ndarray:
        return self.scale * self.func(field_values)


_NONLINEARITIES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "saturating": lambda w: w / (1.0 + w**2),
    "zero": lambda w: np.zeros_like(w),
}


def make_nonlinearity(name: str, scale: float = 1.0) -> Nonlinearity:
    if name not in _NONLINEARITIES:
        raise ConfigError(
            f"unknown nonlinearity {name!r}; known: {sorted(_NONLINEARITIES)}")
    return Nonlinearity(name=name, scale=float(scale), func=_NONLINEARITIES[name])


def eval_nonlinearity(f_spec: Nonlinearity, w: np.ndarray, N: int | None = None) -> np.ndarray:
    """Pointwise evaluation of f on the state's spatial field.

    For multi-channel states only the first channel feeds the nonlinearity;
    the catalog plants are single-channel.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise DimensionError("non-finite values in state passed to nonlinearity")
    if N is not None and w.size > N:
        w = w[:N]
    return f_spec(w)


@dataclass(frozen=True)
class PlantModel:
    """Discretized plant: state operator, input/output maps, uncertainty spec.

    ``A`` acts on the stacked nodal state, ``B`` maps the scalar input into
    the state space (column vector), and ``C`` is the raw output row (the
    quadrature weights of the output functional are already folded in).
    """

    name: str
    grid: SpatialGrid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    f_spec: Nonlinearity
    alpha_true: np.ndarray
    nu_alpha: float
    rho0: float
    n_channels: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = self.n_channels * self.grid.N
        if self.A.shape != (dim, dim):
            raise DimensionError(f"A has shape {self.A.shape}, expected {(dim, dim)}")
        if self.B.shape != (dim,):
            raise DimensionError(f"B has shape {self.B.shape}, expected {(dim,)}")
        if self.C.shape != (dim,):
            raise DimensionError(f"C has shape {self.C.shape}, expected {(dim,)}")
        if self.alpha_true.shape != (self.n_channels,):
            raise DimensionError(
                f"alpha_true has shape {self.alpha_true.shape}, "
                f"expected {(self.n_channels,)}")
        if not np.all(np.abs(self.alpha_true) < self.nu_alpha):
            raise ConfigError(
                f"|alpha_true| = {np.abs(self.alpha_true).max()} must stay "
                f"below nu_alpha = {self.nu_alpha}")
        if self.rho0 <= 0:
            raise ConfigError("rho0 must be positive")

    @property
    def dim(self) -> int:
        return self.n_channels * self.grid.N

    @property
    def c_norm(self) -> float:
        """Induced norm of the output functional in the weighted inner product."""
        w = np.tile(self.grid.weights, self.n_channels)
        return float(np.sqrt(np.sum(self.C**2 / w)))

    @property
    def b_norm(self) -> float:
        """Weighted norm of the input influence column."""
        return z_norm(self.grid, self.B)

    def output(self, w: np.ndarray) -> float:
        return float(self.C @ w)

    def forcing(self, f_field: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        """Channelwise uncertain forcing: alpha_i * f(w) placed in channel i."""
        return np.kron(np.asarray(alpha, dtype=float), f_field)

    def check_initial_condition(self, w0: np.ndarray) -> None:
        if z_norm(self.grid, w0) >= self.rho0:
            raise ConfigError(
                f"initial condition norm {z_norm(self.grid, w0):.4g} violates "
                f"the bound rho0 = {self.rho0}")


def influence_shape(grid: SpatialGrid, spec) -> np.ndarray:
    """Evaluate a named influence/weight shape on the grid nodes.

    ``spec`` is either a name or a (name, params) mapping. Shapes:
    ``sine`` (fundamental Dirichlet mode), ``uniform``, ``gaussian``
    (center/width as fractions of L), ``normalized_sine`` (unit weighted norm).
    """
    if isinstance(spec, str):
        name, params = spec, {}
    else:
        spec = dict(spec)
        name = spec.pop("name")
        params = spec
    x, L = grid.nodes, grid.L
    if name == "sine":
        shape = np.sin(np.pi * x / L)
    elif name == "normalized_sine":
        shape = np.sin(np.pi * x / L)
        shape /= z_norm(grid, shape)
    elif name == "uniform":
        shape = np.ones_like(x)
    elif name == "gaussian":
        center = params.get("center", 0.5) * L
        width = params.get("width", 0.1) * L
        shape = np.exp(-0.5 * ((x - center) / width) ** 2)
    else:
        raise ConfigError(f"unknown influence shape {name!r}")
    return shape


def _laplacian(grid: SpatialGrid) -> np.ndarray:
    """Second-order central difference Laplacian with Dirichlet BCs."""
    N, h = grid.N, grid.h
    main = np.full(N, -2.0)
    off = np.ones(N - 1)
    return (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h**2


def _upwind_gradient(grid: SpatialGrid, c: float) -> np.ndarray:
    """First-order upwind discretization of c * d/dx with Dirichlet inflow."""
    N, h = grid.N, grid.h
    if c >= 0:
        # wind blows to the right: backward difference
        D = (np.diag(np.ones(N)) - np.diag(np.ones(N - 1), -1)) / h
    else:
        D = (np.diag(-np.ones(N)) + np.diag(np.ones(N - 1), 1)) / h
    return c * D


def assemble_plant(spec: dict, grid: SpatialGrid) -> PlantModel:
    """Assemble a catalog plant on the given grid.

    Catalog entries (``spec['kind']``):

    - ``heat``: diffusion operator with Dirichlet BCs (coercive regime);
      optional ``diffusivity``.
    - ``advection_diffusion``: upwind transport plus small diffusion
      (non-coercive regime); params ``c``, ``nu``.
    - ``matrix``: user-supplied dense A, B, C for tests; bypasses the
      finite-difference assembly but keeps the grid quadrature.

    Common keys: ``b_shape``, ``c_shape`` (influence shapes), ``collocated``
    (C proportional to the B shape), ``nonlinearity`` (name/scale),
    ``alpha_true``, ``nu_alpha``, ``rho0``.
    """
    spec = dict(spec)
    kind = spec.get("kind")
    if kind is None:
        raise ConfigError("plant spec needs a 'kind' entry")

    f_raw = spec.get("nonlinearity", {"name": "sin", "scale": 1.0})
    if isinstance(f_raw, str):
        f_raw = {"name": f_raw}
    f_spec = make_nonlinearity(f_raw["name"], f_raw.get("scale", 1.0))

    alpha_true = np.atleast_1d(np.asarray(spec.get("alpha_true", [0.0]), dtype=float))
    nu_alpha = float(spec.get("nu_alpha", 1.0))
    rho0 = float(spec.get("rho0", 1.0))

    if kind == "matrix":
        A = np.asarray(spec["A"], dtype=float)
        B = np.asarray(spec["B"], dtype=float).reshape(-1)
        C = np.asarray(spec["C"], dtype=float).reshape(-1)
        if A.shape[0] % grid.N != 0:
            raise ConfigError(
                f"matrix plant dimension {A.shape[0]} does not fit grid "
                f"size {grid.N}; use euclidean_grid(dim)")
        return PlantModel(
            name="matrix", grid=grid, A=A, B=B, C=C, f_spec=f_spec,
            alpha_true=alpha_true, nu_alpha=nu_alpha, rho0=rho0,
            n_channels=A.shape[0] // grid.N, params={"kind": kind})

    if kind == "heat":
        kappa = float(spec.get("diffusivity", 1.0))
        A = kappa * _laplacian(grid)
    elif kind == "advection_diffusion":
        c = float(spec.get("c", 1.0))
        nu = float(spec.get("nu", 0.01))
        A = -_upwind_gradient(grid, c) + nu * _laplacian(grid)
    else:
        raise ConfigError(f"unknown plant kind {spec['kind']!r}")

    b_shape = influence_shape(grid, spec.get("b_shape", "sine"))
    if spec.get("collocated", False):
        c_shape = b_shape * float(spec.get("c_scale", 1.0))
    else:
        c_shape = influence_shape(grid, spec.get("c_shape", "normalized_sine"))
    # output functional y = <c_shape, w>_Z realized as a raw row vector
    C = c_shape * grid.weights
    return PlantModel(
        name=kind, grid=grid, A=A, B=b_shape.copy(), C=C, f_spec=f_spec,
        alpha_true=alpha_true, nu_alpha=nu_alpha, rho0=rho0, n_channels=1,
        params={k: v for k, v in spec.items() if k != "kind"} | {"kind": kind})
