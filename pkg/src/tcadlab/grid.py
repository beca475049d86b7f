"""Uniform structured grids, fields, and mesh interpolation.

All device data (doping, carriers, potential) travels between the reference
simulators and the neural surrogates as `Field` objects: values attached to a
fixed-size uniform `Grid` with physical coordinates in micrometers.  Simulator
output lives on a nonuniform tensor-product mesh and is resampled onto the
grid bilinearly; the grid node count never changes, only the spacing does.

Densities are stored in cm^-3 and compressed for training with an asinh
transform (`encode_density`), which is signed and maps 0 to 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomainError

# Reference scales for the encoded representation.
N_REF = 1e10     # cm^-3, roughly the intrinsic density of silicon at 300 K
L_REF = 1.0      # micrometers; coordinate channels are x/L_REF, y/L_REF

CHANNELS = ("donor", "acceptor", "net-doping", "electron", "hole", "potential")

#: tolerance (micrometers) for clamping query points onto the source hull
HULL_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform 2-D grid: `dims` nodes per axis over a physical bounding box.

    Node k on an axis sits at ``origin + k * spacing`` with
    ``spacing = extent / (dims - 1)``.  The node count is fixed per pipeline
    configuration; the spacing follows the device size.
    """

    dims: tuple[int, int]          # (nx, ny)
    origin: tuple[float, float]    # micrometers
    extent: tuple[float, float]    # micrometers

    def __post_init__(self):
        if len(self.dims) != 2 or len(self.origin) != 2 or len(self.extent) != 2:
            raise ValueError("Grid is 2-D: dims, origin, extent need 2 entries each")
        for d in self.dims:
            if int(d) != d or d < 2:
                raise ValueError(f"grid dims must be integers >= 2 per axis, got {self.dims}")
        for e in self.extent:
            if not np.isfinite(e) or e <= 0.0:
                raise ValueError(f"grid extent must be positive and finite, got {self.extent}")
        object.__setattr__(self, "dims", (int(self.dims[0]), int(self.dims[1])))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.extent[0] / (self.dims[0] - 1), self.extent[1] / (self.dims[1] - 1))

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.dims[0]) * self.spacing[0]

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.dims[1]) * self.spacing[1]

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape of a field on this grid: (ny, nx), x fastest."""
        return (self.dims[1], self.dims[0])

    def node_count(self) -> int:
        return self.dims[0] * self.dims[1]


def build_uniform_grid(extent: tuple[float, float], dims: tuple[int, int],
                       origin: tuple[float, float] = (0.0, 0.0)) -> Grid:
    """Uniform grid over `extent` micrometers with exactly `dims` nodes per axis."""
    return Grid(dims=tuple(dims), origin=tuple(origin), extent=tuple(extent))


@dataclass
class Field:
    """Values attached to grid nodes: one float64 per node, shape (ny, nx)."""

    grid: Grid
    channel: str
    values: np.ndarray

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}; expected one of {CHANNELS}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"value shape {v.shape} does not match grid shape {self.grid.shape}")
        self.values = v

    def copy(self) -> "Field":
        return Field(self.grid, self.channel, self.values.copy())


@dataclass
class NonuniformMesh:
    """Tensor-product mesh with strictly increasing axis coordinates (micrometers)."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray    # shape (ny, nx)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.size < 2 or self.y.size < 2:
            raise ValueError("mesh needs at least 2 nodes per axis")
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.y) <= 0):
            raise ValueError("mesh coordinates must be strictly increasing")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.y.size, self.x.size):
            raise ValueError(f"value shape {v.shape} does not match mesh ({self.y.size}, {self.x.size})")
        self.values = v


@dataclass
class CoordChannels:
    """Physical x/y coordinate maps (divided by L_REF), shape (ry, rx) each."""

    resolution: tuple[int, int]    # (rx, ry)
    x: np.ndarray
    y: np.ndarray

    def stacked(self) -> np.ndarray:
        """(2, ry, rx) array: channel 0 is x, channel 1 is y."""
        return np.stack([self.x, self.y])


def coordinate_channels(grid: Grid, resolution: tuple[int, int] | None = None) -> CoordChannels:
    """Coordinate maps of a uniform grid spanning `grid`'s extent.

    At the grid's native resolution the channels reproduce the node
    coordinates exactly; other resolutions span the same physical box, so two
    devices of different size produce different coordinate values even at
    identical resolution.
    """
    if resolution is None:
        resolution = grid.dims
    rx, ry = int(resolution[0]), int(resolution[1])
    if rx < 2 or ry < 2:
        raise ValueError(f"coordinate resolution must be >= 2 per axis, got {resolution}")
    xs = (grid.origin[0] + np.arange(rx) * (grid.extent[0] / (rx - 1))) / L_REF
    ys = (grid.origin[1] + np.arange(ry) * (grid.extent[1] / (ry - 1))) / L_REF
    cx = np.broadcast_to(xs[None, :], (ry, rx)).copy()
    cy = np.broadcast_to(ys[:, None], (ry, rx)).copy()
    return CoordChannels(resolution=(rx, ry), x=cx, y=cy)


def _axis_weights(src: np.ndarray, query: np.ndarray, axis_name: str):
    """Lower indices and interpolation weights of `query` on axis `src`.

    Queries may exceed the hull by up to HULL_TOL and are clamped; beyond
    that an OutOfDomainError names the offending axis.
    """
    lo, hi = src[0], src[-1]
    if np.any(query < lo - HULL_TOL) or np.any(query > hi + HULL_TOL):
        bad = float(query[np.argmax(np.maximum(lo - query, query - hi))])
        raise OutOfDomainError(
            f"query on axis {axis_name} out of mesh hull: {bad} not in [{lo}, {hi}]")
    q = np.clip(query, lo, hi)
    idx = np.searchsorted(src, q, side="right") - 1
    idx = np.clip(idx, 0, src.size - 2)
    t = (q - src[idx]) / (src[idx + 1] - src[idx])
    return idx, t


def bilinear_sample(mesh: NonuniformMesh, xq: np.ndarray, yq: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of mesh values at tensor-product query axes.

    Returns an array of shape (len(yq), len(xq)).  Exact (bit-for-bit) where
    query nodes coincide with mesh nodes, and reproduces affine functions.
    """
    ix, tx = _axis_weights(mesh.x, np.asarray(xq, dtype=np.float64), "x")
    iy, ty = _axis_weights(mesh.y, np.asarray(yq, dtype=np.float64), "y")
    v = mesh.values
    v00 = v[np.ix_(iy, ix)]
    v01 = v[np.ix_(iy, ix + 1)]
    v10 = v[np.ix_(iy + 1, ix)]
    v11 = v[np.ix_(iy + 1, ix + 1)]
    wx0, wx1 = (1.0 - tx)[None, :], tx[None, :]
    wy0, wy1 = (1.0 - ty)[:, None], ty[:, None]
    return (v00 * wx0 + v01 * wx1) * wy0 + (v10 * wx0 + v11 * wx1) * wy1


def interpolate_to_grid(src: NonuniformMesh, dst: Grid, channel: str = "net-doping") -> Field:
    """Resample a nonuniform tensor mesh onto the fixed uniform grid."""
    vals = bilinear_sample(src, dst.x, dst.y)
    return Field(grid=dst, channel=channel, values=vals)


def resample_to_axes(fld: Field, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample a grid field at the tensor axes (x, y) of a nonuniform mesh."""
    mesh = NonuniformMesh(x=fld.grid.x, y=fld.grid.y, values=fld.values)
    return bilinear_sample(mesh, np.asarray(x, float), np.asarray(y, float))


def encode_density(values: np.ndarray | float, n_ref: float = N_REF) -> np.ndarray | float:
    """Signed dynamic-range compression for densities: asinh(v / n_ref).

    Net doping is signed and spans ~10 decades, so a log transform is
    undefined at sign changes; asinh is odd, smooth, and log-like for
    |v| >> n_ref.
    """
    v = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(v)):
        raise ValueError("encode_density: NaN in input")
    out = np.arcsinh(v / n_ref)
    return out if out.ndim else float(out)


def decode_density(encoded: np.ndarray | float, n_ref: float = N_REF) -> np.ndarray | float:
    """Inverse of `encode_density`: n_ref * sinh(u)."""
    u = np.asarray(encoded, dtype=np.float64)
    if np.any(np.isnan(u)):
        raise ValueError("decode_density: NaN in input")
    out = np.sinh(u) * n_ref
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# RTF1 field file format: text header + little-endian float64, row-major,
# x fastest.  Round trips are bit-exact.
# ---------------------------------------------------------------------------

_RTF1_TAG = "RTF1"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field(fld: Field, path) -> None:
    g = fld.grid
    header = (
        f"{_RTF1_TAG}\n"
        f"dims {g.dims[0]} {g.dims[1]}\n"
        f"origin {_fmt(g.origin[0])} {_fmt(g.origin[1])}\n"
        f"extent {_fmt(g.extent[0])} {_fmt(g.extent[1])}\n"
        f"channel {fld.channel}\n"
        f"count {g.node_count()}\n"
        f"end\n"
    )
    data = np.ascontiguousarray(fld.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    text_end = raw.index(b"end\n") + 4
    lines = raw[:text_end].decode("ascii").splitlines()
    if lines[0] != _RTF1_TAG:
        raise ValueError(f"not an RTF1 file: tag {lines[0]!r}")
    hdr = {}
    for line in lines[1:-1]:
        key, _, rest = line.partition(" ")
        hdr[key] = rest
    dims = tuple(int(t) for t in hdr["dims"].split())
    origin = tuple(float(t) for t in hdr["origin"].split())
    extent = tuple(float(t) for t in hdr["extent"].split())
    channel = hdr["channel"]
    count = int(hdr["count"])
    values = np.frombuffer(raw[text_end:], dtype="<f8", count=count)
    grid = Grid(dims=dims, origin=origin, extent=extent)
    return Field(grid=grid, channel=channel, values=values.reshape(grid.shape).copy())
