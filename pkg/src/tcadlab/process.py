"""Reference process simulator: geometry, ion implantation, anneal.

Builds a 2-D NMOS cross-section from 3 structure parameters, applies four
implant steps (well/channel/halo as acceptor species, source-drain as donor)
plus a constant-diffusivity anneal, from 10 process parameters.  Implants run
in continuum mode (closed-form Gaussian-depth, erf-lateral profiles,
deposited as exact control-volume averages) or Monte Carlo mode (pseudo
particles with cloud-in-cell deposition; the particle count follows from dose
and structure dimensions, so the node-level noise is physical).

Corner construction turns a per-node Gaussian doping prediction into
slow/typical/fast net-doping fields by shifting each species k standard
deviations in linear concentration space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.special import ndtr

from .errors import NumericFailure, OutOfDomainError
from .grid import Field, Grid, NonuniformMesh, decode_density, N_REF

KB_EV = 8.617333262e-5     # Boltzmann constant, eV/K
UM_TO_CM = 1e-4

STEPS = ("well", "channel", "halo", "source_drain")
STEP_SPECIES = {"well": "acceptor", "channel": "acceptor",
                "halo": "acceptor", "source_drain": "donor"}

PARAM_NAMES = (
    "gate_length", "oxide_thickness", "gate_width",
    "well_dose", "well_energy", "channel_dose", "channel_energy",
    "halo_dose", "halo_energy", "sd_dose", "sd_energy",
    "anneal_temp", "anneal_time",
)

_BOUNDS = {
    "gate_length": (0.03, 0.3),        # um
    "oxide_thickness": (0.5, 10.0),    # nm
    "gate_width": (0.05, 10.0),        # um
    "anneal_temp": (800.0, 1300.0),    # K
    "anneal_time": (0.0, 3600.0),      # s, exclusive lower bound
}


@dataclass(frozen=True)
class DeviceSpec:
    """The 13 input parameters defining one sample.

    Units: gate_length/gate_width in um, oxide_thickness in nm, doses in
    cm^-2, energies in keV, anneal_temp in K, anneal_time in s.
    """

    gate_length: float = 0.1
    oxide_thickness: float = 2.0
    gate_width: float = 1.0
    well_dose: float = 8e12
    well_energy: float = 90.0
    channel_dose: float = 8e13
    channel_energy: float = 6.0
    halo_dose: float = 1.2e12
    halo_energy: float = 28.0
    sd_dose: float = 1e15
    sd_energy: float = 8.0
    anneal_temp: float = 1250.0
    anneal_time: float = 20.0

    def __post_init__(self):
        for name in ("gate_length", "oxide_thickness", "gate_width"):
            lo, hi = _BOUNDS[name]
            v = getattr(self, name)
            if not np.isfinite(v) or not (lo <= v <= hi):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        for step in STEPS:
            key = "sd" if step == "source_drain" else step
            dose = getattr(self, f"{key}_dose")
            energy = getattr(self, f"{key}_energy")
            if not np.isfinite(dose) or dose <= 0:
                raise ValueError(f"{key}_dose={dose} must be positive")
            if not np.isfinite(energy) or energy <= 0:
                raise ValueError(f"{key}_energy={energy} must be positive")
        lo, hi = _BOUNDS["anneal_temp"]
        if not (lo <= self.anneal_temp <= hi):
            raise ValueError(f"anneal_temp={self.anneal_temp} outside [{lo}, {hi}]")
        if not (0.0 < self.anneal_time <= _BOUNDS["anneal_time"][1]):
            raise ValueError(f"anneal_time={self.anneal_time} must be in (0, 3600]")

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_vector(cls, vec) -> "DeviceSpec":
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, vec)})

    def step_dose_energy(self, step: str) -> tuple[float, float]:
        key = "sd" if step == "source_drain" else step
        return getattr(self, f"{key}_dose"), getattr(self, f"{key}_energy")


@dataclass(frozen=True)
class ImplantTable:
    """Power-law range model per species: Rp = a * E^b (nm, E in keV);
    straggles are fixed fractions of Rp."""

    acceptor_a: float = 10.0
    acceptor_b: float = 0.8
    donor_a: float = 2.5
    donor_b: float = 0.75
    straggle_frac: float = 0.4
    lateral_frac: float = 0.3
    energy_lo: float = 1.0
    energy_hi: float = 300.0

    def ranges_um(self, species: str, energy_kev: float) -> tuple[float, float, float]:
        """(Rp, dRp, dRlat) in micrometers."""
        if not (self.energy_lo <= energy_kev <= self.energy_hi):
            raise OutOfDomainError(
                f"implant energy {energy_kev} keV outside table domain "
                f"[{self.energy_lo}, {self.energy_hi}]")
        if species == "acceptor":
            rp_nm = self.acceptor_a * energy_kev ** self.acceptor_b
        elif species == "donor":
            rp_nm = self.donor_a * energy_kev ** self.donor_b
        else:
            raise ValueError(f"unknown species {species!r}")
        rp = rp_nm * 1e-3
        return rp, self.straggle_frac * rp, self.lateral_frac * rp


@dataclass(frozen=True)
class ProcessConfig:
    table: ImplantTable = field(default_factory=ImplantTable)
    sd_length: float = 0.2           # um of source/drain region on each side
    substrate_depth: float = 0.5     # um
    surface_dy: float = 0.002        # um, first silicon cell under the oxide
    edge_dx: float = 0.002           # um, lateral cell at gate edges / boundaries
    growth: float = 1.3
    max_dy: float = 0.030            # um, cap on vertical coarsening
    oxide_cells: int = 4
    contact_frac: float = 0.5        # fraction of sd_length covered by S/D contact
    # constant-diffusivity anneal, D = D0 * exp(-Ea / kB T)
    acceptor_d0: float = 0.76        # cm^2/s
    acceptor_ea: float = 3.46        # eV
    donor_d0: float = 12.0
    donor_ea: float = 4.05
    anneal_substeps: int = 60


DEFAULT_CONFIG = ProcessConfig()


# ---------------------------------------------------------------------------
# Mesh generation
# ---------------------------------------------------------------------------

def _two_sided_cells(length: float, h0: float, h1: float, growth: float,
                     hmax: float = np.inf) -> np.ndarray:
    """Cell widths over `length` graded geometrically from both ends.

    The list is scaled (factor <= 1) to fit exactly, preserving ratios, so
    the end cells never exceed h0/h1.
    """
    left, right = [h0], [h1]
    while sum(left) + sum(right) < length:
        if sum(left) <= sum(right):
            left.append(min(left[-1] * growth, hmax))
        else:
            right.append(min(right[-1] * growth, hmax))
    cells = np.array(left + right[::-1])
    return cells * (length / cells.sum())


def _one_sided_cells(length: float, h0: float, growth: float, hmax: float) -> np.ndarray:
    cells = [h0]
    while sum(cells) < length:
        cells.append(min(cells[-1] * growth, hmax))
    cells = np.array(cells)
    return cells * (length / cells.sum())


REGION_SILICON, REGION_OXIDE, REGION_GATE = 0, 1, 2


@dataclass
class DeviceGeometry:
    """Mesh, region map, contact node sets and implant windows for one spec."""

    spec: DeviceSpec
    x: np.ndarray                 # lateral node coords, um
    y: np.ndarray                 # vertical node coords, um (negative = oxide)
    iy_surface: int               # row index of y == 0 (Si/SiO2 interface)
    node_region: np.ndarray       # (ny, nx) region codes
    contacts: dict                # name -> bool mask (ny, nx)
    windows: dict                 # step -> list of (x0, x1) lateral intervals
    gate_span: tuple

    @property
    def y_si(self) -> np.ndarray:
        """Silicon rows (y >= 0), where carriers and doping live."""
        return self.y[self.iy_surface:]

    @property
    def silicon_shape(self) -> tuple[int, int]:
        return (self.y_si.size, self.x.size)

    def cv_widths(self, coords: np.ndarray) -> np.ndarray:
        """Control-volume widths per node along one axis (same units)."""
        w = np.empty_like(coords)
        w[1:-1] = 0.5 * (coords[2:] - coords[:-2])
        w[0] = 0.5 * (coords[1] - coords[0])
        w[-1] = 0.5 * (coords[-1] - coords[-2])
        return w

    def cv_area_si_cm2(self) -> np.ndarray:
        """(ny_si, nx) control-volume areas in cm^2 (per unit width)."""
        wx = self.cv_widths(self.x) * UM_TO_CM
        wy = self.cv_widths(self.y_si) * UM_TO_CM
        return wy[:, None] * wx[None, :]

    def doping_mesh(self, values: np.ndarray) -> NonuniformMesh:
        return NonuniformMesh(x=self.x, y=self.y_si, values=values)

    def bounding_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """((x0, y0), (extent_x, extent_y)) of the silicon region."""
        return ((float(self.x[0]), 0.0),
                (float(self.x[-1] - self.x[0]), float(self.y_si[-1])))


def build_geometry(spec: DeviceSpec, cfg: ProcessConfig = DEFAULT_CONFIG) -> DeviceGeometry:
    """2-D cross-section: substrate under a gate oxide, S/D regions flanking
    the gate.  Mesh is anchored at the gate edges and the surface, 2 nm cells
    there, geometric coarsening elsewhere."""
    lg = spec.gate_length
    tox = spec.oxide_thickness * 1e-3   # nm -> um
    xg0, xg1 = cfg.sd_length, cfg.sd_length + lg
    width = lg + 2.0 * cfg.sd_length

    seg_sd_l = _two_sided_cells(cfg.sd_length, cfg.edge_dx, cfg.edge_dx, cfg.growth)
    seg_gate = _two_sided_cells(lg, cfg.edge_dx, cfg.edge_dx, cfg.growth)
    seg_sd_r = _two_sided_cells(cfg.sd_length, cfg.edge_dx, cfg.edge_dx, cfg.growth)
    x = np.concatenate([[0.0], np.cumsum(np.concatenate([seg_sd_l, seg_gate, seg_sd_r]))])
    x[np.argmin(np.abs(x - xg0))] = xg0
    x[np.argmin(np.abs(x - xg1))] = xg1
    x[-1] = width

    y_ox = np.linspace(-tox, 0.0, cfg.oxide_cells + 1)
    y_si_cells = _one_sided_cells(cfg.substrate_depth, cfg.surface_dy, cfg.growth, cfg.max_dy)
    y_si = np.concatenate([[0.0], np.cumsum(y_si_cells)])
    y_si[-1] = cfg.substrate_depth
    y = np.concatenate([y_ox[:-1], y_si])
    iy_surface = cfg.oxide_cells

    ny, nx = y.size, x.size
    region = np.full((ny, nx), REGION_SILICON, dtype=np.uint8)
    region[:iy_surface, :] = REGION_OXIDE

    in_gate = (x >= xg0 - 1e-12) & (x <= xg1 + 1e-12)
    gate_mask = np.zeros((ny, nx), dtype=bool)
    gate_mask[0, in_gate] = True
    region[gate_mask] = REGION_GATE

    contact_len = cfg.contact_frac * cfg.sd_length
    source = np.zeros((ny, nx), dtype=bool)
    source[iy_surface, x <= contact_len + 1e-12] = True
    drain = np.zeros((ny, nx), dtype=bool)
    drain[iy_surface, x >= width - contact_len - 1e-12] = True
    substrate = np.zeros((ny, nx), dtype=bool)
    substrate[-1, :] = True

    contacts = {"source": source, "drain": drain, "gate": gate_mask, "substrate": substrate}
    for a in contacts:
        if not contacts[a].any():
            raise NumericFailure(f"contact {a} is empty")
        for b in contacts:
            if a < b and np.any(contacts[a] & contacts[b]):
                raise NumericFailure(f"contacts {a} and {b} overlap")

    flank = [(0.0, xg0), (xg1, width)]
    windows = {"well": [(0.0, width)], "channel": [(0.0, width)],
               "halo": list(flank), "source_drain": list(flank)}
    return DeviceGeometry(spec=spec, x=x, y=y, iy_surface=iy_surface,
                          node_region=region, contacts=contacts,
                          windows=windows, gate_span=(xg0, xg1))


# ---------------------------------------------------------------------------
# Implantation
# ---------------------------------------------------------------------------

def _phi_int(z: np.ndarray) -> np.ndarray:
    """First integral of the standard normal CDF: z*Phi(z) + phi(z)."""
    return z * ndtr(z) + np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _cv_edges(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (coords[:-1] + coords[1:])
    lo = np.concatenate([[coords[0]], mid])
    hi = np.concatenate([mid, [coords[-1]]])
    return lo, hi


def _mirrored_windows(windows, width: float):
    out = []
    for a, b in windows:
        out.append((a, b))
        out.append((-b, -a))                    # mirror at x = 0
        out.append((2 * width - b, 2 * width - a))  # mirror at x = width
    return out


def implant_continuum(geo: DeviceGeometry, step: str, dose: float, energy: float,
                      cfg: ProcessConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Continuum implant increment (cm^-3) on the silicon submesh.

    Depth: Gaussian(Rp, dRp) renormalized over [0, substrate_depth] so the
    per-column depth integral equals the dose inside the window.  Lateral:
    window indicator convolved with Gaussian(0, dRlat), mirrored at the
    domain edges.  Node values are exact control-volume averages, so the
    control-volume sum equals dose x window length to rounding error.
    """
    if step not in STEPS:
        raise ValueError(f"unknown implant step {step!r}")
    rp, drp, dlat = cfg.table.ranges_um(STEP_SPECIES[step], energy)
    y = geo.y_si
    ylo, yhi = _cv_edges(y)
    depth_cov = ndtr((y[-1] - rp) / drp) - ndtr((0.0 - rp) / drp)
    depth_frac = (ndtr((yhi - rp) / drp) - ndtr((ylo - rp) / drp)) / depth_cov
    wy = (yhi - ylo)

    xlo, xhi = _cv_edges(geo.x)
    width = float(geo.x[-1])
    lat_int = np.zeros_like(geo.x)
    for a, b in _mirrored_windows(geo.windows[step], width):
        lat_int += (_phi_int((xhi - a) / dlat) - _phi_int((xlo - a) / dlat)
                    - _phi_int((xhi - b) / dlat) + _phi_int((xlo - b) / dlat)) * dlat
    wx = (xhi - xlo)

    # dose [cm^-2] x depth fraction / cell height [cm] x lateral coverage
    col = dose * depth_frac / (wy * UM_TO_CM)
    lat = lat_int / wx
    return col[:, None] * lat[None, :]


def mc_particle_count(step: str, geo: DeviceGeometry, dose: float) -> int:
    """Total MC particle count: dose x window length x gate width (cm units)."""
    if dose <= 0:
        raise ValueError("dose must be positive")
    total = 0
    for a, b in geo.windows[step]:
        total += int(round(dose * (b - a) * UM_TO_CM * geo.spec.gate_width * UM_TO_CM))
    return total


def implant_mc(geo: DeviceGeometry, step: str, dose: float, energy: float,
               seed, cfg: ProcessConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Monte Carlo implant increment (cm^-3) on the silicon submesh.

    Particles: depth ~ Gaussian(Rp, dRp) rejection-truncated to the
    substrate, lateral ~ Uniform(window) + Gaussian(0, dRlat) reflected at
    the domain edges; each deposits dose x window / count via cloud-in-cell
    weights divided by the node control volume.
    """
    rp, drp, dlat = cfg.table.ranges_um(STEP_SPECIES[step], energy)
    width = float(geo.x[-1])
    depth = float(geo.y_si[-1])
    out = np.zeros(geo.silicon_shape)
    wx = geo.cv_widths(geo.x) * UM_TO_CM
    wy = geo.cv_widths(geo.y_si) * UM_TO_CM
    cv = wy[:, None] * wx[None, :]

    for widx, (a, b) in enumerate(geo.windows[step]):
        n = int(round(dose * (b - a) * UM_TO_CM * geo.spec.gate_width * UM_TO_CM))
        if n < 1:
            continue
        rng = np.random.default_rng([int(seed), STEPS.index(step), widx])
        weight = dose * (b - a) * UM_TO_CM / n   # per unit width, cm^-1

        yd = rng.normal(rp, drp, size=n)
        bad = (yd < 0.0) | (yd > depth)
        while np.any(bad):
            yd[bad] = rng.normal(rp, drp, size=int(bad.sum()))
            bad = (yd < 0.0) | (yd > depth)
        xd = rng.uniform(a, b, size=n) + rng.normal(0.0, dlat, size=n)
        for _ in range(64):
            oob = (xd < 0.0) | (xd > width)
            if not np.any(oob):
                break
            xd = np.where(xd < 0.0, -xd, xd)
            xd = np.where(xd > width, 2 * width - xd, xd)

        ix = np.clip(np.searchsorted(geo.x, xd, side="right") - 1, 0, geo.x.size - 2)
        iy = np.clip(np.searchsorted(geo.y_si, yd, side="right") - 1, 0, geo.y_si.size - 2)
        tx = (xd - geo.x[ix]) / (geo.x[ix + 1] - geo.x[ix])
        ty = (yd - geo.y_si[iy]) / (geo.y_si[iy + 1] - geo.y_si[iy])
        for dy_, dx_ in ((0, 0), (0, 1), (1, 0), (1, 1)):
            w = (ty if dy_ else 1.0 - ty) * (tx if dx_ else 1.0 - tx)
            np.add.at(out, (iy + dy_, ix + dx_), weight * w)
    out /= cv
    return out


# ---------------------------------------------------------------------------
# Anneal
# ---------------------------------------------------------------------------

def _fv_laplacian(x_cm: np.ndarray, y_cm: np.ndarray) -> sparse.csr_matrix:
    """Symmetric zero-flux finite-volume Laplacian weighted by face widths
    (units: cm^2 / cm^2 per cell -> dimensionless x 1/cm^2 after dividing by
    control volume; here we return the edge-conductance operator in cm^0:
    row i holds sum_j c_ij (u_j - u_i) with c = face / distance)."""
    nx, ny = x_cm.size, y_cm.size
    wx = np.empty(nx)
    wx[1:-1] = 0.5 * (x_cm[2:] - x_cm[:-2])
    wx[0] = 0.5 * (x_cm[1] - x_cm[0])
    wx[-1] = 0.5 * (x_cm[-1] - x_cm[-2])
    wy = np.empty(ny)
    wy[1:-1] = 0.5 * (y_cm[2:] - y_cm[:-2])
    wy[0] = 0.5 * (y_cm[1] - y_cm[0])
    wy[-1] = 0.5 * (y_cm[-1] - y_cm[-2])

    def idx(iy, ix):
        return iy * nx + ix

    rows, cols, vals = [], [], []
    hx = np.diff(x_cm)
    for iy in range(ny):
        c = wy[iy] / hx
        for ix in range(nx - 1):
            i, j = idx(iy, ix), idx(iy, ix + 1)
            rows += [i, j, i, j]
            cols += [j, i, i, j]
            vals += [c[ix], c[ix], -c[ix], -c[ix]]
    hy = np.diff(y_cm)
    for iy in range(ny - 1):
        c = wx / hy[iy]
        for ix in range(nx):
            i, j = idx(iy, ix), idx(iy + 1, ix)
            rows += [i, j, i, j]
            cols += [j, i, i, j]
            vals += [c[ix], c[ix], -c[ix], -c[ix]]
    n = nx * ny
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diffusivity(species: str, temp_k: float, cfg: ProcessConfig = DEFAULT_CONFIG) -> float:
    """Arrhenius diffusivity in cm^2/s."""
    if species == "acceptor":
        d0, ea = cfg.acceptor_d0, cfg.acceptor_ea
    elif species == "donor":
        d0, ea = cfg.donor_d0, cfg.donor_ea
    else:
        raise ValueError(f"unknown species {species!r}")
    return d0 * np.exp(-ea / (KB_EV * temp_k))


def anneal(geo: DeviceGeometry, fields: dict, temp_k: float, time_s: float,
           cfg: ProcessConfig = DEFAULT_CONFIG) -> dict:
    """Backward-Euler solution of dC/dt = D * div grad C per species on the
    silicon submesh, zero-flux boundaries (the oxide blocks diffusion)."""
    if temp_k <= 0 or time_s <= 0:
        raise ValueError("anneal needs positive temperature and time")
    x_cm = geo.x * UM_TO_CM
    y_cm = geo.y_si * UM_TO_CM
    lap = _fv_laplacian(x_cm, y_cm)
    cv = geo.cv_area_si_cm2().ravel()
    m = sparse.diags(cv)
    out = {}
    steps = cfg.anneal_substeps
    dt = time_s / steps
    for species, values in fields.items():
        d = diffusivity(species, temp_k, cfg)
        try:
            lu = splu((m - dt * d * lap).tocsc())
            c = values.ravel().copy()
            for _ in range(steps):
                c = lu.solve(cv * c)
        except RuntimeError as exc:
            raise NumericFailure(
                f"anneal linear solve failed for {species} "
                f"(T={temp_k} K, t={time_s} s, dt={dt} s): {exc}") from exc
        out[species] = c.reshape(values.shape)
    return out


# ---------------------------------------------------------------------------
# Full process run
# ---------------------------------------------------------------------------

@dataclass
class DopingResult:
    """Donor and acceptor concentrations (cm^-3) on the simulation mesh."""

    geo: DeviceGeometry
    donor: np.ndarray
    acceptor: np.ndarray
    mode: str                 # "continuum" | "mc"
    seed: int | None = None
    particle_counts: dict = field(default_factory=dict)

    def net(self) -> np.ndarray:
        return self.donor - self.acceptor

    def net_mesh(self) -> NonuniformMesh:
        return self.geo.doping_mesh(self.net())


def run_process(spec: DeviceSpec, mode: str = "continuum", seed: int | None = None,
                cfg: ProcessConfig = DEFAULT_CONFIG) -> DopingResult:
    """Geometry, four implants, anneal.  Deterministic in continuum mode and
    per (spec, seed) in mc mode."""
    if mode not in ("continuum", "mc"):
        raise ValueError(f"mode must be 'continuum' or 'mc', got {mode!r}")
    if mode == "mc" and seed is None:
        raise ValueError("mc mode requires a seed")
    geo = build_geometry(spec, cfg)
    donor = np.zeros(geo.silicon_shape)
    acceptor = np.zeros(geo.silicon_shape)
    counts = {}
    for step in STEPS:
        dose, energy = spec.step_dose_energy(step)
        if mode == "continuum":
            inc = implant_continuum(geo, step, dose, energy, cfg)
        else:
            counts[step] = mc_particle_count(step, geo, dose)
            inc = implant_mc(geo, step, dose, energy, seed, cfg)
        if STEP_SPECIES[step] == "donor":
            donor += inc
        else:
            acceptor += inc
    annealed = anneal(geo, {"donor": donor, "acceptor": acceptor},
                      spec.anneal_temp, spec.anneal_time, cfg)
    return DopingResult(geo=geo, donor=annealed["donor"], acceptor=annealed["acceptor"],
                        mode=mode, seed=seed, particle_counts=counts)


# ---------------------------------------------------------------------------
# Process corners from a Gaussian doping prediction
# ---------------------------------------------------------------------------

@dataclass
class GaussianDopingPrediction:
    """Per-node mean and log-variance per species, in encoded (asinh) space."""

    grid: Grid
    u_donor: np.ndarray
    log_var_donor: np.ndarray
    u_acceptor: np.ndarray
    log_var_acceptor: np.ndarray
    extrapolated: bool = False

    def mean_cm3(self, species: str) -> np.ndarray:
        u = self.u_donor if species == "donor" else self.u_acceptor
        return decode_density(u)

    def sigma_cm3(self, species: str) -> np.ndarray:
        """Linear-space standard deviation via the delta method."""
        if species == "donor":
            u, lv = self.u_donor, self.log_var_donor
        else:
            u, lv = self.u_acceptor, self.log_var_acceptor
        return np.exp(0.5 * lv) * N_REF * np.cosh(u)


def corner_profiles(pred: GaussianDopingPrediction, k: float = 3.0) -> dict:
    """Slow/typical/fast net-doping fields from per-species k-sigma shifts.

    typical = u_donor - u_acceptor; slow shifts donor down and acceptor up by
    k sigma each; fast the reverse.  All arithmetic in linear cm^-3 space.
    """
    if k < 0:
        raise ValueError("corner multiplier k must be >= 0")
    for name, lv in (("donor", pred.log_var_donor), ("acceptor", pred.log_var_acceptor)):
        if np.any(np.isnan(lv)):
            raise ValueError(f"{name} variance must be finite and non-negative")
    ud = pred.mean_cm3("donor")
    ua = pred.mean_cm3("acceptor")
    sd = pred.sigma_cm3("donor")
    sa = pred.sigma_cm3("acceptor")
    fields = {
        "typical": ud - ua,
        "slow": (ud - k * sd) - (ua + k * sa),
        "fast": (ud + k * sd) - (ua - k * sa),
    }
    return {name: Field(grid=pred.grid, channel="net-doping", values=v)
            for name, v in fields.items()}
