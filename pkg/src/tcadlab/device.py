"""Reference 2-D drift-diffusion device simulator.

Finite-volume box discretization on the process simulator's tensor mesh:
nonlinear Poisson over silicon and oxide, electron/hole continuity with
Scharfetter-Gummel edge fluxes on silicon, decoupled Gummel iteration, bias
ramping with step halving, IV sweeps with per-point convergence telemetry,
constant-current threshold-voltage extraction, and a Poisson-only solve on
externally loaded carrier densities (the hybrid mode).

SRH recombination is evaluated explicitly from the current carrier iterate
and the same field enters both continuity equations, which makes the four
terminal currents sum to zero at machine precision for every converged
point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ExtractionFailure, NumericFailure
from .process import DeviceGeometry, UM_TO_CM

Q = 1.602176634e-19        # C
EPS0 = 8.8541878128e-14    # F/cm
KB_J = 1.380649e-23        # J/K


@dataclass(frozen=True)
class PhysicsConfig:
    temperature: float = 300.0     # K
    n_i: float = 1e10              # cm^-3
    eps_si_rel: float = 11.7
    eps_ox_rel: float = 3.9
    mu_n: float = 1400.0           # cm^2/Vs
    mu_p: float = 450.0
    tau_n: float = 1e-7            # s
    tau_p: float = 1e-7
    gate_workfunction: float = -0.55   # V, n+ poly-like; gate is pinned at V_G - offset
    gummel_tol: float = 1e-6       # V, max |dpsi| between Gummel iterations
    max_gummel: int = 200
    max_halvings: int = 8
    newton_tol: float = 1e-9       # V, inner Poisson Newton update norm
    max_newton: int = 60
    newton_clamp: float = 1.0      # V, per-node Newton update limit
    bias_limit: float = 5.0        # V
    carrier_floor: float = 1.0     # cm^-3, clamp for loaded carriers (hybrid)

    @property
    def vt(self) -> float:
        return KB_J * self.temperature / Q


DEFAULT_PHYSICS = PhysicsConfig()


@dataclass(frozen=True)
class BiasPoint:
    v_gate: float
    v_drain: float

    def check(self, limit: float):
        for name, v in (("v_gate", self.v_gate), ("v_drain", self.v_drain)):
            if not np.isfinite(v) or abs(v) > limit:
                raise ValueError(f"{name}={v} exceeds |V| <= {limit}")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_update: float          # V
    ramp_steps: int = 0
    failure_reason: str = ""


@dataclass
class DeviceState:
    psi: np.ndarray      # (ny, nx) over the full mesh, V
    n: np.ndarray        # (ny_si, nx) silicon nodes, cm^-3
    p: np.ndarray
    bias: BiasPoint


@dataclass
class IVCurve:
    points: list
    current: np.ndarray          # drain current, A (per-width current x gate width)
    reports: list

    def converged_mask(self) -> np.ndarray:
        return np.array([r.converged for r in self.reports], dtype=bool)

    def rows(self):
        for pt, i, r in zip(self.points, self.current, self.reports):
            yield (pt.v_gate, pt.v_drain, i, r.converged, r.iterations)


def bernoulli(x):
    """B(x) = x / (exp(x) - 1), series-evaluated near zero, overflow-safe."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0
    big_pos = x > 45.0
    out[big_pos] = x[big_pos] * np.exp(-x[big_pos])
    big_neg = x < -45.0
    out[big_neg] = -x[big_neg]
    mid = ~(small | big_pos | big_neg)
    out[mid] = x[mid] / np.expm1(x[mid])
    return out if out.ndim else float(out)


def _cv_widths(c: np.ndarray) -> np.ndarray:
    w = np.empty_like(c)
    w[1:-1] = 0.5 * (c[2:] - c[:-2])
    w[0] = 0.5 * (c[1] - c[0])
    w[-1] = 0.5 * (c[-1] - c[-2])
    return w


class DeviceProblem:
    """Assembled discretization for one device (geometry + net doping).

    Owns its state exclusively during a solve; distinct instances are
    independent.  All physical quantities are per unit width (cm) until
    terminal currents are scaled by the gate width.
    """

    def __init__(self, geo: DeviceGeometry, net_doping: np.ndarray,
                 phys: PhysicsConfig = DEFAULT_PHYSICS):
        self.geo = geo
        self.phys = phys
        net_doping = np.asarray(net_doping, dtype=np.float64)
        if net_doping.shape != geo.silicon_shape:
            raise ValueError(
                f"doping shape {net_doping.shape} != silicon mesh {geo.silicon_shape}")
        if not np.all(np.isfinite(net_doping)):
            raise ValueError("doping must be finite")
        self.net = net_doping

        self.x_cm = geo.x * UM_TO_CM
        self.y_cm = geo.y * UM_TO_CM
        self.nx, self.ny = geo.x.size, geo.y.size
        self.n_nodes = self.nx * self.ny
        self.iy0 = geo.iy_surface
        self.nysi = self.ny - self.iy0

        self._build_poisson()
        self._build_carrier_edges()
        self._contact_values()

    # -- assembly ----------------------------------------------------------

    def _edge_coeffs(self, cell_w: np.ndarray):
        """Per-edge conductances c = sum(adjacent cell weight * half face) / h.

        cell_w has shape (ny-1, nx-1).  Returns (cx, cy): cx[iy, ix] couples
        (iy, ix)-(iy, ix+1); cy couples (iy, ix)-(iy+1, ix).
        """
        hx = np.diff(self.x_cm)
        hy = np.diff(self.y_cm)
        half_y = 0.5 * hy
        cx = np.zeros((self.ny, self.nx - 1))
        cx[:-1, :] += cell_w * half_y[:, None]
        cx[1:, :] += cell_w * half_y[:, None]
        cx /= hx[None, :]
        half_x = 0.5 * hx
        cy = np.zeros((self.ny - 1, self.nx))
        cy[:, :-1] += cell_w * half_x[None, :]
        cy[:, 1:] += cell_w * half_x[None, :]
        cy /= hy[:, None]
        return cx, cy

    def _build_poisson(self):
        g, ph = self.geo, self.phys
        cell_eps = np.full((self.ny - 1, self.nx - 1), ph.eps_si_rel * EPS0)
        cell_eps[: self.iy0, :] = ph.eps_ox_rel * EPS0
        cx, cy = self._edge_coeffs(cell_eps)

        def nid(iy, ix):
            return iy * self.nx + ix

        iyy, ixx = np.meshgrid(np.arange(self.ny), np.arange(self.nx - 1), indexing="ij")
        ex_i = nid(iyy, ixx).ravel()
        ex_j = nid(iyy, ixx + 1).ravel()
        iyy, ixx = np.meshgrid(np.arange(self.ny - 1), np.arange(self.nx), indexing="ij")
        ey_i = nid(iyy, ixx).ravel()
        ey_j = nid(iyy + 1, ixx).ravel()
        ei = np.concatenate([ex_i, ey_i])
        ej = np.concatenate([ex_j, ey_j])
        cc = np.concatenate([cx.ravel(), cy.ravel()])

        rows = np.concatenate([ei, ej, ei, ej])
        cols = np.concatenate([ej, ei, ei, ej])
        vals = np.concatenate([cc, cc, -cc, -cc])
        self.L = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

        dirichlet = np.zeros(self.n_nodes, dtype=bool)
        for mask in g.contacts.values():
            dirichlet |= mask.ravel()
        self.dir_mask = dirichlet

        a0 = self.L.tolil()
        didx = np.flatnonzero(dirichlet)
        for i in didx:
            a0.rows[i] = [int(i)]
            a0.data[i] = [1.0]
        self.A0 = a0.tocsr()

        # silicon-only control volumes for the charge term
        wx = _cv_widths(self.x_cm)
        y_si_cm = self.y_cm[self.iy0:]
        wy = np.zeros(self.ny)
        wy_si = _cv_widths(y_si_cm)
        wy_si[0] = 0.5 * (y_si_cm[1] - y_si_cm[0])   # interface node: silicon half only
        wy[self.iy0:] = wy_si
        self.cv_full = (wy[:, None] * wx[None, :]).ravel()
        self.cv_si = self.cv_full.reshape(self.ny, self.nx)[self.iy0:, :]

        si_rows = np.zeros((self.ny, self.nx), dtype=bool)
        si_rows[self.iy0:, :] = True
        self.si_mask = si_rows.ravel()
        self.net_full = np.zeros(self.n_nodes)
        self.net_full[self.si_mask] = self.net.ravel()

    def _build_carrier_edges(self):
        cell_si = np.zeros((self.ny - 1, self.nx - 1))
        cell_si[self.iy0:, :] = 1.0
        cx, cy = self._edge_coeffs(cell_si)
        cx = cx[self.iy0:, :]
        cy = cy[self.iy0:, :]
        nys, nx = self.nysi, self.nx

        def sid(iy, ix):
            return iy * nx + ix

        iyy, ixx = np.meshgrid(np.arange(nys), np.arange(nx - 1), indexing="ij")
        ex_i, ex_j = sid(iyy, ixx).ravel(), sid(iyy, ixx + 1).ravel()
        iyy, ixx = np.meshgrid(np.arange(nys - 1), np.arange(nx), indexing="ij")
        ey_i, ey_j = sid(iyy, ixx).ravel(), sid(iyy + 1, ixx).ravel()
        self.sei = np.concatenate([ex_i, ey_i])
        self.sej = np.concatenate([ex_j, ey_j])
        self.sc = np.concatenate([cx.ravel(), cy.ravel()])
        hx = np.diff(self.x_cm)
        hy = np.diff(self.y_cm[self.iy0:])
        self.seh = np.concatenate([
            np.broadcast_to(hx[None, :], (nys, nx - 1)).ravel(),
            np.broadcast_to(hy[:, None], (nys - 1, nx)).ravel()])
        self.sex = np.zeros(self.sei.size, dtype=bool)
        self.sex[: ex_i.size] = True   # True for x-directed edges
        self.n_si = nys * nx

        cdir = np.zeros((self.ny, self.nx), dtype=bool)
        for name in ("source", "drain", "substrate"):
            cdir |= self.geo.contacts[name]
        self.carrier_dir = cdir[self.iy0:, :].ravel()

    def _contact_values(self):
        ph = self.phys
        vt = ph.vt
        psi_bi = vt * np.arcsinh(self.net / (2.0 * ph.n_i))
        n_eq = ph.n_i * np.exp(np.clip(psi_bi / vt, -200, 200))
        p_eq = ph.n_i * np.exp(np.clip(-psi_bi / vt, -200, 200))
        self.psi_bi_si = psi_bi
        self.n_contact = n_eq
        self.p_contact = p_eq

    # -- boundary conditions -----------------------------------------------

    def _bc_psi(self, bias: BiasPoint) -> np.ndarray:
        g, ph = self.geo, self.phys
        bc = np.zeros(self.n_nodes)
        psi_bi_full = np.zeros((self.ny, self.nx))
        psi_bi_full[self.iy0:, :] = self.psi_bi_si
        applied = {"source": 0.0, "drain": bias.v_drain, "substrate": 0.0}
        for name, v in applied.items():
            m = g.contacts[name].ravel()
            bc[m] = v + psi_bi_full.ravel()[m]
        gm = g.contacts["gate"].ravel()
        bc[gm] = bias.v_gate - ph.gate_workfunction
        return bc

    # -- Poisson -----------------------------------------------------------

    def _poisson_newton(self, psi: np.ndarray, phi_n: np.ndarray, phi_p: np.ndarray,
                        bc: np.ndarray, fixed_np: tuple | None = None):
        """Damped Newton on Poisson.  Carriers follow Boltzmann statistics of
        (psi - phi) unless `fixed_np` pins them to loaded densities."""
        ph = self.phys
        vt = ph.vt
        psi = psi.copy()
        psi[self.dir_mask] = bc[self.dir_mask]
        si = self.si_mask
        cv_si = self.cv_full[si]
        it = 0
        for it in range(1, ph.max_newton + 1):
            psi_si = psi[si]
            if fixed_np is None:
                n = ph.n_i * np.exp(np.clip((psi_si - phi_n) / vt, -200.0, 200.0))
                p = ph.n_i * np.exp(np.clip(-(psi_si - phi_p) / vt, -200.0, 200.0))
                dq = Q * cv_si * (n + p) / vt
            else:
                n, p = fixed_np
                dq = np.zeros_like(psi_si)
            r = self.L @ psi
            r[si] += Q * cv_si * (p - n + self.net_full[si])
            r[self.dir_mask] = 0.0
            dvec = np.zeros(self.n_nodes)
            dvec[si] = dq
            dvec[self.dir_mask] = 0.0
            j = (self.A0 - sparse.diags(dvec)).tocsc()
            try:
                delta = splu(j).solve(-r)
            except RuntimeError as exc:
                raise NumericFailure(f"Poisson linear solve failed: {exc}") from exc
            delta = np.clip(delta, -ph.newton_clamp, ph.newton_clamp)
            psi += delta
            if np.max(np.abs(delta)) <= ph.newton_tol:
                return psi, it, True
        return psi, it, False

    # -- continuity ----------------------------------------------------------

    def _srh(self, n: np.ndarray, p: np.ndarray) -> np.ndarray:
        ph = self.phys
        ni = ph.n_i
        return (n * p - ni * ni) / (ph.tau_p * (n + ni) + ph.tau_n * (p + ni))

    def _continuity_matrix(self, psi_si: np.ndarray, mu: float, electron: bool):
        vt = self.phys.vt
        d = (psi_si[self.sej] - psi_si[self.sei]) / vt
        if electron:
            a = mu * vt * self.sc * bernoulli(-d)   # coefficient of n_i in F_ij
            b = mu * vt * self.sc * bernoulli(d)    # coefficient of n_j
        else:
            a = mu * vt * self.sc * bernoulli(d)
            b = mu * vt * self.sc * bernoulli(-d)
        rows = np.concatenate([self.sei, self.sei, self.sej, self.sej])
        cols = np.concatenate([self.sei, self.sej, self.sej, self.sei])
        vals = np.concatenate([a, -b, b, -a])
        keep = ~self.carrier_dir[rows]
        ndir = np.flatnonzero(self.carrier_dir)
        rows = np.concatenate([rows[keep], ndir])
        cols = np.concatenate([cols[keep], ndir])
        vals = np.concatenate([vals[keep], np.ones(ndir.size)])
        return sparse.csr_matrix((vals, (rows, cols)),
                                 shape=(self.n_si, self.n_si))

    def edge_fluxes(self, psi_si: np.ndarray, n: np.ndarray, p: np.ndarray):
        """Scharfetter-Gummel particle fluxes (per cm width) along every
        silicon edge, oriented from node sei to sej.

        Evaluated in Slotboom-ratio form, F = g * (u_i - u_j) with
        u = n exp(-psi/Vt), which vanishes exactly at equilibrium instead of
        leaving the O(eps * flux-scale) cancellation noise of the B-form."""
        ph = self.phys
        vt = ph.vt
        a_i, a_j = psi_si[self.sei] / vt, psi_si[self.sej] / vt
        d = a_j - a_i
        half = 0.5 * np.abs(d)
        half_safe = np.clip(half, 1e-12, 50.0)
        s = np.where(half < 50.0,
                     np.where(half < 1e-6, 1.0 - d * d / 24.0,
                              np.abs(d) / (2.0 * np.sinh(half_safe))),
                     np.abs(d) * np.exp(-np.minimum(half, 700.0)))
        mid = 0.5 * (a_i + a_j)
        u = n.ravel() * np.exp(-np.clip(psi_si / vt, -400, 400)) / ph.n_i
        v = p.ravel() * np.exp(np.clip(psi_si / vt, -400, 400)) / ph.n_i
        gn = ph.mu_n * vt * self.sc * ph.n_i * s * np.exp(np.clip(mid, -400, 400))
        gp = ph.mu_p * vt * self.sc * ph.n_i * s * np.exp(np.clip(-mid, -400, 400))
        fn = gn * (u[self.sei] - u[self.sej])
        fp = gp * (v[self.sei] - v[self.sej])
        return fn, fp

    def _solve_continuity(self, psi: np.ndarray, rec: np.ndarray, electron: bool):
        ph = self.phys
        psi_si = psi[self.si_mask]
        mu = ph.mu_n if electron else ph.mu_p
        mat = self._continuity_matrix(psi_si, mu, electron)
        rhs = -(rec * self.cv_si).ravel()
        bcval = (self.n_contact if electron else self.p_contact).ravel()
        rhs[self.carrier_dir] = bcval[self.carrier_dir]
        try:
            sol = splu(mat.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise NumericFailure(f"continuity solve failed: {exc}") from exc
        return np.maximum(sol, 1e-12).reshape(self.nysi, self.nx)

    # -- top-level solves ----------------------------------------------------

    def equilibrium(self) -> tuple[DeviceState, SolveReport]:
        """Zero-bias state: Newton on nonlinear Poisson with equilibrium
        Boltzmann carriers (quasi-Fermi levels at zero)."""
        ph = self.phys
        vt = ph.vt
        psi = np.zeros(self.n_nodes)
        psi0_si = vt * np.arcsinh(self.net / (2.0 * ph.n_i))
        psi.reshape(self.ny, self.nx)[self.iy0:, :] = psi0_si
        psi.reshape(self.ny, self.nx)[: self.iy0, :] = psi0_si[0, :][None, :]
        bc = self._bc_psi(BiasPoint(0.0, 0.0))
        zero = np.zeros(self.nysi * self.nx)
        psi, iters, ok = self._poisson_newton(psi, zero, zero, bc)
        psi_si = psi[self.si_mask]
        n = ph.n_i * np.exp(np.clip(psi_si / vt, -200, 200)).reshape(self.nysi, self.nx)
        p = ph.n_i * np.exp(np.clip(-psi_si / vt, -200, 200)).reshape(self.nysi, self.nx)
        state = DeviceState(psi=psi.reshape(self.ny, self.nx), n=n, p=p,
                            bias=BiasPoint(0.0, 0.0))
        rep = SolveReport(converged=ok, iterations=iters,
                          final_update=0.0 if ok else np.inf,
                          failure_reason="" if ok else "equilibrium newton cap")
        return state, rep

    def gummel(self, state: DeviceState, bias: BiasPoint,
               max_iter: int | None = None) -> tuple[DeviceState, SolveReport, dict]:
        """One bias point: alternate Poisson (quasi-Fermi form) and the two
        continuity solves until the potential update drops below tolerance."""
        ph = self.phys
        bias.check(ph.bias_limit)
        vt = ph.vt
        cap = ph.max_gummel if max_iter is None else max_iter
        bc = self._bc_psi(bias)
        psi = state.psi.ravel().copy()
        n = state.n.copy()
        p = state.p.copy()
        dv = np.inf
        it = 0
        for it in range(1, cap + 1):
            ln_n = np.log(np.maximum(n, 1e-12) / ph.n_i)
            phi_n = (psi[self.si_mask] - vt * ln_n.ravel())
            phi_p = (psi[self.si_mask] + vt * np.log(np.maximum(p, 1e-12).ravel() / ph.n_i))
            psi_new, _, pok = self._poisson_newton(psi, phi_n, phi_p, bc)
            dv = float(np.max(np.abs(psi_new - psi)))
            if it == 1 and pok and dv <= ph.gummel_tol:
                # already at the fixed point: keep the self-consistent state
                rep = SolveReport(converged=True, iterations=1, final_update=dv)
                return state, rep, self.terminal_currents(state)
            psi = psi_new
            rec = self._srh(n, p)
            n = self._solve_continuity(psi, rec, electron=True)
            p = self._solve_continuity(psi, rec, electron=False)
            if not pok:
                dv = np.inf
                break
            if dv <= ph.gummel_tol:
                break
        conv = dv <= ph.gummel_tol
        new_state = DeviceState(psi=psi.reshape(self.ny, self.nx), n=n, p=p, bias=bias)
        rep = SolveReport(converged=conv, iterations=it, final_update=dv,
                          failure_reason="" if conv else "gummel iteration cap")
        return new_state, rep, self.terminal_currents(new_state)

    def poisson_residual(self, state: DeviceState) -> float:
        """L1 norm of the discrete Poisson residual over non-Dirichlet nodes,
        relative to the integrated fixed charge (discrete Gauss law check)."""
        psi = state.psi.ravel()
        r = self.L @ psi
        si = self.si_mask
        r[si] += Q * self.cv_full[si] * (state.p.ravel() - state.n.ravel() + self.net_full[si])
        r[self.dir_mask] = 0.0
        fixed = Q * np.abs(self.net_full[si] * self.cv_full[si]).sum()
        return float(np.abs(r).sum() / max(fixed, 1e-300))

    def terminal_currents(self, state: DeviceState) -> dict:
        """Conventional current (A) into each terminal; gate carries none."""
        psi_si = state.psi.ravel()[self.si_mask]
        fn, fp = self.edge_fluxes(psi_si, state.n, state.p)
        width_cm = self.geo.spec.gate_width * UM_TO_CM
        out = {"gate": 0.0}
        for name in ("source", "drain", "substrate"):
            m = self.geo.contacts[name][self.iy0:, :].ravel()
            mi, mj = m[self.sei], m[self.sej]
            fn_c = fn[mi].sum() - fn[mj].sum()
            fp_c = fp[mi].sum() - fp[mj].sum()
            out[name] = float(Q * (fp_c - fn_c) * width_cm)
        return out

    def ramp_to(self, state: DeviceState, target: BiasPoint,
                max_iter: int | None = None,
                max_halvings: int | None = None) -> tuple[DeviceState, SolveReport, dict]:
        """Continuation from state.bias to target with recursive step halving."""
        ph = self.phys
        halvings = ph.max_halvings if max_halvings is None else max_halvings
        steps = 0

        def advance(st: DeviceState, tgt: BiasPoint, depth: int):
            nonlocal steps
            steps += 1
            new, rep, cur = self.gummel(st, tgt, max_iter=max_iter)
            if rep.converged or depth >= halvings:
                return new, rep, cur
            mid = BiasPoint(0.5 * (st.bias.v_gate + tgt.v_gate),
                            0.5 * (st.bias.v_drain + tgt.v_drain))
            st_mid, rep_mid, _ = advance(st, mid, depth + 1)
            if not rep_mid.converged:
                return st, rep_mid, None
            return advance(st_mid, tgt, depth + 1)

        final, rep, cur = advance(state, target, 0)
        rep.ramp_steps = steps
        if not rep.converged and not rep.failure_reason:
            rep.failure_reason = "ramp depth exceeded"
        if cur is None:
            cur = self.terminal_currents(final)
        return final, rep, cur

    def hybrid_poisson(self, n_loaded: np.ndarray, p_loaded: np.ndarray,
                       bias: BiasPoint) -> tuple[dict, SolveReport]:
        """Poisson-only solve with carriers pinned to loaded densities, then
        quasi-Fermi potentials from the solution."""
        ph = self.phys
        vt = ph.vt
        n = np.maximum(np.asarray(n_loaded, float), ph.carrier_floor)
        p = np.maximum(np.asarray(p_loaded, float), ph.carrier_floor)
        if n.shape != self.geo.silicon_shape or p.shape != self.geo.silicon_shape:
            raise ValueError("loaded carriers must live on the silicon mesh")
        bc = self._bc_psi(bias)
        psi0 = np.zeros(self.n_nodes)
        psi0.reshape(self.ny, self.nx)[self.iy0:, :] = self.psi_bi_si
        psi, iters, ok = self._poisson_newton(
            psi0, None, None, bc, fixed_np=(n.ravel(), p.ravel()))
        psi_si = psi[self.si_mask].reshape(self.nysi, self.nx)
        phi_n = psi_si - vt * np.log(n / ph.n_i)
        phi_p = psi_si + vt * np.log(p / ph.n_i)
        rep = SolveReport(converged=ok, iterations=iters,
                          final_update=0.0 if ok else np.inf,
                          failure_reason="" if ok else "hybrid newton cap")
        return {"psi": psi.reshape(self.ny, self.nx), "phi_n": phi_n, "phi_p": phi_p,
                "n": n, "p": p}, rep


# ---------------------------------------------------------------------------
# Sweeps and extraction
# ---------------------------------------------------------------------------

def gate_sweep(v_gate_values, v_drain: float) -> list:
    return [BiasPoint(float(vg), float(v_drain)) for vg in v_gate_values]


def drain_sweep(v_drain_values, v_gate: float) -> list:
    return [BiasPoint(float(v_gate), float(vd)) for vd in v_drain_values]


def _check_monotone(points: list):
    if len(points) < 2:
        return
    vg = np.array([p.v_gate for p in points])
    vd = np.array([p.v_drain for p in points])
    for arr, moving in ((vg, np.ptp(vg) > 0), (vd, np.ptp(vd) > 0)):
        if moving and not (np.all(np.diff(arr) > 0) or np.all(np.diff(arr) < 0)):
            raise ValueError("swept bias values must be strictly monotone")


def sweep_iv(problem: DeviceProblem, points: list,
             start_state: DeviceState | None = None,
             max_iter: int | None = None,
             max_halvings: int | None = None,
             stop_above: float | None = None) -> IVCurve:
    """Continuation sweep.  Failed points are recorded (never dropped) and the
    sweep continues from the last good state.  `stop_above` truncates the
    sweep once |I_D| exceeds the given current (used for VT bracketing)."""
    _check_monotone(points)
    if not points:
        return IVCurve(points=[], current=np.zeros(0), reports=[])
    if start_state is None:
        state, eq_rep = problem.equilibrium()
        if not eq_rep.converged:
            raise NumericFailure("equilibrium solve failed; cannot start sweep")
    else:
        state = start_state
    currents, reports, kept = [], [], []
    for pt in points:
        new_state, rep, cur = problem.ramp_to(state, pt, max_iter=max_iter,
                                              max_halvings=max_halvings)
        kept.append(pt)
        reports.append(rep)
        if rep.converged:
            state = new_state
            currents.append(cur["drain"])
        else:
            currents.append(np.nan)
        if (stop_above is not None and rep.converged
                and abs(cur["drain"]) > stop_above):
            break
    return IVCurve(points=kept, current=np.array(currents), reports=reports)


def extract_vt(iv: IVCurve, gate_width: float, gate_length: float,
               i_crit: float = 1e-7) -> float:
    """Constant-current threshold: V_G where I_D crosses i_crit * W / L,
    log-linear interpolation between the bracketing converged points."""
    target = i_crit * gate_width / gate_length
    vg, cur = [], []
    for pt, i, rep in zip(iv.points, iv.current, iv.reports):
        if rep.converged and np.isfinite(i) and i > 0:
            vg.append(pt.v_gate)
            cur.append(i)
    if len(vg) < 2:
        raise ExtractionFailure("need >= 2 converged positive-current points")
    vg = np.array(vg)
    cur = np.array(cur)
    logs = np.log10(cur)
    lt = np.log10(target)
    for k in range(len(vg) - 1):
        lo, hi = logs[k], logs[k + 1]
        if (lo - lt) * (hi - lt) <= 0 and lo != hi:
            return float(vg[k] + (lt - lo) / (hi - lo) * (vg[k + 1] - vg[k]))
    raise ExtractionFailure(
        f"criterion current {target:.3e} A not bracketed by the sweep")
