"""Dataset generation: Latin-hypercube spec sampling, reference simulator
runs, resampling onto the training grid, and on-disk persistence.

A dataset directory holds a manifest (JSON, hash-covered), RTF1 field files
(asinh-encoded donor/acceptor targets plus per-bias carrier fields) and a
targets CSV with the drain currents and solver telemetry.  Generation is
resumable: each sample writes an atomic sidecar once finished and is skipped
on re-run; every aggregate is recomputed from the sidecars.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import grid as gridmod
from .device import BiasPoint, DeviceProblem, PhysicsConfig, DEFAULT_PHYSICS, sweep_iv
from .grid import Field, Grid, build_uniform_grid, encode_density, interpolate_to_grid
from .process import (DEFAULT_CONFIG, DeviceSpec, PARAM_NAMES, ProcessConfig,
                      run_process)
from .surrogate import encode_carriers

# Desk-scale sampling box for the 13 spec parameters.
DESK_BOX = {
    "gate_length": (0.05, 0.2),
    "oxide_thickness": (1.6, 2.6),
    "gate_width": (0.5, 2.0),
    "well_dose": (5e12, 1.2e13),
    "well_energy": (70.0, 120.0),
    "channel_dose": (5e13, 1.1e14),
    "channel_energy": (4.0, 9.0),
    "halo_dose": (5e11, 3e12),
    "halo_energy": (20.0, 40.0),
    "sd_dose": (6e14, 1.6e15),
    "sd_energy": (6.0, 12.0),
    "anneal_temp": (1150.0, 1300.0),
    "anneal_time": (5.0, 40.0),
}

DEFAULT_BIASES = [(vg, vd) for vd in (0.05, 1.0)
                  for vg in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2)]


def box_arrays(box: dict) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([box[n][0] for n in PARAM_NAMES])
    hi = np.array([box[n][1] for n in PARAM_NAMES])
    return lo, hi


def lhs_specs(n: int, box: dict, seed: int) -> list[DeviceSpec]:
    """Latin-hypercube sample of n specs over the box (deterministic per seed)."""
    lo, hi = box_arrays(box)
    sampler = qmc.LatinHypercube(d=len(PARAM_NAMES), seed=seed)
    unit = sampler.random(n)
    return [DeviceSpec.from_vector(lo + u * (hi - lo)) for u in unit]


def _write_json_atomic(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class DatasetConfig:
    n_train: int = 200
    n_test: int = 20
    seed: int = 1
    mode: str = "continuum"          # "continuum" | "mc"
    grid_dims: tuple = (64, 64)
    biases: list = field(default_factory=lambda: list(DEFAULT_BIASES))
    box: dict = field(default_factory=lambda: dict(DESK_BOX))
    # mc-mode duplication: each spec re-run with `mc_repeats` seeds becomes
    # that many samples (the NLL variance target needs repeated noisy draws)
    mc_repeats: int = 1
    specs_override: list | None = None

    def to_dict(self):
        return {"n_train": self.n_train, "n_test": self.n_test, "seed": self.seed,
                "mode": self.mode, "grid_dims": list(self.grid_dims),
                "biases": [list(b) for b in self.biases],
                "box": {k: list(v) for k, v in self.box.items()},
                "mc_repeats": self.mc_repeats}


def sample_grid(spec: DeviceSpec, dims, proc_cfg: ProcessConfig = DEFAULT_CONFIG) -> Grid:
    width = spec.gate_length + 2.0 * proc_cfg.sd_length
    return build_uniform_grid((width, proc_cfg.substrate_depth), dims)


def _gen_one(idx: int, spec: DeviceSpec, cfg: DatasetConfig, out_dir: str,
             proc_cfg: ProcessConfig, phys: PhysicsConfig, mc_seed: int | None):
    """Run the reference chain for one sample and write its files.

    Returns the sidecar record (paths relative to out_dir).
    """
    dop = run_process(spec, mode=cfg.mode, seed=mc_seed, cfg=proc_cfg)
    g = sample_grid(spec, cfg.grid_dims, proc_cfg)
    rec = {"index": idx, "spec": {n: float(v) for n, v in zip(PARAM_NAMES, spec.to_vector())},
           "mode": cfg.mode, "mc_seed": mc_seed,
           "particle_counts": dop.particle_counts, "files": {}, "biases": []}

    fields_dir = os.path.join(out_dir, "fields")
    os.makedirs(fields_dir, exist_ok=True)
    for species, vals in (("donor", dop.donor), ("acceptor", dop.acceptor)):
        enc = encode_density(vals)
        fld = interpolate_to_grid(dop.geo.doping_mesh(enc), g, channel=species)
        rel = f"fields/s{idx:04d}_{species}.rtf"
        gridmod.write_field(fld, os.path.join(out_dir, rel))
        rec["files"][species] = rel

    prob = DeviceProblem(dop.geo, dop.net(), phys)
    eq_state, eq_rep = prob.equilibrium()
    state = eq_state
    per_vd = {}
    for vg, vd in cfg.biases:
        per_vd.setdefault(vd, []).append(vg)
    for vd, vgs in per_vd.items():
        st = eq_state
        for vg in vgs:
            bias = BiasPoint(vg, vd)
            new_st, rep, cur = prob.ramp_to(st, bias)
            entry = {"v_gate": vg, "v_drain": vd, "converged": bool(rep.converged),
                     "iterations": int(rep.iterations), "ramp_steps": int(rep.ramp_steps),
                     "i_drain": float(cur["drain"]) if rep.converged else None}
            if rep.converged:
                st = new_st
                for channel, dens in (("electron", new_st.n), ("hole", new_st.p)):
                    enc = encode_carriers(dens)
                    mesh = dop.geo.doping_mesh(enc)
                    fld = interpolate_to_grid(mesh, g, channel=channel)
                    fld.values = 10.0 ** fld.values   # store linear cm^-3
                    rel = f"fields/s{idx:04d}_b{len(rec['biases']):02d}_{channel}.rtf"
                    gridmod.write_field(fld, os.path.join(out_dir, rel))
                    entry[channel] = rel
            rec["biases"].append(entry)
    rec["equilibrium_converged"] = bool(eq_rep.converged)
    return rec


def gen_dataset(out_dir: str, cfg: DatasetConfig,
                proc_cfg: ProcessConfig = DEFAULT_CONFIG,
                phys: PhysicsConfig = DEFAULT_PHYSICS,
                resume: bool = True, log=None) -> dict:
    """Generate (or resume) a dataset; returns the manifest dict."""
    if cfg.n_train < 1 or cfg.n_test < 0:
        raise ValueError("need n_train >= 1 and n_test >= 0")
    os.makedirs(out_dir, exist_ok=True)
    side_dir = os.path.join(out_dir, "samples")
    os.makedirs(side_dir, exist_ok=True)

    n_specs = cfg.n_train + cfg.n_test
    if cfg.specs_override is not None:
        if len(cfg.specs_override) != n_specs:
            raise ValueError("specs_override length must equal n_train + n_test")
        base_specs = list(cfg.specs_override)
    else:
        base_specs = lhs_specs(n_specs, cfg.box, cfg.seed)
    jobs = []
    for i, spec in enumerate(base_specs):
        for rep in range(max(cfg.mc_repeats, 1) if cfg.mode == "mc" else 1):
            jobs.append((spec, i, rep))

    records = []
    for idx, (spec, spec_i, rep) in enumerate(jobs):
        side = os.path.join(side_dir, f"s{idx:04d}.json")
        if resume and os.path.exists(side):
            with open(side) as fh:
                records.append(json.load(fh))
            continue
        mc_seed = cfg.seed * 1_000_000 + idx if cfg.mode == "mc" else None
        rec = _gen_one(idx, spec, cfg, out_dir, proc_cfg, phys, mc_seed)
        rec["spec_index"] = spec_i
        rec["split"] = "train" if spec_i < cfg.n_train else "test"
        _write_json_atomic(side, rec)
        records.append(rec)
        if log:
            log(f"sample {idx + 1}/{len(jobs)} done")

    # targets CSV: one row per (sample, bias)
    targets = os.path.join(out_dir, "targets.csv")
    tmp = targets + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("# sample,bias_index,V_G,V_D,I_D,converged,iterations\n")
        for rec in records:
            for bi, entry in enumerate(rec["biases"]):
                i_d = entry["i_drain"]
                fh.write(f"{rec['index']},{bi},{entry['v_gate']!r},{entry['v_drain']!r},"
                         f"{'' if i_d is None else repr(i_d)},"
                         f"{int(entry['converged'])},{entry['iterations']}\n")
    os.replace(tmp, targets)

    file_hashes = {"targets.csv": _sha256(targets)}
    for rec in records:
        for rel in rec["files"].values():
            file_hashes[rel] = _sha256(os.path.join(out_dir, rel))
        for entry in rec["biases"]:
            for ch in ("electron", "hole"):
                if entry.get(ch):
                    file_hashes[entry[ch]] = _sha256(os.path.join(out_dir, entry[ch]))

    manifest = {"format": "tcadlab-dataset-1", "config": cfg.to_dict(),
                "records": records, "files": file_hashes}
    blob = json.dumps(manifest, sort_keys=True).encode()
    manifest["manifest_hash"] = hashlib.sha256(blob).hexdigest()
    _write_json_atomic(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


class Dataset:
    """Loaded dataset with lazy field access and hash verification."""

    def __init__(self, root: str, verify: bool = False):
        self.root = root
        with open(os.path.join(root, "manifest.json")) as fh:
            self.manifest = json.load(fh)
        self.config = self.manifest["config"]
        self.records = self.manifest["records"]
        if verify:
            self.verify()

    def verify(self):
        for rel, digest in self.manifest["files"].items():
            path = os.path.join(self.root, rel)
            if not os.path.exists(path):
                raise FileNotFoundError(f"dataset file missing: {rel}")
            if _sha256(path) != digest:
                raise ValueError(f"dataset file corrupted: {rel}")

    def split(self, name: str) -> list[dict]:
        return [r for r in self.records if r["split"] == name]

    def spec(self, rec: dict) -> DeviceSpec:
        return DeviceSpec(**rec["spec"])

    def field(self, rel: str) -> Field:
        return gridmod.read_field(os.path.join(self.root, rel))

    def grid(self) -> tuple[int, int]:
        return tuple(self.config["grid_dims"])

    # ---- training-set assembly -------------------------------------------

    def process_arrays(self, split: str) -> dict:
        """Arrays for process-model training: params, coords, encoded targets."""
        recs = self.split(split)
        h, w = self.grid()[1], self.grid()[0]
        params = np.zeros((len(recs), len(PARAM_NAMES)))
        coords = np.zeros((len(recs), 2, h, w))
        targets = np.zeros((len(recs), 2, h, w))
        for k, rec in enumerate(recs):
            spec = self.spec(rec)
            params[k] = spec.to_vector()
            donor = self.field(rec["files"]["donor"])
            acceptor = self.field(rec["files"]["acceptor"])
            cc = gridmod.coordinate_channels(donor.grid)
            coords[k] = cc.stacked()
            targets[k, 0] = donor.values
            targets[k, 1] = acceptor.values
        return {"params": params, "coords": coords, "targets": targets,
                "records": recs}

    def device_records(self, split: str, converged_only: bool = True) -> list[dict]:
        out = []
        for rec in self.split(split):
            for bi, entry in enumerate(rec["biases"]):
                if converged_only and not entry["converged"]:
                    continue
                if entry.get("electron") is None:
                    continue
                out.append({"rec": rec, "bias_index": bi, **entry})
        return out

    def device_arrays(self, split: str, lazy: bool = True):
        """Training data for the device model.

        Returns {"maps": indexable (R, 6, H, W), "bias": (R, 2),
        "carriers": (R, 2, H, W) log10, "current": (R,) log10}.
        """
        from .surrogate import device_inputs, encode_current
        recs = self.device_records(split)
        h, w = self.grid()[1], self.grid()[0]
        n = len(recs)
        bias = np.zeros((n, 2))
        carriers = np.zeros((n, 2, h, w))
        current = np.zeros(n)
        doping_cache: dict[int, tuple] = {}
        spec_idx = np.zeros(n, dtype=int)
        for k, r in enumerate(recs):
            rec = r["rec"]
            si = rec["index"]
            if si not in doping_cache:
                donor = self.field(rec["files"]["donor"])
                acceptor = self.field(rec["files"]["acceptor"])
                cc = gridmod.coordinate_channels(donor.grid)
                doping_cache[si] = (donor.values, acceptor.values, cc.x, cc.y)
            spec_idx[k] = si
            bias[k] = (r["v_gate"], r["v_drain"])
            carriers[k, 0] = np.log10(np.maximum(self.field(r["electron"]).values, 1.0))
            carriers[k, 1] = np.log10(np.maximum(self.field(r["hole"]).values, 1.0))
            current[k] = encode_current(r["i_drain"])
        maps = _LazyMaps(doping_cache, spec_idx, bias, (h, w))
        return {"maps": maps if lazy else maps[np.arange(n)],
                "bias": bias, "carriers": carriers, "current": current,
                "records": recs}


class _LazyMaps:
    """Assembles (B, 6, H, W) device-model inputs on demand from the per-spec
    doping/coordinate cache (saves holding every bias copy in memory)."""

    def __init__(self, doping_cache, spec_idx, bias, hw):
        self.cache = doping_cache
        self.spec_idx = spec_idx
        self.bias = bias
        self.hw = hw

    def __len__(self):
        return len(self.spec_idx)

    def __getitem__(self, idx):
        idx = np.atleast_1d(np.asarray(idx))
        h, w = self.hw
        out = np.empty((idx.size, 6, h, w))
        for row, k in enumerate(idx):
            donor, acceptor, cx, cy = self.cache[self.spec_idx[k]]
            out[row, 0] = donor
            out[row, 1] = acceptor
            out[row, 2] = cx
            out[row, 3] = cy
            out[row, 4] = self.bias[k, 0]
            out[row, 5] = self.bias[k, 1]
        return out
