"""Neural surrogates for the process and device simulators.

Process model: 13 normalized parameters enter a fully connected layer,
reshape to a 4x4 latent, then four stages of [concatenate coordinate
channels -> residual block -> 2x upsample] reach the training grid.  The
coordinate channels carry the *physical* mesh coordinates (devices of
different size produce different values at the same resolution) and pass
through a small adaptive network (3x3 conv + mean-pool) to match each
stage's resolution.  The head emits per-node mean and log-variance for the
donor and acceptor fields in asinh-encoded space; training minimizes the
per-node Gaussian negative log-likelihood, so the variance output learns the
node-level noise of Monte Carlo implantation.

Device model: doping (encoded), coordinates and constant bias maps share a
residual-block/downsampling trunk to an 8x8 diverging point; a carrier head
mirrors the trunk back up to log10 electron/hole maps while a fully
connected head regresses log10 drain current (multi-task).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericFailure
from .grid import (CoordChannels, Field, Grid, build_uniform_grid,
                   coordinate_channels, decode_density, L_REF, N_REF)
from .nn import (Adam, Conv2d, Dense, Downsample2x, GroupNorm, Layer, MeanPool,
                 Param, Sequential, Swish, Upsample2x, gaussian_nll,
                 load_checkpoint, mse_loss, save_checkpoint)
from .process import DeviceSpec, GaussianDopingPrediction, PARAM_NAMES

CURRENT_FLOOR = 1e-14    # A, added before log10 of the current target
CARRIER_FLOOR = 1.0      # cm^-3, floor before log10 of carrier targets


def encode_current(i_amps) -> np.ndarray | float:
    return np.log10(np.abs(i_amps) + CURRENT_FLOOR)


def decode_current(enc) -> np.ndarray | float:
    return 10.0 ** np.asarray(enc, dtype=np.float64) - CURRENT_FLOOR


def encode_carriers(density) -> np.ndarray:
    return np.log10(np.maximum(np.asarray(density, dtype=np.float64), CARRIER_FLOOR))


def decode_carriers(enc) -> np.ndarray:
    return 10.0 ** np.asarray(enc, dtype=np.float64)


class ResidualBlock(Layer):
    """[conv -> GN -> swish -> conv -> GN] + skip (1x1 conv when the channel
    count changes), then swish."""

    def __init__(self, c_in: int, c_out: int, groups: int, rng, name: str):
        self.conv1 = Conv2d(c_in, c_out, 3, rng=rng, name=f"{name}.conv1")
        self.gn1 = GroupNorm(c_out, groups, name=f"{name}.gn1")
        self.sw1 = Swish()
        self.conv2 = Conv2d(c_out, c_out, 3, rng=rng, name=f"{name}.conv2")
        self.gn2 = GroupNorm(c_out, groups, name=f"{name}.gn2")
        self.skip = Conv2d(c_in, c_out, 1, rng=rng, name=f"{name}.skip") if c_in != c_out else None
        self.sw_out = Swish()

    def params(self):
        ps = self.conv1.params() + self.gn1.params() + self.conv2.params() + self.gn2.params()
        if self.skip is not None:
            ps += self.skip.params()
        return ps

    def forward(self, x, train=True):
        h = self.conv1.forward(x, train)
        h = self.gn1.forward(h, train)
        h = self.sw1.forward(h, train)
        h = self.conv2.forward(h, train)
        h = self.gn2.forward(h, train)
        s = self.skip.forward(x, train) if self.skip is not None else x
        return self.sw_out.forward(h + s, train)

    def backward(self, dy):
        d = self.sw_out.backward(dy)
        dh = self.gn2.backward(d)
        dh = self.conv2.backward(dh)
        dh = self.sw1.backward(dh)
        dh = self.gn1.backward(dh)
        dx = self.conv1.backward(dh)
        dx = dx + (self.skip.backward(d) if self.skip is not None else d)
        return dx


# ---------------------------------------------------------------------------
# Process model
# ---------------------------------------------------------------------------

@dataclass
class ProcessModelConfig:
    grid_dims: tuple = (64, 64)
    latent_hw: int = 4
    latent_channels: int = 64
    stage_channels: tuple = (32, 16, 8, 8)
    gn_groups: int = 4
    param_dim: int = 13
    # geometry needed to rebuild the grid from a spec at inference time
    sd_length: float = 0.2
    substrate_depth: float = 0.5

    def __post_init__(self):
        n = len(self.stage_channels)
        if self.latent_hw * 2 ** n != self.grid_dims[0] or \
           self.latent_hw * 2 ** n != self.grid_dims[1]:
            raise ValueError(
                f"{n} upsampling stages map {self.latent_hw} to "
                f"{self.latent_hw * 2 ** n}, not the grid dims {self.grid_dims}")

    def to_dict(self):
        return {"grid_dims": list(self.grid_dims), "latent_hw": self.latent_hw,
                "latent_channels": self.latent_channels,
                "stage_channels": list(self.stage_channels),
                "gn_groups": self.gn_groups, "param_dim": self.param_dim,
                "sd_length": self.sd_length, "substrate_depth": self.substrate_depth}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid_dims"] = tuple(d["grid_dims"])
        d["stage_channels"] = tuple(d["stage_channels"])
        return cls(**d)


class ProcessModel:
    """Parameter vector + coordinate channels -> per-node Gaussian doping."""

    OUT_CHANNELS = 4   # u_donor, log_var_donor, u_acceptor, log_var_acceptor

    def __init__(self, cfg: ProcessModelConfig, seed: int = 0, zero_head: bool = True):
        self.cfg = cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        hw, cz = cfg.latent_hw, cfg.latent_channels
        self.fc = Dense(cfg.param_dim, cz * hw * hw, rng=rng, name="entry.fc")
        self.stages = []
        c_in = cz
        res = hw
        for k, c_out in enumerate(cfg.stage_channels):
            coordnet = Sequential(
                Conv2d(2, 2, 3, rng=rng, name=f"stage{k}.coord.conv"),
                MeanPool(cfg.grid_dims[0] // res))
            rb = ResidualBlock(c_in + 2, c_out, cfg.gn_groups, rng, f"stage{k}.rb")
            self.stages.append({"coordnet": coordnet, "rb": rb, "up": Upsample2x()})
            c_in = c_out
            res *= 2
        self.head = Conv2d(c_in, self.OUT_CHANNELS, 1, rng=rng, name="head.conv",
                           zero_init=zero_head)

    def params(self) -> list[Param]:
        ps = self.fc.params()
        for st in self.stages:
            ps += st["coordnet"].params() + st["rb"].params()
        return ps + self.head.params()

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, inputs, train=True):
        """inputs = (params (B, 13) already normalized, coords (B, 2, H, W))."""
        vec, coords = inputs
        b = vec.shape[0]
        hw, cz = self.cfg.latent_hw, self.cfg.latent_channels
        z = self.fc.forward(vec, train).reshape(b, cz, hw, hw)
        self._concat_channels = []
        for st in self.stages:
            c = st["coordnet"].forward(coords, train)
            x = np.concatenate([z, c], axis=1)
            self._concat_channels.append(z.shape[1])
            x = st["rb"].forward(x, train)
            z = st["up"].forward(x, train)
        return self.head.forward(z, train)

    def backward(self, dy):
        dz = self.head.backward(dy)
        for st, cz in zip(reversed(self.stages), reversed(self._concat_channels)):
            dx = st["up"].backward(dz)
            dcat = st["rb"].backward(dx)
            dz = dcat[:, :cz]
            st["coordnet"].backward(np.ascontiguousarray(dcat[:, cz:]))
        b = dz.shape[0]
        dvec = self.fc.backward(dz.reshape(b, -1))
        return dvec

    def named_tensors(self):
        return [(p.name, p.value) for p in self.params()]

    def load_tensors(self, tensors: dict):
        for p in self.params():
            if p.name not in tensors:
                raise ValueError(f"checkpoint is missing tensor {p.name}")
            if tensors[p.name].shape != p.value.shape:
                raise ValueError(f"tensor {p.name} shape mismatch")
            p.value[...] = tensors[p.name]


def build_process_model(cfg: ProcessModelConfig | None = None, seed: int = 0,
                        zero_head: bool = True) -> ProcessModel:
    return ProcessModel(cfg or ProcessModelConfig(), seed=seed, zero_head=zero_head)


# ---------------------------------------------------------------------------
# Device model
# ---------------------------------------------------------------------------

@dataclass
class DeviceModelConfig:
    grid_dims: tuple = (64, 64)
    trunk_channels: tuple = (12, 24, 48)
    fc_sizes: tuple = (256, 64, 1)
    gn_groups: int = 4
    in_channels: int = 6   # donor, acceptor (encoded), coord x/y, V_G, V_D maps

    def to_dict(self):
        return {"grid_dims": list(self.grid_dims),
                "trunk_channels": list(self.trunk_channels),
                "fc_sizes": list(self.fc_sizes), "gn_groups": self.gn_groups,
                "in_channels": self.in_channels}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid_dims"] = tuple(d["grid_dims"])
        d["trunk_channels"] = tuple(d["trunk_channels"])
        d["fc_sizes"] = tuple(d["fc_sizes"])
        return cls(**d)


class DeviceModel:
    """Shared trunk to the 8x8 diverging point, then a carrier head (log10 n,
    log10 p maps) and a fully connected current head (log10 I_D)."""

    def __init__(self, cfg: DeviceModelConfig, seed: int = 0, zero_head: bool = True):
        self.cfg = cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        g = cfg.gn_groups
        self.trunk = []
        c_in = cfg.in_channels
        for k, c_out in enumerate(cfg.trunk_channels):
            self.trunk.append({"rb": ResidualBlock(c_in, c_out, g, rng, f"trunk{k}.rb"),
                               "down": Downsample2x()})
            c_in = c_out
        res = cfg.grid_dims[0] // 2 ** len(cfg.trunk_channels)
        self.carrier = []
        chs = list(reversed(cfg.trunk_channels[:-1])) + [8]
        for k, c_out in enumerate(chs):
            self.carrier.append({"rb": ResidualBlock(c_in, c_out, g, rng, f"carrier{k}.rb"),
                                 "up": Upsample2x()})
            c_in = c_out
        self.carrier_head = Conv2d(c_in, 2, 1, rng=rng, name="carrier.head",
                                   zero_init=zero_head)
        feat = cfg.trunk_channels[-1] * res * res + 2   # +2: bias pair joins the flatten
        self.fcs = []
        f_in = feat
        for k, f_out in enumerate(cfg.fc_sizes):
            zero = zero_head and (k == len(cfg.fc_sizes) - 1)
            self.fcs.append(Dense(f_in, f_out, rng=rng,
                                  name=f"current.fc{k}", zero_init=zero))
            f_in = f_out
        self.fc_acts = [Swish() for _ in cfg.fc_sizes[:-1]]

    def params(self) -> list[Param]:
        ps = []
        for st in self.trunk:
            ps += st["rb"].params()
        for st in self.carrier:
            ps += st["rb"].params()
        ps += self.carrier_head.params()
        for fc in self.fcs:
            ps += fc.params()
        return ps

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, inputs, train=True):
        """inputs = (maps (B, 6, H, W), bias (B, 2)).  Returns
        (carriers (B, 2, H, W) in log10 space, current (B, 1) in log10 space)."""
        maps, bias = inputs
        z = maps
        for st in self.trunk:
            z = st["rb"].forward(z, train)
            z = st["down"].forward(z, train)
        self._trunk_shape = z.shape
        c = z
        for st in self.carrier:
            c = st["rb"].forward(c, train)
            c = st["up"].forward(c, train)
        carriers = self.carrier_head.forward(c, train)
        b = z.shape[0]
        f = np.concatenate([z.reshape(b, -1), bias], axis=1)
        self._feat_width = f.shape[1]
        for k, fc in enumerate(self.fcs):
            f = fc.forward(f, train)
            if k < len(self.fc_acts):
                f = self.fc_acts[k].forward(f, train)
        return carriers, f

    def backward(self, d_carriers, d_current):
        df = d_current
        for k in range(len(self.fcs) - 1, -1, -1):
            if k < len(self.fc_acts):
                df = self.fc_acts[k].backward(df)
            df = self.fcs[k].backward(df)
        dz_cur = df[:, :-2].reshape(self._trunk_shape)

        dc = self.carrier_head.backward(d_carriers)
        for st in reversed(self.carrier):
            dc = st["up"].backward(dc)
            dc = st["rb"].backward(dc)
        dz = dz_cur + dc
        for st in reversed(self.trunk):
            dz = st["down"].backward(dz)
            dz = st["rb"].backward(dz)
        return dz

    # single-output adapter for the generic gradient checker
    def forward_flat(self, inputs, train=True):
        carriers, cur = self.forward(inputs, train)
        b = carriers.shape[0]
        return np.concatenate([carriers.reshape(b, -1), cur], axis=1)

    def backward_flat(self, dflat):
        b = dflat.shape[0]
        n_car = dflat.shape[1] - 1
        d_car = dflat[:, :n_car].reshape(b, 2, self.cfg.grid_dims[1], self.cfg.grid_dims[0])
        d_cur = dflat[:, n_car:]
        return self.backward(d_car, d_cur)

    def named_tensors(self):
        return [(p.name, p.value) for p in self.params()]

    def load_tensors(self, tensors: dict):
        for p in self.params():
            if p.name not in tensors:
                raise ValueError(f"checkpoint is missing tensor {p.name}")
            p.value[...] = tensors[p.name]


def build_device_model(cfg: DeviceModelConfig | None = None, seed: int = 0,
                       zero_head: bool = True) -> DeviceModel:
    return DeviceModel(cfg or DeviceModelConfig(), seed=seed, zero_head=zero_head)


# ---------------------------------------------------------------------------
# Parameter normalization
# ---------------------------------------------------------------------------

@dataclass
class ParamBox:
    """Affine map of each of the 13 spec parameters to [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def normalize(self, vec: np.ndarray) -> np.ndarray:
        return 2.0 * (vec - self.lo) / (self.hi - self.lo) - 1.0

    def inside(self, vec: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(vec >= self.lo - tol) and np.all(vec <= self.hi + tol))

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "names": list(PARAM_NAMES)}

    @classmethod
    def from_dict(cls, d):
        return cls(lo=np.asarray(d["lo"], float), hi=np.asarray(d["hi"], float))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 16
    epochs: int = 300
    seed: int = 0
    lambda_carrier: float = 1.0
    lambda_current: float = 1.0
    patience: int = 0          # 0 disables early stopping
    shuffle: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.epochs < 0:
            raise ValueError("hyperparameters must be positive")


def _batches(n: int, batch: int, rng, shuffle: bool):
    order = rng.permutation(n) if shuffle else np.arange(n)
    for k in range(0, n, batch):
        yield order[k:k + batch]


@dataclass
class TrainedProcessModel:
    model: ProcessModel
    box: ParamBox
    history: list
    meta: dict = field(default_factory=dict)

    def save(self, path):
        meta = {"box": self.box.to_dict(), "seed": self.model.seed,
                "n_ref": N_REF, "l_ref": L_REF,
                "history": self.history, **self.meta}
        save_checkpoint(path, {"kind": "process", **self.model.cfg.to_dict()},
                        meta, self.model.named_tensors())


def load_process_model(path) -> TrainedProcessModel:
    config, meta, tensors = load_checkpoint(path)
    if config.get("kind") != "process":
        raise ValueError(f"not a process-model checkpoint: {config.get('kind')}")
    cfg = ProcessModelConfig.from_dict({k: v for k, v in config.items() if k != "kind"})
    model = ProcessModel(cfg, seed=int(meta.get("seed", 0)))
    model.load_tensors(tensors)
    box = ParamBox.from_dict(meta["box"])
    return TrainedProcessModel(model=model, box=box,
                               history=meta.get("history", []), meta=meta)


def train_process(model: ProcessModel, box: ParamBox, train_set: dict, val_set: dict,
                  cfg: TrainConfig) -> TrainedProcessModel:
    """Minimize the Gaussian NLL over both species.

    `train_set`/`val_set`: {"params": (N, 13), "coords": (N, 2, H, W),
    "targets": (N, 2, H, W)} with targets in encoded space (donor, acceptor).
    Returns the best-validation weights and the per-epoch loss history.
    """
    params_n = box.normalize(train_set["params"])
    val_n = box.normalize(val_set["params"]) if val_set["params"].size else None
    opt = Adam(model.params(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = []
    best = (np.inf, copy.deepcopy([p.value.copy() for p in model.params()]))
    since_best = 0

    def nll_of(out, tgt):
        u = out[:, (0, 2)]
        lv = out[:, (1, 3)]
        return gaussian_nll(tgt, u, lv)

    for epoch in range(cfg.epochs):
        ep_loss, n_batches = 0.0, 0
        for idx in _batches(len(params_n), cfg.batch, rng, cfg.shuffle):
            out = model.forward((params_n[idx], train_set["coords"][idx]), train=True)
            loss, du, dlv = nll_of(out, train_set["targets"][idx])
            if not np.isfinite(loss):
                raise NumericFailure(f"NaN loss at epoch {epoch}, batch {n_batches}")
            dy = np.zeros_like(out)
            dy[:, (0, 2)] = du
            dy[:, (1, 3)] = dlv
            opt.zero_grad()
            model.backward(dy)
            opt.step()
            ep_loss += loss
            n_batches += 1
        train_loss = ep_loss / max(n_batches, 1)
        if val_n is not None and len(val_n):
            vout = model.forward((val_n, val_set["coords"]), train=False)
            val_loss, _, _ = nll_of(vout, val_set["targets"])
        else:
            val_loss = train_loss
        history.append({"epoch": epoch, "train": train_loss, "val": val_loss})
        if val_loss < best[0]:
            best = (val_loss, [p.value.copy() for p in model.params()])
            since_best = 0
        else:
            since_best += 1
            if cfg.patience and since_best >= cfg.patience:
                break
    if history:
        for p, w in zip(model.params(), best[1]):
            p.value[...] = w
    return TrainedProcessModel(model=model, box=box, history=history)


@dataclass
class TrainedDeviceModel:
    model: DeviceModel
    box: ParamBox      # kept for provenance; inference needs only the grid
    history: list
    meta: dict = field(default_factory=dict)

    def save(self, path):
        meta = {"box": self.box.to_dict(), "seed": self.model.seed,
                "n_ref": N_REF, "l_ref": L_REF,
                "history": self.history, **self.meta}
        save_checkpoint(path, {"kind": "device", **self.model.cfg.to_dict()},
                        meta, self.model.named_tensors())


def load_device_model(path) -> TrainedDeviceModel:
    config, meta, tensors = load_checkpoint(path)
    if config.get("kind") != "device":
        raise ValueError(f"not a device-model checkpoint: {config.get('kind')}")
    cfg = DeviceModelConfig.from_dict({k: v for k, v in config.items() if k != "kind"})
    model = DeviceModel(cfg, seed=int(meta.get("seed", 0)))
    model.load_tensors(tensors)
    box = ParamBox.from_dict(meta["box"])
    return TrainedDeviceModel(model=model, box=box,
                              history=meta.get("history", []), meta=meta)


def train_device(model: DeviceModel, box: ParamBox, train_set: dict, val_set: dict,
                 cfg: TrainConfig) -> TrainedDeviceModel:
    """Joint loss: lambda_carrier * MSE(log10 n, log10 p) +
    lambda_current * MSE(log10 I); both heads train through the shared trunk.

    Sets are {"maps": (N, 6, H, W), "bias": (N, 2),
    "carriers": (N, 2, H, W) log10, "current": (N,) log10}.
    """
    opt = Adam(model.params(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = []
    best = (np.inf, [p.value.copy() for p in model.params()])
    since_best = 0

    def joint_loss(carr, cur, idx_or_none, dataset):
        tgt_c = dataset["carriers"] if idx_or_none is None else dataset["carriers"][idx_or_none]
        tgt_i = dataset["current"] if idx_or_none is None else dataset["current"][idx_or_none]
        lc, dc = mse_loss(carr, tgt_c)
        li, di = mse_loss(cur[:, 0], tgt_i)
        loss = cfg.lambda_carrier * lc + cfg.lambda_current * li
        return loss, cfg.lambda_carrier * dc, (cfg.lambda_current * di)[:, None]

    for epoch in range(cfg.epochs):
        ep_loss, n_batches = 0.0, 0
        for idx in _batches(len(train_set["bias"]), cfg.batch, rng, cfg.shuffle):
            carr, cur = model.forward((train_set["maps"][idx], train_set["bias"][idx]), train=True)
            loss, dcar, dcur = joint_loss(carr, cur, idx, train_set)
            if not np.isfinite(loss):
                raise NumericFailure(f"NaN loss at epoch {epoch}, batch {n_batches}")
            opt.zero_grad()
            model.backward(dcar, dcur)
            opt.step()
            ep_loss += loss
            n_batches += 1
        train_loss = ep_loss / max(n_batches, 1)
        if len(val_set["bias"]):
            vc, vi = model.forward((val_set["maps"], val_set["bias"]), train=False)
            val_loss = joint_loss(vc, vi, None, val_set)[0]
        else:
            val_loss = train_loss
        history.append({"epoch": epoch, "train": train_loss, "val": val_loss})
        if val_loss < best[0]:
            best = (val_loss, [p.value.copy() for p in model.params()])
            since_best = 0
        else:
            since_best += 1
            if cfg.patience and since_best >= cfg.patience:
                break
    if history:
        for p, w in zip(model.params(), best[1]):
            p.value[...] = w
    return TrainedDeviceModel(model=model, box=box, history=history)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def grid_for_spec(spec: DeviceSpec, cfg: ProcessModelConfig) -> Grid:
    width = spec.gate_length + 2.0 * cfg.sd_length
    return build_uniform_grid((width, cfg.substrate_depth), cfg.grid_dims)


def predict_doping(trained: TrainedProcessModel, spec: DeviceSpec) -> GaussianDopingPrediction:
    """Single deterministic forward pass; flags extrapolation outside the
    training box instead of raising."""
    cfg = trained.model.cfg
    grid = grid_for_spec(spec, cfg)
    coords = coordinate_channels(grid).stacked()[None, :, :, :]
    vec = spec.to_vector()
    out = trained.model.forward((trained.box.normalize(vec)[None, :], coords), train=False)[0]
    return GaussianDopingPrediction(
        grid=grid, u_donor=out[0], log_var_donor=out[1],
        u_acceptor=out[2], log_var_acceptor=out[3],
        extrapolated=not trained.box.inside(vec))


def sample_doping(pred: GaussianDopingPrediction, seed: int) -> Field:
    """One net-doping realization: independent per-node Gaussian draws per
    species in encoded space, then decode and subtract."""
    rng = np.random.default_rng(seed)
    sd = np.exp(0.5 * pred.log_var_donor)
    sa = np.exp(0.5 * pred.log_var_acceptor)
    donor = decode_density(pred.u_donor + sd * rng.standard_normal(pred.u_donor.shape))
    acceptor = decode_density(pred.u_acceptor + sa * rng.standard_normal(pred.u_acceptor.shape))
    return Field(grid=pred.grid, channel="net-doping", values=donor - acceptor)


def device_inputs(donor_enc: np.ndarray, acceptor_enc: np.ndarray, grid: Grid,
                  biases: list) -> tuple[np.ndarray, np.ndarray]:
    """Stack the 6 input channels for a batch of bias points on one device."""
    coords = coordinate_channels(grid)
    b = len(biases)
    h, w = grid.shape
    maps = np.empty((b, 6, h, w))
    maps[:, 0] = donor_enc
    maps[:, 1] = acceptor_enc
    maps[:, 2] = coords.x
    maps[:, 3] = coords.y
    bias_arr = np.array([[pt.v_gate, pt.v_drain] for pt in biases])
    maps[:, 4] = bias_arr[:, 0][:, None, None]
    maps[:, 5] = bias_arr[:, 1][:, None, None]
    return maps, bias_arr


def predict_device(trained: TrainedDeviceModel, donor_enc, acceptor_enc, grid: Grid,
                   bias) -> tuple[Field, Field, float]:
    """Carrier fields (cm^-3, strictly positive by construction) and drain
    current (A) for one bias point."""
    maps, bias_arr = device_inputs(donor_enc, acceptor_enc, grid, [bias])
    carr, cur = trained.model.forward((maps, bias_arr), train=False)
    n = Field(grid=grid, channel="electron", values=decode_carriers(carr[0, 0]))
    p = Field(grid=grid, channel="hole", values=decode_carriers(carr[0, 1]))
    return n, p, float(max(decode_current(cur[0, 0]), 0.0))


def predict_iv(trained: TrainedDeviceModel, donor_enc, acceptor_enc, grid: Grid,
               biases: list):
    """One batched forward pass per sweep; every point is produced and marked
    converged by construction."""
    from .device import IVCurve, SolveReport
    if not biases:
        return IVCurve(points=[], current=np.zeros(0), reports=[])
    maps, bias_arr = device_inputs(donor_enc, acceptor_enc, grid, biases)
    _, cur = trained.model.forward((maps, bias_arr), train=False)
    current = np.maximum(decode_current(cur[:, 0]), 0.0)
    reports = [SolveReport(converged=True, iterations=1, final_update=0.0)
               for _ in biases]
    return IVCurve(points=list(biases), current=current, reports=reports)
