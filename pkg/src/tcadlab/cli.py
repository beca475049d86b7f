"""Command-line entry point.

Verbs: gen-data, train-process, train-device, eval, bench, convergence,
hybrid, sigma-vt, corners.  Each takes --config <json>, --seed and
--out <dir>; the exit code is 0 only when every acceptance check of the
invoked study passes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import DESK_BOX, Dataset, DatasetConfig, gen_dataset, lhs_specs
from .device import BiasPoint
from .metrics import evaluate_device, evaluate_process
from .process import DeviceSpec
from .studies import (StressConfig, StudyReport, bench_speed, convergence_study,
                      corner_study, hybrid_demo, interchange_study, sigma_vt_study)
from .surrogate import (DeviceModelConfig, ParamBox, ProcessModelConfig,
                        TrainConfig, build_device_model, build_process_model,
                        load_device_model, load_process_model, train_device,
                        train_process)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _spec_from_config(cfg: dict) -> DeviceSpec:
    return DeviceSpec(**cfg.get("spec", {}))


def _box_from_config(cfg: dict) -> dict:
    box = dict(DESK_BOX)
    for k, v in cfg.get("box", {}).items():
        box[k] = tuple(v)
    return box


def _param_box(box: dict) -> ParamBox:
    from .data import box_arrays
    lo, hi = box_arrays(box)
    return ParamBox(lo=lo, hi=hi)


def _train_cfg(cfg: dict, seed: int, defaults: dict | None = None) -> TrainConfig:
    args = dict(defaults or {})
    args.update(cfg.get("train", {}))
    args.setdefault("seed", seed)
    return TrainConfig(**args)


def cmd_gen_data(cfg: dict, seed: int, out: str) -> int:
    dcfg = DatasetConfig(
        n_train=cfg.get("n_train", 200), n_test=cfg.get("n_test", 20),
        seed=seed, mode=cfg.get("mode", "continuum"),
        grid_dims=tuple(cfg.get("grid_dims", (64, 64))),
        box=_box_from_config(cfg), mc_repeats=cfg.get("mc_repeats", 1))
    if cfg.get("biases"):
        dcfg.biases = [tuple(b) for b in cfg["biases"]]
    manifest = gen_dataset(out, dcfg, resume=cfg.get("resume", True),
                           log=lambda msg: print(msg, flush=True))
    n_fail = sum(1 for r in manifest["records"]
                 for e in r["biases"] if not e["converged"])
    print(f"dataset at {out}: {len(manifest['records'])} samples, "
          f"{n_fail} failed bias points (retained with flags)")
    return 0


def cmd_train_process(cfg: dict, seed: int, out: str) -> int:
    ds = Dataset(cfg["dataset"])
    pm_cfg = ProcessModelConfig(grid_dims=tuple(ds.config["grid_dims"]))
    model = build_process_model(pm_cfg, seed=seed)
    box = _param_box({k: tuple(v) for k, v in ds.config["box"].items()})
    tcfg = _train_cfg(cfg, seed, {"epochs": 300})
    trained = train_process(model, box, ds.process_arrays("train"),
                            ds.process_arrays("test"), tcfg)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "process.rtc")
    trained.save(path)
    hist = trained.history
    print(f"checkpoint {path}: final train NLL {hist[-1]['train']:.4f}, "
          f"best val {min(h['val'] for h in hist):.4f}" if hist else "no epochs run")
    return 0


def cmd_train_device(cfg: dict, seed: int, out: str) -> int:
    ds = Dataset(cfg["dataset"])
    dm_cfg = DeviceModelConfig(grid_dims=tuple(ds.config["grid_dims"]))
    model = build_device_model(dm_cfg, seed=seed)
    box = _param_box({k: tuple(v) for k, v in ds.config["box"].items()})
    tcfg = _train_cfg(cfg, seed, {"epochs": 30})
    trained = train_device(model, box, ds.device_arrays("train"),
                           ds.device_arrays("test", lazy=False), tcfg)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "device.rtc")
    trained.save(path)
    hist = trained.history
    if hist:
        print(f"checkpoint {path}: final train loss {hist[-1]['train']:.5f}, "
              f"best val {min(h['val'] for h in hist):.5f}")
    return 0


def cmd_eval(cfg: dict, seed: int, out: str) -> int:
    ds = Dataset(cfg["dataset"])
    ok = True
    os.makedirs(out, exist_ok=True)
    if cfg.get("process_checkpoint"):
        tp = load_process_model(cfg["process_checkpoint"])
        m = evaluate_process(tp, ds)
        m.save(out, "process")
        acc, amin = m.aggregate["accuracy_mean"], m.aggregate["accuracy_min"]
        print(f"process: accuracy {acc:.2f}% (min {amin:.2f}%)")
        ok &= acc >= cfg.get("process_accuracy_min", 95.0)
        ok &= amin >= cfg.get("process_accuracy_sample_min", 90.0)
        if cfg.get("interchange", False):
            rep = interchange_study(tp, ds)
            rep.save(os.path.join(out, "interchange"))
            _print_checks(rep)
            ok &= rep.passed()
    if cfg.get("device_checkpoint"):
        td = load_device_model(cfg["device_checkpoint"])
        m = evaluate_device(td, ds)
        m.save(out, "device")
        acc = m.aggregate["carrier_accuracy_mean"]
        mae = m.aggregate["current_log_mae"]
        print(f"device: carrier accuracy {acc:.2f}%, current log10 MAE {mae:.3f}")
        ok &= acc >= cfg.get("carrier_accuracy_min", 95.0)
        ok &= mae <= cfg.get("current_log_mae_max", 0.15)
    return 0 if ok else 1


def _print_checks(rep: StudyReport):
    for c in rep.checks:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"[{mark}] {rep.name}: {c['label']}  {c['detail']}")


def _finish(rep: StudyReport, out: str) -> int:
    rep.save(out)
    _print_checks(rep)
    return 0 if rep.passed() else 1


def cmd_bench(cfg: dict, seed: int, out: str) -> int:
    tp = load_process_model(cfg["process_checkpoint"])
    td = load_device_model(cfg["device_checkpoint"])
    box = _box_from_config(cfg)
    specs = lhs_specs(cfg.get("n_specs", 5), box, seed + 77)
    rep = bench_speed(tp, td, specs, repetitions=cfg.get("repetitions", 3))
    return _finish(rep, out)


def cmd_convergence(cfg: dict, seed: int, out: str) -> int:
    tp = load_process_model(cfg["process_checkpoint"]) if cfg.get("process_checkpoint") else None
    td = load_device_model(cfg["device_checkpoint"]) if cfg.get("device_checkpoint") else None
    stress = StressConfig(**cfg.get("stress", {}))
    from .studies import stress_specs
    specs = stress_specs(cfg.get("n_specs", 20), _box_from_config(cfg), seed + 13)
    rep = convergence_study(tp, td, specs, stress, seed=seed)
    return _finish(rep, out)


def cmd_hybrid(cfg: dict, seed: int, out: str) -> int:
    ds = Dataset(cfg["dataset"])
    td = load_device_model(cfg["device_checkpoint"])
    bias = BiasPoint(*cfg.get("bias", (1.2, 1.0)))
    rep = hybrid_demo(td, ds, bias, out_dir=out)
    return _finish(rep, out)


def cmd_sigma_vt(cfg: dict, seed: int, out: str) -> int:
    tp = load_process_model(cfg["process_checkpoint"])
    rep = sigma_vt_study(tp, _spec_from_config(cfg), m=cfg.get("m", 100), seed=seed)
    return _finish(rep, out)


def cmd_corners(cfg: dict, seed: int, out: str) -> int:
    tp = load_process_model(cfg["process_checkpoint"])
    rep = corner_study(tp, _spec_from_config(cfg), k_sigma=cfg.get("k", 3.0),
                       v_dd=cfg.get("v_dd", 1.2))
    return _finish(rep, out)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-process": cmd_train_process,
    "train-device": cmd_train_device,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "convergence": cmd_convergence,
    "hybrid": cmd_hybrid,
    "sigma-vt": cmd_sigma_vt,
    "corners": cmd_corners,
}


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tcadlab",
        description="Desk-scale TCAD reference simulators, neural surrogates "
                    "and reproducibility studies.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    cfg = _load_config(args.config)
    rc = COMMANDS[args.verb](cfg, args.seed, args.out)
    return rc


if __name__ == "__main__":
    sys.exit(main())
