"""Evaluation metrics and test-split scoring for both surrogate models.

Accuracy is defined as (1 - NMAE) * 100 where NMAE is the mean absolute
error normalized by the target's value range, computed per sample in the
model's working space (asinh-encoded doping for the process model, log10
carriers / log10 current for the device model).  Evaluations also emit 1-D
cutline extracts: a horizontal cut just below the gate oxide and a vertical
cut at the drain center.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .data import Dataset
from .device import BiasPoint
from .process import DeviceSpec
from .surrogate import (TrainedDeviceModel, TrainedProcessModel, device_inputs,
                        encode_current, predict_doping)


def nmae(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute error over nodes, normalized by the target range and
    clamped to [0, 1]."""
    rng = float(target.max() - target.min())
    if rng <= 0:
        rng = 1.0
    return float(min(np.mean(np.abs(pred - target)) / rng, 1.0))


def accuracy_pct(pred: np.ndarray, target: np.ndarray) -> float:
    return (1.0 - nmae(pred, target)) * 100.0


@dataclass
class Metrics:
    per_sample: list
    aggregate: dict
    cutlines: dict = field(default_factory=dict)

    def save(self, out_dir: str, name: str):
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{name}_per_sample.csv")
        with open(csv_path, "w") as fh:
            if self.per_sample:
                cols = list(self.per_sample[0].keys())
                fh.write("# " + ",".join(cols) + "\n")
                for row in self.per_sample:
                    fh.write(",".join(repr(row[c]) if isinstance(row[c], float)
                                      else str(row[c]) for c in cols) + "\n")
        with open(os.path.join(out_dir, f"{name}_aggregate.json"), "w") as fh:
            json.dump(self.aggregate, fh, sort_keys=True, indent=1)
            fh.write("\n")
        for cname, rows in self.cutlines.items():
            path = os.path.join(out_dir, f"{name}_cutline_{cname}.csv")
            with open(path, "w") as fh:
                fh.write("# position_um,reference,prediction\n")
                for r in rows:
                    fh.write(",".join(repr(float(v)) for v in r) + "\n")


def _cut_rows(grid, ref2d, pred2d, surface_row: int, drain_col: int):
    """Horizontal cut below the gate and vertical cut at the drain center."""
    horiz = [(x, ref2d[surface_row, i], pred2d[surface_row, i])
             for i, x in enumerate(grid.x)]
    vert = [(y, ref2d[j, drain_col], pred2d[j, drain_col])
            for j, y in enumerate(grid.y)]
    return horiz, vert


def evaluate_process(trained: TrainedProcessModel, dataset: Dataset,
                     split: str = "test") -> Metrics:
    """Accuracy of predicted doping means against the held-out encoded
    targets, per species and combined."""
    recs = dataset.split(split)
    if not recs:
        raise ValueError(f"dataset split {split!r} is empty")
    per_sample = []
    cutlines = {}
    for rec in recs:
        spec = dataset.spec(rec)
        pred = predict_doping(trained, spec)
        donor = dataset.field(rec["files"]["donor"])
        acceptor = dataset.field(rec["files"]["acceptor"])
        acc_d = accuracy_pct(pred.u_donor, donor.values)
        acc_a = accuracy_pct(pred.u_acceptor, acceptor.values)
        per_sample.append({"index": rec["index"], "split": split,
                           "accuracy_donor": acc_d, "accuracy_acceptor": acc_a,
                           "accuracy": 0.5 * (acc_d + acc_a)})
        if not cutlines:
            g = donor.grid
            drain_col = int(np.argmin(np.abs(g.x - (g.x[-1] - 0.1))))
            surface_row = 1
            h, v = _cut_rows(g, donor.values, pred.u_donor, surface_row, drain_col)
            cutlines["donor_horizontal"] = h
            cutlines["donor_vertical"] = v
            h, v = _cut_rows(g, acceptor.values, pred.u_acceptor, surface_row, drain_col)
            cutlines["acceptor_horizontal"] = h
            cutlines["acceptor_vertical"] = v
    accs = np.array([r["accuracy"] for r in per_sample])
    aggregate = {"split": split, "n": len(per_sample),
                 "accuracy_mean": float(accs.mean()),
                 "accuracy_min": float(accs.min()),
                 "nmae_mean": float(1.0 - accs.mean() / 100.0)}
    return Metrics(per_sample=per_sample, aggregate=aggregate, cutlines=cutlines)


def evaluate_device(trained: TrainedDeviceModel, dataset: Dataset,
                    split: str = "test") -> Metrics:
    """Carrier-field accuracy in log10 space and current log10 MAE on the
    held-out split (one forward pass per device, batched over biases)."""
    recs = dataset.split(split)
    if not recs:
        raise ValueError(f"dataset split {split!r} is empty")
    per_sample = []
    cutlines = {}
    cur_errors = []
    for rec in recs:
        entries = [e for e in rec["biases"] if e["converged"] and e.get("electron")]
        if not entries:
            continue
        donor = dataset.field(rec["files"]["donor"])
        acceptor = dataset.field(rec["files"]["acceptor"])
        g = donor.grid
        biases = [BiasPoint(e["v_gate"], e["v_drain"]) for e in entries]
        maps, bias_arr = device_inputs(donor.values, acceptor.values, g, biases)
        carr, cur = trained.model.forward((maps, bias_arr), train=False)
        accs, cerrs = [], []
        for k, e in enumerate(entries):
            tgt_n = np.log10(np.maximum(dataset.field(e["electron"]).values, 1.0))
            tgt_p = np.log10(np.maximum(dataset.field(e["hole"]).values, 1.0))
            accs.append(0.5 * (accuracy_pct(carr[k, 0], tgt_n)
                               + accuracy_pct(carr[k, 1], tgt_p)))
            cerrs.append(abs(float(cur[k, 0]) - encode_current(e["i_drain"])))
            if not cutlines and e["v_drain"] > 0.5 and e["v_gate"] >= 1.0:
                drain_col = int(np.argmin(np.abs(g.x - (g.x[-1] - 0.1))))
                h, v = _cut_rows(g, tgt_n, carr[k, 0], 1, drain_col)
                cutlines["electron_horizontal"] = h
                h2, _ = _cut_rows(g, tgt_p, carr[k, 1], 1, drain_col)
                cutlines["hole_horizontal"] = h2
        cur_errors.extend(cerrs)
        per_sample.append({"index": rec["index"], "split": split,
                           "carrier_accuracy": float(np.mean(accs)),
                           "current_log_mae": float(np.mean(cerrs)),
                           "n_biases": len(entries)})
    accs = np.array([r["carrier_accuracy"] for r in per_sample])
    aggregate = {"split": split, "n": len(per_sample),
                 "carrier_accuracy_mean": float(accs.mean()),
                 "carrier_accuracy_min": float(accs.min()),
                 "current_log_mae": float(np.mean(cur_errors))}
    return Metrics(per_sample=per_sample, aggregate=aggregate, cutlines=cutlines)
