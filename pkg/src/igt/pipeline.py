"""Experimental procedures: splitting, training, evaluation, screening,
pose ranking, the dense attention-score analysis, and end-to-end gradcheck."""

from __future__ import annotations

import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import SplitError, TrainingError, UndefinedMetricError
from .featurize import LIGAND, FeatureConfig
from .metrics import auroc, metric_row, pose_label, rmsd
from .model import (
    ComplexInputs, ModelConfig, forward, init_params, load_model, params_from_arrays,
    params_to_arrays, prepare_inputs, probability, save_model,
)
from .structio import ExampleRecord, read_pdb, read_structure, write_jsonl

# ------------------------------------------------------------------ data


class ExampleLoader:
    """Parses structures once per path and builds model inputs per record."""

    def __init__(self, feat_cfg: FeatureConfig):
        self.feat_cfg = feat_cfg
        self._receptors: dict = {}
        self._ligands: dict = {}

    def receptor(self, path):
        key = str(path)
        if key not in self._receptors:
            self._receptors[key] = read_pdb(path)
        return self._receptors[key]

    def ligand(self, path, pose_index: int = 0):
        key = str(path)
        if key not in self._ligands:
            self._ligands[key] = read_structure(path)
        poses = self._ligands[key]
        if pose_index >= len(poses):
            raise IndexError(f"{path} has {len(poses)} poses, record asks for {pose_index}")
        return poses[pose_index]

    def inputs(self, rec: ExampleRecord) -> ComplexInputs:
        return prepare_inputs(self.receptor(rec.receptor_path),
                              self.ligand(rec.ligand_path, rec.pose_index), self.feat_cfg)


# ----------------------------------------------------------------- split


@dataclass
class SplitSpec:
    ratios: tuple = (0.70, 0.15, 0.15)
    seed: int = 0
    unit: str = "target_id"

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or abs(sum(self.ratios) - 1.0) > 1e-9:
            raise SplitError(f"split ratios must be three non-negative numbers summing to 1, got {self.ratios}")
        if self.unit not in ("target_id", "id"):
            raise SplitError("split unit must be 'target_id' or 'id'")


def partition_sizes(n_units: int, ratios) -> tuple:
    """floor for train, floor for validation, remainder for test."""
    n_train = int(math.floor(round(ratios[0] * n_units, 9)))
    n_val = int(math.floor(round(ratios[1] * n_units, 9)))
    return n_train, n_val, n_units - n_train - n_val


def split(records: Sequence[ExampleRecord], spec: SplitSpec):
    """Shuffle units (targets or complexes) with the seed and cut by cumulative ratio.

    Records keep their file order inside each partition.
    """
    units = sorted({getattr(r, spec.unit) for r in records})
    if len(units) < 3:
        raise SplitError(f"need at least 3 distinct {spec.unit} values to split, got {len(units)}")
    perm = np.random.default_rng(spec.seed).permutation(len(units))
    shuffled = [units[k] for k in perm]
    n_train, n_val, _ = partition_sizes(len(units), spec.ratios)
    part = {}
    for k, u in enumerate(shuffled):
        part[u] = 0 if k < n_train else (1 if k < n_train + n_val else 2)
    out = ([], [], [])
    for r in records:
        out[part[getattr(r, spec.unit)]].append(r)
    return out


# ----------------------------------------------------------- prediction

_WORKER: dict = {}


def _init_worker(arrays, feat_dict):
    params, cfg = params_from_arrays(arrays)
    feat_dict = dict(feat_dict)
    feat_dict["exclude_resnames"] = tuple(feat_dict["exclude_resnames"])
    _WORKER.update(params=params, cfg=cfg, loader=ExampleLoader(FeatureConfig(**feat_dict)))


def _worker_predict(rec: ExampleRecord) -> float:
    logit, _ = forward(_WORKER["loader"].inputs(rec), _WORKER["params"], _WORKER["cfg"])
    return probability(logit)


def predict_records(records: Sequence[ExampleRecord], params, cfg: ModelConfig,
                    feat_cfg: FeatureConfig, workers: int = 1,
                    loader: Optional[ExampleLoader] = None) -> List[float]:
    """Probabilities in record order; ``workers > 1`` fans out over processes."""
    if workers > 1 and len(records) > 1:
        arrays = params_to_arrays(params, cfg)
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(arrays, feat_cfg.to_dict())) as pool:
            return list(pool.map(_worker_predict, records, chunksize=max(1, len(records) // (4 * workers))))
    loader = loader or ExampleLoader(feat_cfg)
    out = []
    for rec in records:
        logit, _ = forward(loader.inputs(rec), params, cfg)
        out.append(probability(logit))
    return out


# ---------------------------------------------------------------- train


@dataclass
class TrainConfig:
    lr: float = 1e-5
    batch: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    max_steps: int = 0
    pos_weighting: bool = False

    def __post_init__(self):
        if not self.lr >= 0:
            raise TrainingError("lr must be >= 0")
        if self.batch < 1:
            raise TrainingError("batch must be >= 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise TrainingError("max_epochs and patience must be >= 1")


@dataclass
class TrainResult:
    params: dict
    model_cfg: ModelConfig
    adam: ad.AdamState
    log: list
    timing: list
    best_epoch: int
    steps: int


def _macro_auroc(records, probs) -> Optional[float]:
    by_target: Dict[str, list] = {}
    for r, p in zip(records, probs):
        by_target.setdefault(r.target_id, []).append((p, r.label))
    vals = []
    for rows in by_target.values():
        try:
            vals.append(auroc([p for p, _ in rows], [y for _, y in rows]))
        except UndefinedMetricError:
            continue
    if vals:
        return float(np.mean(vals))
    try:
        return auroc(probs, [r.label for r in records])
    except UndefinedMetricError:
        return None


def _bce(probs_logits, labels) -> float:
    z = np.asarray(probs_logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def train(records: Sequence[ExampleRecord], model_cfg: ModelConfig, train_cfg: TrainConfig,
          feat_cfg: FeatureConfig, val_records: Optional[Sequence[ExampleRecord]] = None,
          out_dir=None, loader: Optional[ExampleLoader] = None) -> TrainResult:
    """Mini-batch training by gradient accumulation with early stopping on validation AUROC.

    The retained checkpoint maximizes macro validation AUROC, ties broken by
    lower validation loss. Validation defaults to the training records.
    """
    records = list(records)
    if any(r.label is None for r in records):
        raise TrainingError("every training record needs a label")
    labels = np.array([r.label for r in records], dtype=np.float64)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        warnings.warn("training set has a single class; BCE training is undefined")
        raise TrainingError("undefined loss: training set contains a single class")
    val_records = list(val_records) if val_records else records
    if any(r.label is None for r in val_records):
        raise TrainingError("every validation record needs a label")

    loader = loader or ExampleLoader(feat_cfg)
    inputs = [loader.inputs(r) for r in records]
    val_inputs = [loader.inputs(r) for r in val_records]
    val_labels = [r.label for r in val_records]
    pos_weight = (len(labels) - n_pos) / n_pos if train_cfg.pos_weighting else 1.0

    rng = np.random.default_rng(train_cfg.seed)
    params = init_params(model_cfg, train_cfg.seed)
    names = list(params)
    adam = ad.AdamState(lr=train_cfg.lr)
    log, timing = [], []
    best = None
    best_key = None
    stale = 0
    steps = 0
    t_start = time.perf_counter()

    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(records))
        losses = []
        for start in range(0, len(order), train_cfg.batch):
            chunk = order[start:start + train_cfg.batch]
            acc = {n: np.zeros_like(params[n].data) for n in names}
            for i in chunk:
                with ad.Tape() as tape:
                    logit, _ = forward(inputs[i], params, model_cfg, sign_mode="random",
                                       rng=rng, training=True)
                    loss = ad.bce_with_logits(logit, [[labels[i]]], pos_weight)
                grads = tape.backward(loss)
                for n in names:
                    g = grads.get(params[n])
                    if g is not None:
                        acc[n] += g
                losses.append(float(loss.data))
            ad.adam_step(params, {n: acc[n] / len(chunk) for n in names}, adam)
            steps += 1
            if train_cfg.max_steps and steps >= train_cfg.max_steps:
                break

        logits = [float(forward(x, params, model_cfg)[0].data.reshape(-1)[0]) for x in val_inputs]
        probs = [1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z)) for z in logits]
        val_auc = _macro_auroc(val_records, probs)
        val_loss = _bce(logits, val_labels)
        log.append({"epoch": epoch, "steps": steps, "train_loss": float(np.mean(losses)),
                    "val_auroc": val_auc, "val_loss": val_loss})
        timing.append({"epoch": epoch, "wall_time": time.perf_counter() - t0,
                       "elapsed": time.perf_counter() - t_start})

        key = (-math.inf if val_auc is None else val_auc, -val_loss)
        if best_key is None or key > best_key:
            best_key = key
            best = ({n: params[n].data.copy() for n in names}, _copy_adam(adam), epoch)
            stale = 0
        else:
            stale += 1
        if stale >= train_cfg.patience:
            break
        if train_cfg.max_steps and steps >= train_cfg.max_steps:
            break

    best_params = {n: ad.Tensor(best[0][n], True, n) for n in names}
    result = TrainResult(best_params, model_cfg, best[1], log, timing, best[2], steps)
    if out_dir is not None:
        write_training_outputs(out_dir, result)
    return result


def _copy_adam(st: ad.AdamState) -> ad.AdamState:
    return ad.AdamState(st.lr, st.beta1, st.beta2, st.eps, st.step,
                        {k: v.copy() for k, v in st.m.items()},
                        {k: v.copy() for k, v in st.v.items()})


def write_training_outputs(out_dir, result: TrainResult, name: str = "model.igtc") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / name
    save_model(ckpt, result.params, result.model_cfg)
    ad.save_adam_state(ckpt.with_suffix(".opt"), result.adam)
    write_jsonl(out / "train_log.jsonl", result.log)
    write_jsonl(out / "timing.jsonl", result.timing)
    return ckpt


# ------------------------------------------------------------- evaluate


@dataclass
class EvalReport:
    predictions: list
    per_target: list
    macro: dict
    pooled: dict
    settings: dict

    def rows(self) -> list:
        return self.per_target + [self.macro, self.pooled]

    def table(self) -> str:
        cols = ["target", "n", "n_actives", "auroc", "logauc", "auprc", "bal_acc", "roc_enrich", "ef"]
        lines = ["  ".join(f"{c:>10}" for c in cols)]
        for row in self.rows():
            cells = []
            for c in cols:
                v = row.get(c)
                if v is None:
                    cells.append(f"{'-':>10}")
                elif isinstance(v, float):
                    cells.append(f"{v:10.4f}")
                else:
                    cells.append(f"{str(v):>10}")
            lines.append("  ".join(cells))
        lines.append(f"roc_enrich at FPR={self.settings['roc_fpr']}, "
                     f"EF at top fraction={self.settings['ef_fraction']}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(out / "predictions.jsonl", self.predictions)
        write_jsonl(out / "report.jsonl", self.rows())
        (out / "report.txt").write_text(self.table())


def evaluate(records: Sequence[ExampleRecord], params, cfg: ModelConfig, feat_cfg: FeatureConfig,
             roc_fpr: float = 0.01, ef_fraction: float = 0.01, workers: int = 1,
             probs: Optional[List[float]] = None) -> EvalReport:
    """Predict every labelled record and report metrics per target, macro-averaged and pooled.

    Raises :class:`UndefinedMetricError` when no target and not the pooled set
    supports a ranking metric (e.g. a single-class manifest).
    """
    records = list(records)
    if any(r.label is None for r in records):
        raise UndefinedMetricError("undefined metric: evaluation records need labels")
    if probs is None:
        probs = predict_records(records, params, cfg, feat_cfg, workers)
    preds = [{"id": r.id, "target_id": r.target_id, "label": r.label, "probability": p}
             for r, p in zip(records, probs)]
    by_target: Dict[str, list] = {}
    for r, p in zip(records, probs):
        by_target.setdefault(r.target_id, []).append((p, r.label))
    per_target = []
    for t in sorted(by_target):
        rows = by_target[t]
        row = {"target": t}
        row.update(metric_row([p for p, _ in rows], [y for _, y in rows], roc_fpr, ef_fraction))
        per_target.append(row)
    pooled = {"target": "POOLED"}
    pooled.update(metric_row(probs, [r.label for r in records], roc_fpr, ef_fraction))
    macro = {"target": "MACRO", "n": len(records), "n_actives": int(sum(r.label for r in records))}
    for m in ("auroc", "logauc", "auprc", "bal_acc", "roc_enrich", "ef"):
        vals = [row[m] for row in per_target if row.get(m) is not None]
        macro[m] = float(np.mean(vals)) if vals else None
        if not vals:
            macro.setdefault("error", f"undefined metric: no target supports {m}")
    if macro["auroc"] is None and pooled["auroc"] is None:
        raise UndefinedMetricError(
            "undefined metric: AUROC needs both classes in at least one target"
        )
    return EvalReport(preds, per_target, macro, pooled, {"roc_fpr": roc_fpr, "ef_fraction": ef_fraction})


# ---------------------------------------------------------------- screen


def screen(receptor_path, library: Sequence[ExampleRecord], params, cfg: ModelConfig,
           feat_cfg: FeatureConfig, top_k: Optional[int] = None, workers: int = 1) -> list:
    """Rank library ligands against one receptor; descending probability, ties by id."""
    recs = [ExampleRecord(r.id, r.target_id, str(receptor_path), r.ligand_path, r.pose_index,
                          r.label, r.rmsd) for r in library]
    probs = predict_records(recs, params, cfg, feat_cfg, workers)
    order = sorted(range(len(recs)), key=lambda k: (-probs[k], recs[k].id))
    ranked = [{"id": recs[k].id, "probability": probs[k], "rank": i + 1} for i, k in enumerate(order)]
    return ranked[:top_k] if top_k else ranked


# ----------------------------------------------------------- rank poses


@dataclass
class PoseRanking:
    poses: list
    hit_rate: Optional[list] = None


def hit_rate_curve(rmsds_by_rank: Sequence[float], threshold: float = 2.0) -> list:
    """Fraction of the top-K poses under ``threshold`` Å, for K = 1..n."""
    hits = np.cumsum(np.asarray(rmsds_by_rank) < threshold)
    return [float(h / k) for k, h in enumerate(hits, start=1)]


def rank_poses(receptor_path, poses_path, params, cfg: ModelConfig, feat_cfg: FeatureConfig,
               reference_path=None) -> PoseRanking:
    """Score every pose of a multi-pose file; with a reference, add RMSD and the top-K curve."""
    receptor = read_pdb(receptor_path)
    poses = read_structure(poses_path)
    probs = []
    for pose in poses:
        logit, _ = forward(prepare_inputs(receptor, pose, feat_cfg), params, cfg)
        probs.append(probability(logit))
    order = sorted(range(len(poses)), key=lambda k: (-probs[k], k))
    rows = [{"pose_index": k, "probability": probs[k], "rank": i + 1} for i, k in enumerate(order)]
    curve = None
    if reference_path is not None:
        ref = read_structure(reference_path)[0].heavy().coords
        for row in rows:
            value = rmsd(poses[row["pose_index"]].heavy().coords, ref)
            row["rmsd"] = value
            row["label"] = pose_label(value)
        curve = hit_rate_curve([row["rmsd"] for row in rows])
    return PoseRanking(rows, curve)


# ------------------------------------------------------ attention scores


def dense_attention(H: np.ndarray) -> np.ndarray:
    """Row-softmax of H H^T over all node pairs."""
    S = H @ H.T
    S = S - S.max(axis=1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=1, keepdims=True)


def mean_intermolecular_attention(H: np.ndarray, molecule_of: np.ndarray) -> float:
    """Mean of the dense-attention entries whose endpoints lie in different molecules."""
    mol = np.asarray(molecule_of)
    if len(np.unique(mol)) < 2:
        raise UndefinedMetricError("undefined score: graph holds a single molecule")
    A = dense_attention(np.asarray(H, dtype=np.float64))
    vals = A[mol[:, None] != mol[None, :]]
    # shifted mean: equal entries give back that entry exactly
    return float(vals[0] + (vals - vals[0]).mean())


@dataclass
class AttentionReport:
    example_scores: dict
    target_scores: dict
    per_example: bool
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def distribution(self) -> list:
        src = self.example_scores if self.per_example else self.target_scores
        return [src[k] for k in sorted(src)]

    def histogram_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            lines.append(f"{lo:.6f},{hi:.6f},{int(c)}")
        return "\n".join(lines) + "\n"


def attention_score_analysis(records: Sequence[ExampleRecord], params, cfg: ModelConfig,
                             feat_cfg: FeatureConfig, per_example: bool = False,
                             bins: int = 50, loader: Optional[ExampleLoader] = None) -> AttentionReport:
    """Score each example from its final complex embeddings, aggregate per target, histogram."""
    loader = loader or ExampleLoader(feat_cfg)
    scores, by_target = {}, {}
    for rec in records:
        inputs = loader.inputs(rec)
        _, state = forward(inputs, params, cfg)
        s = mean_intermolecular_attention(state["complex"].data, inputs.molecule_of)
        scores[rec.id] = s
        by_target.setdefault(rec.target_id, []).append(s)
    target_scores = {t: float(np.mean(v)) for t, v in by_target.items()}
    values = list(scores.values()) if per_example else list(target_scores.values())
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return AttentionReport(scores, target_scores, per_example, edges, counts)


def comparison_csv(a: AttentionReport, b: AttentionReport) -> str:
    lines = ["bin_lo,bin_hi,count_a,count_b"]
    for lo, hi, ca, cb in zip(a.bin_edges[:-1], a.bin_edges[1:], a.counts, b.counts):
        lines.append(f"{lo:.6f},{hi:.6f},{int(ca)},{int(cb)}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- gradcheck


@dataclass
class GradcheckResult:
    per_group: dict
    max_rel_error: float
    n_checked: int
    n_straddled: int
    seconds: float

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_rel_error < tol


def _straddle_free_difference(f, arr, index, h):
    """Central difference, or None when a relu changes state between x-h and x+h."""
    old = arr[index]
    arr[index] = old + h
    with ad.KinkRecorder() as up:
        fp = f()
    arr[index] = old - h
    with ad.KinkRecorder() as down:
        fm = f()
    arr[index] = old
    for a, b in zip(up.masks, down.masks):
        if not np.array_equal(a, b):
            return None
    return (fp - fm) / (2.0 * h)


def gradcheck(inputs: ComplexInputs, model_cfg: ModelConfig, seed: int = 0, label: float = 1.0,
              per_group: int = 2, h: float = 1e-5, params=None, max_tries: int = 25) -> GradcheckResult:
    """Compare tape gradients of the BCE loss with central differences, every parameter group.

    In each group the ``per_group`` entries of largest analytic magnitude are
    checked, so that finite-difference round-off does not swamp the ratio.
    Entries whose +-h step flips a relu are skipped: the loss is not
    differentiable across that interval and the difference quotient averages
    two slopes.
    """
    t0 = time.perf_counter()
    cfg = ModelConfig(**{**asdict(model_cfg), "dropout": 0.0})
    params = params or init_params(cfg, seed)
    with ad.Tape() as tape:
        logit, _ = forward(inputs, params, cfg)
        loss = ad.bce_with_logits(logit, [[label]])
    grads = tape.backward(loss)

    def f():
        return float(ad.bce_with_logits(forward(inputs, params, cfg)[0], [[label]]).data.reshape(-1)[0])

    per = {}
    n = skipped = 0
    for name, p in params.items():
        g = grads.get(p, np.zeros_like(p.data))
        order = np.argsort(-np.abs(g).reshape(-1), kind="stable")
        worst, done = 0.0, 0
        for k in order[:max_tries]:
            idx = np.unravel_index(int(k), p.shape)
            num = _straddle_free_difference(f, p.data, idx, h)
            if num is None:
                skipped += 1
                continue
            worst = max(worst, ad.relative_error(float(g[idx]), num))
            n += 1
            done += 1
            if done == per_group:
                break
        if done == 0:
            raise TrainingError(f"gradcheck: every probed entry of {name} straddles a relu kink")
        per[name] = worst
    return GradcheckResult(per, max(per.values()), n, skipped, time.perf_counter() - t0)


def fixture_path(name: str) -> Path:
    return Path(__file__).resolve().parent / "data" / name


def fixture_complex(pose_index: int = 0):
    """Bundled peptide receptor and one pose of the bundled ligand."""
    receptor = read_pdb(fixture_path("peptide.pdb"))
    ligand = read_structure(fixture_path("ligand_poses.sdf"))[pose_index]
    return receptor, ligand
