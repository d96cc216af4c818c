"""``igt`` command-line entry point.

Every subcommand resolves one :class:`~igt.config.RunConfig` (defaults, then
``--config`` YAML, then ``--section.key`` flags), echoes it into ``--out``,
and delegates to one pipeline operation. Inner errors end the process with
exit status 1 and a single ``igt <cmd>: error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, dotted_defaults, feature_config_from_dict, parse_value, resolve
from .errors import CheckpointError, ConfigError, IGTError
from .featurize import featurize_complex
from .model import load_model, prepare_inputs
from .structio import read_manifest, read_pdb, read_structure, write_jsonl, write_manifest

ALIASES = {
    "paths.manifest": "--manifest",
    "paths.val_manifest": "--val-manifest",
    "paths.out": "--out",
    "paths.checkpoint": "--checkpoint",
    "paths.compare_checkpoint": "--compare",
    "paths.receptor": "--receptor",
    "paths.ligand": "--ligand",
    "paths.poses": "--poses",
    "paths.reference": "--reference",
    "run.seed": "--seed",
    "run.workers": "--workers",
    "eval.top_k": "--top-k",
}

COMMANDS = {
    "prepare": "parse a manifest, build every graph, report sizes and failures",
    "split": "write train/val/test manifests split by target (or complex)",
    "train": "train a model; writes model.igtc, model.opt and train_log.jsonl",
    "eval": "evaluate a checkpoint on a labelled manifest",
    "screen": "rank a ligand library against one receptor",
    "rank-poses": "score every pose in a multi-pose ligand file",
    "analyze-attention": "mean intermolecular attention scores and histogram",
    "gradcheck": "compare tape gradients with finite differences on a real complex",
}


# gradcheck runs on a compact model unless the user sets model keys: at full
# default width the block-0 complex q/k gradients (~4e-6) sit at the
# finite-difference round-off floor for h=1e-5
GRADCHECK_MODEL = {"model.d_model": 32, "model.n_heads": 4, "model.n_blocks": 2, "model.d_ffn": 64}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _shown(default) -> str:
    if isinstance(default, list):
        default = ",".join(str(x) for x in default)
    return "(none)" if default in ("", None) else str(default)


def _key_listing() -> str:
    lines = ["configuration keys (flag --<key> VALUE, or a section in --config YAML):"]
    for key, default in dotted_defaults().items():
        lines.append(f"  {key:<44} default: {_shown(default)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    keys = argparse.ArgumentParser(add_help=False)
    keys.add_argument("--config", metavar="YAML", help="configuration file")
    group = keys.add_argument_group("configuration keys")
    for key, default in dotted_defaults().items():
        flags = [f"--{key}"]
        if key in ALIASES:
            flags.append(ALIASES[key])
        group.add_argument(*flags, dest=key, default=argparse.SUPPRESS, metavar="V",
                           help=f"default: {_shown(default)}")
    parser = _Parser(prog="igt", description="Intermolecular Graph Transformer toolkit",
                     epilog=_key_listing(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, text in COMMANDS.items():
        sp = sub.add_parser(name, parents=[keys], help=text, description=text)
        if name == "analyze-attention":
            sp.add_argument("--per-example", action="store_true",
                            help="histogram per-example scores instead of per-target means")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    out = {}
    for key in dotted_defaults():
        if key in vars(ns):
            out[key] = parse_value(key, getattr(ns, key))
    if getattr(ns, "per_example", False):
        out["eval.per_example"] = True
    return out


def _require(value: str, flag: str) -> str:
    if not value:
        raise ConfigError(f"missing required path {flag}")
    if not Path(value).exists():
        raise ConfigError(f"path does not exist: {value}")
    return value


def _features_sidecar(checkpoint) -> Path:
    return Path(checkpoint).with_suffix(".features.json")


def _load(cfg: RunConfig, path: str = ""):
    """Parameters, model config and the feature config the checkpoint was trained with."""
    path = _require(path or cfg.paths.checkpoint, "--checkpoint")
    params, model_cfg = load_model(path)
    side = _features_sidecar(path)
    feat = feature_config_from_dict(json.loads(side.read_text())) if side.exists() else cfg.feature
    if feat.d_edge != model_cfg.d_edge or feat.k_pe != model_cfg.k_pe:
        raise CheckpointError(
            f"checkpoint expects d_edge={model_cfg.d_edge}, k_pe={model_cfg.k_pe}; "
            f"features give d_edge={feat.d_edge}, k_pe={feat.k_pe}"
        )
    return params, model_cfg, feat


def cmd_prepare(cfg: RunConfig, out: Path) -> str:
    records = read_manifest(_require(cfg.paths.manifest, "--manifest"))
    loader = pipeline.ExampleLoader(cfg.feature)
    rows, good, failures = [], [], 0
    for rec in records:
        try:
            lig_g, rec_g, cg = featurize_complex(loader.receptor(rec.receptor_path),
                                                 loader.ligand(rec.ligand_path, rec.pose_index), cfg.feature)
        except (IGTError, OSError, IndexError) as exc:
            failures += 1
            rows.append({"id": rec.id, "ok": False, "error": str(exc).splitlines()[0]})
            continue
        good.append(rec)
        n_inter = int(sum(cg.edge_kind == 1))
        rows.append({"id": rec.id, "ok": True, "n_ligand": lig_g.n_nodes, "n_pocket": rec_g.n_nodes,
                     "n_edges": int(len(cg.graph.edges)), "n_inter_edges": n_inter})
    write_jsonl(out / "prepared.jsonl", rows)
    write_manifest(out / "valid.jsonl", good)
    if failures:
        raise IGTError(f"{failures} of {len(records)} records failed to featurize (see {out / 'prepared.jsonl'})")
    return f"prepared {len(good)} records"


def cmd_split(cfg: RunConfig, out: Path) -> str:
    records = read_manifest(_require(cfg.paths.manifest, "--manifest"))
    parts = pipeline.split(records, cfg.split)
    for name, part in zip(("train", "val", "test"), parts):
        write_manifest(out / f"{name}.jsonl", part)
    return "split " + " / ".join(f"{n}={len(p)}" for n, p in zip(("train", "val", "test"), parts))


def cmd_train(cfg: RunConfig, out: Path) -> str:
    records = read_manifest(_require(cfg.paths.manifest, "--manifest"))
    val = read_manifest(_require(cfg.paths.val_manifest, "--val-manifest")) if cfg.paths.val_manifest else None
    result = pipeline.train(records, cfg.model, cfg.train, cfg.feature, val, out_dir=out)
    _features_sidecar(out / "model.igtc").write_text(json.dumps(cfg.feature.to_dict(), sort_keys=True) + "\n")
    best = result.log[result.best_epoch - 1]
    return (f"trained {result.steps} steps over {len(result.log)} epochs; best epoch {result.best_epoch} "
            f"val_auroc={best['val_auroc']} val_loss={best['val_loss']:.6g}")


def cmd_eval(cfg: RunConfig, out: Path) -> str:
    params, model_cfg, feat = _load(cfg)
    records = read_manifest(_require(cfg.paths.manifest, "--manifest"))
    report = pipeline.evaluate(records, params, model_cfg, feat, cfg.eval.roc_fpr,
                               cfg.eval.ef_fraction, cfg.run.workers)
    report.write(out)
    return report.table().rstrip("\n")


def cmd_screen(cfg: RunConfig, out: Path) -> str:
    params, model_cfg, feat = _load(cfg)
    library = read_manifest(_require(cfg.paths.manifest, "--manifest"))
    receptor = cfg.paths.receptor
    if receptor:
        _require(receptor, "--receptor")
    else:
        receptors = {r.receptor_path for r in library}
        if len(receptors) != 1:
            raise ConfigError("library spans several receptors; pass --receptor")
        receptor = receptors.pop()
    ranked = pipeline.screen(receptor, library, params, model_cfg, feat, cfg.eval.top_k or None,
                             cfg.run.workers)
    write_jsonl(out / "screen.jsonl", ranked)
    return "\n".join(f"{r['rank']:>5}  {r['id']:<24} {r['probability']:.6f}" for r in ranked[:20])


def cmd_rank_poses(cfg: RunConfig, out: Path) -> str:
    params, model_cfg, feat = _load(cfg)
    receptor = _require(cfg.paths.receptor, "--receptor")
    poses = _require(cfg.paths.poses or cfg.paths.ligand, "--poses")
    reference = _require(cfg.paths.reference, "--reference") if cfg.paths.reference else None
    ranking = pipeline.rank_poses(receptor, poses, params, model_cfg, feat, reference)
    write_jsonl(out / "poses.jsonl", ranking.poses)
    if ranking.hit_rate is not None:
        write_jsonl(out / "hit_rate.jsonl", [{"k": k, "hit_rate": h} for k, h in enumerate(ranking.hit_rate, 1)])
    lines = []
    for r in ranking.poses:
        extra = f"  rmsd={r['rmsd']:.3f} {r['label']}" if "rmsd" in r else ""
        lines.append(f"{r['rank']:>4}  pose {r['pose_index']:<4} {r['probability']:.6f}{extra}")
    return "\n".join(lines)


def _attention(cfg, out: Path, checkpoint: str, tag: str, records):
    params, model_cfg, feat = _load(cfg, checkpoint)
    rep = pipeline.attention_score_analysis(records, params, model_cfg, feat,
                                            cfg.eval.per_example, cfg.eval.bins)
    (out / f"histogram{tag}.csv").write_text(rep.histogram_csv())
    write_jsonl(out / f"attention_scores{tag}.jsonl",
                [{"id": k, "score": v} for k, v in rep.example_scores.items()])
    write_jsonl(out / f"attention_targets{tag}.jsonl",
                [{"target_id": k, "score": rep.target_scores[k]} for k in sorted(rep.target_scores)])
    return rep


def cmd_analyze_attention(cfg: RunConfig, out: Path) -> str:
    records = read_manifest(_require(cfg.paths.manifest, "--manifest"))
    if not cfg.paths.compare_checkpoint:
        rep = _attention(cfg, out, "", "", records)
        vals = rep.distribution
        return f"{len(vals)} scores, mean {sum(vals) / len(vals):.6f}; histogram in {out / 'histogram.csv'}"
    a = _attention(cfg, out, "", "_a", records)
    b = _attention(cfg, out, cfg.paths.compare_checkpoint, "_b", records)
    (out / "comparison.csv").write_text(pipeline.comparison_csv(a, b))
    ma = sum(a.distribution) / len(a.distribution)
    mb = sum(b.distribution) / len(b.distribution)
    return f"mean score a={ma:.6f} b={mb:.6f}; histograms in {out}"


def cmd_gradcheck(cfg: RunConfig, out: Path) -> str:
    if cfg.paths.receptor or cfg.paths.ligand:
        receptor = read_pdb(_require(cfg.paths.receptor, "--receptor"))
        ligand = read_structure(_require(cfg.paths.ligand, "--ligand"))[0]
    else:
        receptor, ligand = pipeline.fixture_complex()
    inputs = prepare_inputs(receptor, ligand, cfg.feature)
    res = pipeline.gradcheck(inputs, cfg.model, seed=cfg.run.seed)
    write_jsonl(out / "gradcheck.jsonl", [{"group": k, "max_rel_error": v} for k, v in res.per_group.items()])
    status = "PASS" if res.passed() else "FAIL"
    msg = (f"max relative error {res.max_rel_error:.3e} over {len(res.per_group)} parameter groups "
           f"({res.n_checked} entries, {res.n_straddled} kink-straddling skipped, {res.seconds:.1f} s): {status}")
    if not res.passed():
        raise IGTError(msg)
    return msg


HANDLERS = {
    "prepare": cmd_prepare, "split": cmd_split, "train": cmd_train, "eval": cmd_eval,
    "screen": cmd_screen, "rank-poses": cmd_rank_poses,
    "analyze-attention": cmd_analyze_attention, "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        base = GRADCHECK_MODEL if ns.command == "gradcheck" else None
        cfg = resolve(ns.config, _overrides(ns), base=base)
        out = Path(cfg.paths.out)
        cfg.echo(out)
        message = HANDLERS[ns.command](cfg, out)
    except (IGTError, OSError, ValueError, IndexError) as exc:
        text = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"igt {ns.command}: error: {text}", file=sys.stderr)
        return 1
    if message:
        print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
