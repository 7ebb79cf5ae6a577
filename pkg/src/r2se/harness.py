"""End-to-end experiment driver: one function per pipeline command, each
reading its inputs from a run directory, verifying the upstream content ids
and writing one artifact plus one log.

Run directory layout::

    manifest.json            master seed, derived seeds, artifact ids and hashes
    data/train.jsonl         gen-data
    data/test.jsonl
    generalist.json          pretrain
    hard_set.json            allocate
    adapters.json            refine
    gate.json                fit-gate
    eval/                    eval: generalist.csv, gated.csv, summary.json
    report.json, report.md   report
    ablation.csv             ablate
    logs/<command>.log
"""
from __future__ import annotations

import contextlib
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor_nn as nn
from .adapters import AdapterEnsemble, ensemble_forward, init_ensemble
from .allocate import HardSet, RlSet, build_rl_set, score_dataset, select_hard
from .config import RunConfig
from .errors import ConfigError, InputError, IntegrityError
from .expand import GpdParams, LognormalTail, PercentileRule, evaluate_choices, evaluate_gated, fit_gpd
from .io import content_id, file_hash, read_json, write_json
from .metrics import EVAL_COLUMNS, case_difficulty, eval_csv_text, forget_stats, read_eval_csv, summarize
from .policy import Dataset, Generalist, PretrainConfig, build_vocabulary, prepare_dataset, pretrain
from .refine import RefineConfig, RlData, prepare_rl_data, refine_full, refine_specialists
from .world import Clip, generate_corpus, load_clips, save_clips

log = logging.getLogger("r2se")

SEED_NAMES = ("train_corpus", "test_corpus", "vocab", "pretrain", "train_noise", "test_noise", "rl_set",
              "adapters", "refine", "full_refine")
COMMANDS = ("gen-data", "pretrain", "allocate", "refine", "fit-gate", "eval", "report", "ablate")
ABLATION_COLUMNS = ("row_id", "name", "nc", "dac", "ttc", "comfort", "ep", "pdms", "expand_rate", "fr")


def derive_seeds(master: int) -> dict[str, int]:
    """Named sub-seeds drawn from the master seed; stable under adding names at the end."""
    return {name: int(np.random.default_rng([master, i]).integers(2**31)) for i, name in enumerate(SEED_NAMES)}


@dataclass
class Run:
    """A run directory bound to a configuration."""

    cfg: RunConfig
    out: Path

    def __post_init__(self):
        self.out = Path(self.out)
        self.seeds = derive_seeds(self.cfg.seed)

    # --- manifest -----------------------------------------------------------
    @property
    def manifest_path(self) -> Path:
        return self.out / "manifest.json"

    def manifest(self) -> dict:
        if self.manifest_path.exists():
            m = read_json(self.manifest_path)
            if m["master_seed"] != self.cfg.seed:
                raise IntegrityError(f"run directory was created with master seed {m['master_seed']}, "
                                     f"not {self.cfg.seed}")
            return m
        return {"master_seed": self.cfg.seed, "seeds": self.seeds, "config": self.cfg.to_dict(), "artifacts": {}}

    def record(self, command: str, entry: dict) -> None:
        m = self.manifest()
        m["artifacts"][command] = entry
        write_json(self.manifest_path, m)

    def artifact(self, command: str) -> dict:
        m = self.manifest()
        if command not in m["artifacts"]:
            raise InputError(f"{self.out}: run `r2se {command}` first")
        return m["artifacts"][command]

    @contextlib.contextmanager
    def logging_to(self, command: str):
        path = self.out / "logs" / f"{command}.log"
        path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(path, mode="w")
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s %(message)s"))
        root = logging.getLogger("r2se")
        root.addHandler(handler)
        old = root.level
        root.setLevel(logging.INFO)
        try:
            yield
        finally:
            root.removeHandler(handler)
            root.setLevel(old)
            handler.close()

    # --- shared loaders ------------------------------------------------------
    def clips(self, split: str) -> list[Clip]:
        entry = self.artifact("gen-data")
        path = self.out / entry["files"][split]
        if file_hash(path) != entry["sha256"][split]:
            raise IntegrityError(f"{path} hash {file_hash(path)[:16]} differs from manifest {entry['sha256'][split][:16]}")
        return load_clips(path)

    def dataset_id(self) -> str:
        return self.artifact("gen-data")["id"]

    def generalist(self) -> Generalist:
        self.artifact("pretrain")
        doc = read_json(self.out / "generalist.json")
        if doc["dataset_id"] != self.dataset_id():
            raise IntegrityError(f"generalist trained on dataset {doc['dataset_id']}, run has {self.dataset_id()}")
        g = Generalist.from_document(doc["generalist"])
        if g.id != self.artifact("pretrain")["id"]:
            raise IntegrityError(f"generalist {g.id} does not match manifest {self.artifact('pretrain')['id']}")
        return g

    def hard_set(self, generalist_id: str) -> tuple[HardSet, RlSet, dict, str]:
        self.artifact("allocate")
        doc = read_json(self.out / "hard_set.json")
        hard = HardSet.from_document(doc["hard_set"])
        if hard.generalist_id != generalist_id:
            raise IntegrityError(f"hard set scored by generalist {hard.generalist_id}, loaded {generalist_id}")
        rl = doc["rl_set"]
        return hard, RlSet(rl["groups"], rl["L"], rl["seed"], rl["meta"]), doc["train_pdms"], content_id(doc)

    def ensemble(self, generalist_id: str, hard_set_id: str) -> AdapterEnsemble:
        self.artifact("refine")
        doc = read_json(self.out / "adapters.json")
        ens = AdapterEnsemble.from_document(doc, expected_base_id=generalist_id)
        if ens.meta.get("hard_set_id") != hard_set_id:
            raise IntegrityError(f"adapters refined on hard set {ens.meta.get('hard_set_id')}, loaded {hard_set_id}")
        return ens

    def gate_doc(self, ensemble_id: str, hard_set_id: str) -> dict:
        self.artifact("fit-gate")
        doc = read_json(self.out / "gate.json")
        if doc["ensemble_id"] != ensemble_id:
            raise IntegrityError(f"gate fitted on ensemble {doc['ensemble_id']}, loaded {ensemble_id}")
        if doc["hard_set_id"] != hard_set_id:
            raise IntegrityError(f"gate fitted on hard set {doc['hard_set_id']}, loaded {hard_set_id}")
        return doc

    def features(self, clips: Sequence[Clip], split: str, vocab: np.ndarray) -> Dataset:
        return prepare_dataset(clips, vocab, self.seeds[f"{split}_noise"], self.cfg.policy.tau, self.cfg.world.noise)


def tail_from_doc(doc: dict):
    kind = doc["tail"]
    if kind == "gpd":
        p = doc["params"]
        return GpdParams(p["xi"], p["beta"], p["u0"], p["n_fit"], p["nll"])
    if kind == "lognormal":
        return LognormalTail(**doc["params"])
    return PercentileRule(tuple(doc["params"]["sorted_samples"]))


def fit_tail(samples: np.ndarray, kind: str, u0=None):
    if kind == "gpd":
        t = fit_gpd(samples, u0)
        return t, t.document()
    if kind == "lognormal":
        t = LognormalTail.fit(samples)
        return t, {"mu": t.mu, "s": t.s, "u0": t.u0}
    t = PercentileRule.fit(samples)
    return t, {"sorted_samples": list(t.sorted_samples)}


def refine_config(cfg: RunConfig, seed: int, **overrides) -> RefineConfig:
    r = cfg.refine
    kw = dict(lam=r.lam, alpha_pretrain=r.alpha_pretrain, budget=r.budget, is_clamp=tuple(r.is_clamp),
              epochs=r.epochs, lr=r.lr, optimizer=r.optimizer, gamma=r.gamma, baseline=r.baseline, seed=seed)
    kw.update(overrides)
    return RefineConfig(**kw)


def rl_data(run: Run, generalist: Generalist, rl: RlSet) -> RlData:
    clips = run.clips("train")
    data = run.features(clips, "train", generalist.vocab)
    idx = {c.id: i for i, c in enumerate(clips)}
    ids = sorted({i for g in rl.groups for i in g})
    return prepare_rl_data(generalist.weights, generalist.vocab, {i: clips[idx[i]] for i in ids},
                           {i: data.X[idx[i]] for i in ids}, {i: data.targets[idx[i]] for i in ids},
                           {i: data.truths[idx[i]] for i in ids}, run.cfg.refine.gamma)


# --- commands ------------------------------------------------------------------------

def cmd_gen_data(run: Run) -> dict:
    w = run.cfg.world
    with run.logging_to("gen-data"):
        files, hashes, counts = {}, {}, {}
        for split, n in (("train", w.n_train), ("test", w.n_test)):
            clips = generate_corpus(n, run.seeds[f"{split}_corpus"], w.kinds)
            path = run.out / "data" / f"{split}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_clips(path, clips)
            files[split] = str(path.relative_to(run.out))
            hashes[split] = file_hash(path)
            counts[split] = dict(sorted(Counter(c.scenario_tag for c in clips).items()))
            log.info("%s: %d clips %s", split, n, counts[split])
        entry = {"files": files, "sha256": hashes, "counts": counts, "id": content_id(hashes)}
        run.record("gen-data", entry)
    return entry


def cmd_pretrain(run: Run) -> dict:
    p = run.cfg.policy
    with run.logging_to("pretrain"):
        clips = run.clips("train")
        vocab = build_vocabulary(clips, p.M, run.seeds["vocab"])
        data = run.features(clips, "train", vocab)
        pc = PretrainConfig(p.epochs, p.batch_size, p.lr, p.optimizer, p.dropout, p.alpha, p.hidden, run.seeds["pretrain"])
        weights, hist = pretrain(data, pc)
        for msg in hist.warnings:
            log.warning(msg)
        g = Generalist(weights, vocab, p.tau)
        write_json(run.out / "generalist.json", {"generalist": g.document(), "dataset_id": run.dataset_id(),
                                                 "epoch_loss": hist.epoch_loss, "warnings": hist.warnings})
        entry = {"file": "generalist.json", "id": g.id, "dataset_id": run.dataset_id(),
                 "sha256": file_hash(run.out / "generalist.json")}
        run.record("pretrain", entry)
    return entry


def cmd_allocate(run: Run) -> dict:
    a = run.cfg.allocate
    with run.logging_to("allocate"):
        g = run.generalist()
        clips = run.clips("train")
        data = run.features(clips, "train", g.vocab)
        evals = score_dataset(g.weights, g.vocab, clips, data.X, data.truths, a.beta_per, a.beta_ent)
        hard = select_hard([e.score for e in evals], a.eps, g.id)
        rl = build_rl_set(hard, [c.id for c in clips], a.L, run.seeds["rl_set"])
        rl.meta = {"hard_ids": hard.ids}
        pdms = {e.score.clip_id: e.pdms for e in evals}
        doc = {"hard_set": hard.document(), "rl_set": rl.document(), "train_pdms": pdms}
        write_json(run.out / "hard_set.json", doc)
        log.info("hard set: %d clips, threshold %.4f, generalist hard PDMS %.4f", len(hard.ids), hard.threshold,
                 float(np.mean([pdms[h] for h in hard.ids])))
        entry = {"file": "hard_set.json", "id": content_id(doc), "generalist_id": g.id, "n_hard": len(hard.ids),
                 "sha256": file_hash(run.out / "hard_set.json")}
        run.record("allocate", entry)
    return entry


def _refine(run: Run, g: Generalist, rl: RlSet, data: RlData, hard_set_id: str, **overrides):
    cfg = run.cfg
    ens = init_ensemble(g.weights, cfg.adapters.K, cfg.adapters.rank, run.seeds["adapters"], base_id=g.id)
    ens, hist = refine_specialists(g.weights, ens, rl.groups, data, refine_config(cfg, run.seeds["refine"], **overrides))
    ens.meta = {"hard_set_id": hard_set_id, "log": hist.epochs}
    return ens


def cmd_refine(run: Run) -> dict:
    with run.logging_to("refine"):
        g = run.generalist()
        base_hash = content_id(nn.weights_to_document(g.weights))
        hard, rl, _, hid = run.hard_set(g.id)
        ens = _refine(run, g, rl, rl_data(run, g, rl), hid)
        if content_id(nn.weights_to_document(g.weights)) != base_hash:
            raise IntegrityError("refinement modified the base weights")
        write_json(run.out / "adapters.json", ens.document())
        entry = {"file": "adapters.json", "id": ens.id, "base_id": g.id, "hard_set_id": hid,
                 "sha256": file_hash(run.out / "adapters.json")}
        run.record("refine", entry)
    return entry


def _hard_inputs(run: Run, g: Generalist, hard: HardSet):
    clips = run.clips("train")
    data = run.features(clips, "train", g.vocab)
    idx = {c.id: i for i, c in enumerate(clips)}
    rows = [idx[h] for h in hard.ids]
    return [clips[i] for i in rows], data.X[rows], data.truths[rows]


def cmd_fit_gate(run: Run) -> dict:
    e = run.cfg.expand
    with run.logging_to("fit-gate"):
        g = run.generalist()
        hard, _, _, hid = run.hard_set(g.id)
        ens = run.ensemble(g.id, hid)
        _, X, _ = _hard_inputs(run, g, hard)
        _, u = ensemble_forward(g.weights, ens, X)
        _, params = fit_tail(u, e.tail, e.u0)
        doc = {"kind": "gate", "tail": e.tail, "params": params, "sigma": e.sigma, "direction": e.gate_direction,
               "ensemble_id": ens.id, "hard_set_id": hid, "n_samples": int(len(u))}
        write_json(run.out / "gate.json", doc)
        log.info("tail %s fitted on %d hard-case uncertainties: %s", e.tail, len(u), params if e.tail != "percentile"
                 else "empirical")
        entry = {"file": "gate.json", "id": content_id(doc), "ensemble_id": ens.id,
                 "sha256": file_hash(run.out / "gate.json")}
        run.record("fit-gate", entry)
    return entry


def _write_csv(path: Path, rows) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(eval_csv_text(rows))
    return file_hash(path)


def cmd_eval(run: Run, sigma: float | None = None) -> dict:
    e = run.cfg.expand
    sigma = e.sigma if sigma is None else sigma
    with run.logging_to("eval"):
        g = run.generalist()
        hard, _, train_pdms, hid = run.hard_set(g.id)
        ens = run.ensemble(g.id, hid)
        gdoc = run.gate_doc(ens.id, hid)
        tail = tail_from_doc(gdoc)
        test = run.clips("test")
        data = run.features(test, "test", g.vocab)
        base_rows, _ = evaluate_gated(test, g, None, None, 1.0, data.X, data.truths)
        rows, summary = evaluate_gated(test, g, ens, tail, sigma, data.X, data.truths, gdoc["direction"],
                                       previous=base_rows)
        summary["generalist"] = summarize(base_rows)
        # specialist argmax on the allocated hard set against the generalist's scan
        hclips, hX, _ = _hard_inputs(run, g, hard)
        mean, _ = ensemble_forward(g.weights, ens, hX)
        hrows = evaluate_choices(hclips, g.vocab, mean, ["specialist"] * len(hclips), np.zeros(len(hclips)))
        spec = {r["clip_id"]: r["pdms"] for r in hrows}
        summary["hard"] = {"n": len(hard.ids), "generalist_pdms": float(np.mean([train_pdms[h] for h in hard.ids])),
                           "specialist_pdms": float(np.mean(list(spec.values()))), "threshold": hard.threshold,
                           **forget_stats({h: train_pdms[h] for h in hard.ids}, spec, hard.ids, run.cfg.eval.delta_h)}
        # still hard: difficulty re-scored under the specialist reaches the allocation cut;
        # the perception path is shared, so the stored perception feedback carries over
        a = run.cfg.allocate
        redo = [case_difficulty(r["pdms"], s.f_per, r["f_ent"], a.beta_per, a.beta_ent).f_x
                for r, s in zip(hrows, hard.scores)]
        summary["hard"]["remaining_hard"] = float(np.mean([f >= hard.threshold for f in redo]))
        summary["forget"] = forget_stats({r["clip_id"]: r["pdms"] for r in base_rows},
                                         {r["clip_id"]: r["pdms"] for r in rows}, (), run.cfg.eval.delta_h)
        summary.update({"sigma": sigma, "gate_id": run.artifact("fit-gate")["id"], "generalist_id": g.id,
                        "ensemble_id": ens.id})
        hashes = {"generalist.csv": _write_csv(run.out / "eval" / "generalist.csv", base_rows),
                  "gated.csv": _write_csv(run.out / "eval" / "gated.csv", rows)}
        write_json(run.out / "eval" / "summary.json", summary)
        log.info("test PDMS generalist %.4f gated %.4f expand rate %.3f; hard PDMS %.4f -> %.4f",
                 summary["generalist"]["mean_pdms"], summary["mean_pdms"], summary["expand_rate"],
                 summary["hard"]["generalist_pdms"], summary["hard"]["specialist_pdms"])
        entry = {"dir": "eval", "sha256": hashes, "id": content_id(hashes), "gate_id": summary["gate_id"]}
        run.record("eval", entry)
    return entry


def _ungated_rows(clips, g: Generalist, probs, used: str, truths, X):
    _, perception = nn.forward(g.weights, X)
    per_loss = ((perception - truths) ** 2).mean(1)
    return evaluate_choices(clips, g.vocab, probs, [used] * len(clips), per_loss)


def _ablation_row(row_id: str, name: str, rows, base_rows) -> dict:
    s = summarize(rows)
    fr = forget_stats({r["clip_id"]: r["pdms"] for r in base_rows}, {r["clip_id"]: r["pdms"] for r in rows})["fr"]
    return {"row_id": row_id, "name": name, **{c: s[f"mean_{c}"] for c in ("nc", "dac", "ttc", "comfort", "ep", "pdms")},
            "expand_rate": s["expand_rate"], "fr": fr}


def ablation_csv_text(rows) -> str:
    lines = [",".join(ABLATION_COLUMNS)]
    for r in rows:
        lines.append(",".join(r[c] if isinstance(r[c], str) else format(float(r[c]), ".12g") for c in ABLATION_COLUMNS))
    return "\n".join(lines) + "\n"


def cmd_ablate(run: Run) -> dict:
    """Component ablation on the test set, reusing the run's generalist,
    hard set, refined ensemble and gate (running any missing step first)."""
    for cmd, fn in (("gen-data", cmd_gen_data), ("pretrain", cmd_pretrain), ("allocate", cmd_allocate),
                    ("refine", cmd_refine), ("fit-gate", cmd_fit_gate), ("eval", cmd_eval)):
        if cmd not in run.manifest()["artifacts"]:
            fn(run)
    with run.logging_to("ablate"):
        g = run.generalist()
        hard, rl, _, hid = run.hard_set(g.id)
        ens = run.ensemble(g.id, hid)
        test = run.clips("test")
        data = run.features(test, "test", g.vocab)
        base_rows = read_eval_csv(run.out / "eval" / "generalist.csv")
        gated_rows = read_eval_csv(run.out / "eval" / "gated.csv")
        rld = rl_data(run, g, rl)

        def spec_rows(e):
            return _ungated_rows(test, g, ensemble_forward(g.weights, e, data.X)[0], "specialist", data.truths, data.X)

        table = [_ablation_row("ID1", "IL-only", base_rows, base_rows)]
        ens_cost = _refine(run, g, rl, rld, hid, reward_scale=0.0)
        table.append(_ablation_row("ID2", "+cost", spec_rows(ens_cost), base_rows))
        ens_rl = _refine(run, g, rl, rld, hid, alpha_pretrain=0.0)
        table.append(_ablation_row("ID3", "RL-without-IL", spec_rows(ens_rl), base_rows))
        table.append(_ablation_row("ID4", "+IL", spec_rows(ens), base_rows))
        table.append(_ablation_row("ID0", "+expansion", gated_rows, base_rows))
        full, _ = refine_full(g.weights, rl.groups, rld,
                              refine_config(run.cfg, run.seeds["full_refine"], lr=run.cfg.refine.full_lr))
        ft_probs = nn.softmax(nn.forward(full, data.X)[0])
        table.append(_ablation_row("FT", "full-finetune", _ungated_rows(test, g, ft_probs, "finetuned", data.truths,
                                                                        data.X), base_rows))
        for r in table:
            log.info("%s %-14s PDMS %.4f FR %.4f", r["row_id"], r["name"], r["pdms"], r["fr"])
        path = run.out / "ablation.csv"
        path.write_text(ablation_csv_text(table))
        entry = {"file": "ablation.csv", "sha256": file_hash(path), "id": content_id(table), "ensemble_id": ens.id}
        run.record("ablate", entry)
    return entry


def read_ablation_csv(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    head = tuple(lines[0].split(","))
    if head != ABLATION_COLUMNS:
        raise InputError(f"{path}: unexpected ablation columns {list(head)}")
    out = []
    for line in lines[1:]:
        vals = line.split(",")
        out.append({k: (v if k in ("row_id", "name") else float(v)) for k, v in zip(head, vals)})
    return out


def report_summary(base_rows, rows) -> dict:
    s = summarize(rows)
    s.update(forget_stats({r["clip_id"]: r["pdms"] for r in base_rows}, {r["clip_id"]: r["pdms"] for r in rows}))
    return s


def cmd_report(run: Run, others: Iterable[Path] = ()) -> dict:
    """Join this run's evaluation (and any other run directories) into one summary."""
    with run.logging_to("report"):
        runs = [run.out, *map(Path, others)]
        entries = []
        for d in runs:
            base = read_eval_csv(d / "eval" / "generalist.csv")
            gated = read_eval_csv(d / "eval" / "gated.csv")
            extra = read_json(d / "eval" / "summary.json")
            # the run's own label must not depend on where it was written
            label = f"seed {run.cfg.seed}" if d == run.out else str(d)
            entries.append({"run": label, "generalist": report_summary(base, base),
                            "gated": report_summary(base, gated), "hard": extra.get("hard")})
        doc = {"runs": entries}
        if (run.out / "ablation.csv").exists():
            doc["ablation"] = read_ablation_csv(run.out / "ablation.csv")
        write_json(run.out / "report.json", doc)
        (run.out / "report.md").write_text(report_markdown(doc))
        entry = {"file": "report.json", "id": content_id(doc), "sha256": file_hash(run.out / "report.json")}
        run.record("report", entry)
    return entry


def report_markdown(doc: dict) -> str:
    out = ["# Evaluation report", "",
           "| run | policy | NC | DAC | TTC | C | EP | PDMS | ER | FR |", "|---|---|---|---|---|---|---|---|---|---|"]
    for e in doc["runs"]:
        for pol in ("generalist", "gated"):
            s = e[pol]
            out.append(f"| {e['run']} | {pol} | {s['mean_nc']:.3f} | {s['mean_dac']:.3f} | {s['mean_ttc']:.3f} | "
                       f"{s['mean_comfort']:.3f} | {s['mean_ep']:.3f} | {s['mean_pdms']:.4f} | "
                       f"{s['expand_rate']:.3f} | {s['fr']:.3f} |")
    hard = [e for e in doc["runs"] if e.get("hard")]
    if hard:
        out += ["", "## Hard set", "", "| run | n | generalist PDMS | specialist PDMS | HIR | HFR | remaining |",
                "|---|---|---|---|---|---|---|"]
        for e in hard:
            h = e["hard"]
            out.append(f"| {e['run']} | {h['n']} | {h['generalist_pdms']:.4f} | {h['specialist_pdms']:.4f} | "
                       f"{h['hir']:.3f} | {h['hfr']:.3f} | {h['remaining_hard']:.3f} |")
    if "ablation" in doc:
        out += ["", "## Ablation", "", "| id | components | PDMS | ER | FR |", "|---|---|---|---|---|"]
        for r in doc["ablation"]:
            out.append(f"| {r['row_id']} | {r['name']} | {r['pdms']:.4f} | {r['expand_rate']:.3f} | {r['fr']:.3f} |")
    return "\n".join(out) + "\n"


def run_pipeline(run: Run, ablate: bool = True) -> None:
    """Every command in order."""
    for fn in (cmd_gen_data, cmd_pretrain, cmd_allocate, cmd_refine, cmd_fit_gate, cmd_eval):
        fn(run)
    if ablate:
        cmd_ablate(run)
    cmd_report(run)


def load_run(config_path, seed: int | None, out) -> Run:
    cfg = RunConfig.load(config_path)
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = seed
    return Run(cfg, Path(out))


__all__ = ["ABLATION_COLUMNS", "COMMANDS", "EVAL_COLUMNS", "Run", "cmd_ablate", "cmd_allocate", "cmd_eval",
           "cmd_fit_gate", "cmd_gen_data", "cmd_pretrain", "cmd_refine", "cmd_report", "derive_seeds", "load_run",
           "read_ablation_csv", "run_pipeline"]
