"""Walk through the whole pipeline on the smoke configuration.

Generates a small corpus, pretrains the generalist, allocates hard cases,
refines the adapter ensemble, fits the tail gate and evaluates, printing what
each step produced. Takes well under a minute.

    python demos/pipeline_walkthrough.py [run-dir]
"""
import json
import sys
import tempfile
from pathlib import Path

from r2se import harness as h

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


def main(out: Path) -> None:
    run = h.load_run(CONFIG, None, out)

    data = h.cmd_gen_data(run)
    print(f"corpus: {data['counts']['train']} train clips by kind, dataset id {data['id']}")

    h.cmd_pretrain(run)
    g = run.generalist()
    print(f"generalist {g.id}: vocabulary of {len(g.vocab)} trajectories")

    h.cmd_allocate(run)
    hard, rl, pdms, _ = run.hard_set(g.id)
    print(f"hard set: {len(hard.ids)} clips with F_X >= {hard.threshold:.3f}, "
          f"each refined with {rl.L} retrieved training clips")

    h.cmd_refine(run)
    log = json.loads((out / "adapters.json").read_text())["meta"]["log"]
    for rec in log:
        print(f"  epoch {rec['epoch']}: expected reward {rec['mean_reward']:.3f}, expected cost {rec['mean_cost']:.3f}")

    h.cmd_fit_gate(run)
    gate = json.loads((out / "gate.json").read_text())
    print(f"tail fit on {gate['n_samples']} hard-case uncertainties: xi {gate['params']['xi']:.3f}, "
          f"beta {gate['params']['beta']:.3g}")

    h.cmd_eval(run)
    s = json.loads((out / "eval" / "summary.json").read_text())
    print(f"test PDMS: generalist {s['generalist']['mean_pdms']:.4f}, gated {s['mean_pdms']:.4f} "
          f"(specialist used on {s['expand_rate']:.0%} of clips, forget rate {s['forget']['fr']:.3f})")
    print(f"hard set PDMS: {s['hard']['generalist_pdms']:.4f} -> {s['hard']['specialist_pdms']:.4f}")
    print(f"artifacts in {out}")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="r2se-demo-"))
    main(target)
