"""How the confidence threshold trades specialist use against test PDMS.

Re-evaluates an existing run directory (made by the walkthrough or
``r2se ablate``) at several sigma values. sigma = 1 never expands and
reproduces the generalist exactly.

    python demos/gate_sigma_sweep.py RUN_DIR [CONFIG]
"""
import json
import shutil
import sys
import tempfile
from pathlib import Path

from r2se import harness as h

SIGMAS = (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)


def main(run_dir: Path, config: Path) -> None:
    scratch = Path(tempfile.mkdtemp(prefix="r2se-sweep-")) / "run"
    shutil.copytree(run_dir, scratch)
    run = h.load_run(config, None, scratch)
    print(" sigma  expand  PDMS    FR")
    for sigma in SIGMAS:
        h.cmd_eval(run, sigma=sigma)
        s = json.loads((scratch / "eval" / "summary.json").read_text())
        print(f" {sigma:4.2f}   {s['expand_rate']:5.3f}  {s['mean_pdms']:.4f}  {s['forget']['fr']:.3f}")
    base = (scratch / "eval" / "generalist.csv").read_bytes()
    print("sigma = 1 matches the generalist byte for byte:", base == (scratch / "eval" / "gated.csv").read_bytes())


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    root = Path(__file__).resolve().parents[1]
    main(Path(sys.argv[1]), Path(sys.argv[2]) if len(sys.argv) > 2 else root / "configs" / "smoke.json")
