# coding: utf-8

# # The command-line workflow
#
# The same steps are available from the shell through the `arraynormal`
# command. This script drives it in-process and lists what each step writes.
# Equivalent shell usage:
#
#     arraynormal simulate  --config cfg.json --out sim
#     arraynormal fit-bayes --config cfg.json --data sim/data.tensor --out fit
#     arraynormal ppc       --config cfg.json --data sim/data.tensor --chain fit --out ppc
#     arraynormal summarize --chain fit --out summary

import json
import tempfile
from pathlib import Path

from arraynormal.cli import main

cfg = {
    "seed": 3,
    "simulate": {"dims": [5, 4, 30], "modes": ["site", "var", "rep"],
                 "covariances": [{"type": "ar1", "rho": 0.7}, {"type": "exchangeable", "rho": 0.3},
                                 None]},
    "sampler": {"iters": 600, "burn_in": 200, "thin": 2},
    "ppc": {"draws": 200},
}

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    (root / "cfg.json").write_text(json.dumps(cfg))
    c = str(root / "cfg.json")
    steps = [
        ["simulate", "--config", c, "--out", str(root / "sim")],
        ["fit-bayes", "--config", c, "--data", str(root / "sim/data.tensor"), "--out", str(root / "fit")],
        ["ppc", "--config", c, "--data", str(root / "sim/data.tensor"), "--chain", str(root / "fit"),
         "--out", str(root / "ppc")],
        ["summarize", "--chain", str(root / "fit"), "--out", str(root / "summary")],
    ]
    for argv in steps:
        code = main(argv)
        out = Path(argv[argv.index("--out") + 1])
        print(f"{argv[0]:10s} exit {code}: {', '.join(sorted(p.name for p in out.iterdir()))}")

    print()
    print((root / "ppc/ppc_summary.csv").read_text())
    print("posterior correlation of the site mode:")
    print((root / "summary/corr_site.csv").read_text())
