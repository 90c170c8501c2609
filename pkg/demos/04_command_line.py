"""The command-line runner on the acceptance configs.

Equivalent shell session:

    willmore-flow check configs/acceptance/small_bump.cfg
    willmore-flow sweep 'configs/acceptance/*.cfg' --out results --jobs 2
"""
import json
import sys
import tempfile
from pathlib import Path

from willmore_flow.cli import main

root = Path(__file__).resolve().parents[1] / "configs" / "acceptance"
out = Path(tempfile.mkdtemp(prefix="willmore-"))

print("check:", main(["check", str(root / "small_bump.cfg")]))
code = main(["sweep", str(root / "*.cfg"), "--out", str(out), "--jobs", "2", "--quiet"])
print("sweep exit code:", code)
for rep in sorted(out.glob("*/report.json")):
    r = json.loads(rep.read_text())
    print(f"  {r['name']:<16} {r['status']:<6} samples {r['samples']:>4}  t_final {r['t_final']:.4g}")
print("outputs in", out)

# a misspelled key is reported with its line and a suggestion
bad = out / "bad.cfg"
bad.write_text("grid.nx = 9\nic.preset = zero\nflow.t_edn = 1\n")
print("bad config exit code:", main(["check", str(bad)]), file=sys.stderr)
