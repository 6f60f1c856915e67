"""The command-line pipeline end to end, on a small grid."""

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp(prefix="flowinr-"))


def run(*args):
    print("$ flowinr", " ".join(args))
    proc = subprocess.run([sys.executable, "-m", "flowinr", *args], capture_output=True, text=True)
    print(proc.stdout.strip() or proc.stderr.strip())
    return proc.returncode


# %%
run("phantom-gen", "--out", str(work / "gt"))
run("mask-gen", "--kind", "pseudo-vista", "--dims", "64x64x8", "--af", "8", "--out", str(work / "mask"))
run("dataset", "--bundle", str(work / "gt"), "--mask", str(work / "mask" / "mask.finr"), "--out", str(work / "ds"))

# %%
run("recon", "--dataset", str(work / "ds"), "--gt", str(work / "gt"), "--out", str(work / "recon"),
    "--iterations", "50", "--set", "loss.lambda_t=0.1", "--set", "loss.mu=0.01", "--set", "of_jitter=1")
print(json.dumps(json.loads((work / "recon" / "metrics.json").read_text()), indent=1)[:400])
print(sorted(p.name for p in (work / "recon").iterdir()))
