"""
The command line
================

``timedexec`` (or ``python -m timedexec``) wraps the same functions: run a
scenario, export its transaction trace, or tabulate success rates.
"""

import pathlib
import tempfile

from timedexec.cli import main
from timedexec.config import instance_a

print("$ timedexec run --instance a --seed 0")
main(["run", "--instance", "a", "--seed", "0"])

# scenarios live in TOML files; this one makes slot 11 leak its key early
config = instance_a(seed=5, slot_policies={11: "advance_disclosure"})
with tempfile.TemporaryDirectory() as tmp:
    path = pathlib.Path(tmp) / "leaky.toml"
    path.write_text(config.dumps())
    print("\n" + path.read_text())
    print("$ timedexec run --config leaky.toml --runs 3 --format csv")
    main(["run", "--config", str(path), "--runs", "3", "--format", "csv"])

print("\n$ timedexec sr --l 3,4,5 --m all --n 5")
main(["sr", "--l", "3,4,5", "--m", "all", "--n", "5"])

print("\n$ timedexec trace --seed 0   (last lines)")
trace = tempfile.NamedTemporaryFile(suffix=".txt", delete=False).name
main(["trace", "--seed", "0", "--out", trace])
print("".join(pathlib.Path(trace).read_text().splitlines(keepends=True)[-16:]), end="")
pathlib.Path(trace).unlink()
