"""Write a small synthetic tick/headline fixture and run the whole CLI on it.

    python demos/synthetic_pipeline.py [workdir]
"""

import sys
from pathlib import Path

from newsvar import cli
from newsvar.synthetic import FixtureConfig, write_fixture

CONFIG = """\
seed = 7
out = "out"

[data]
ticks_dir = "data/ticks"
sector_map = "data/sectors.csv"
headlines = "data/headlines.csv"

[models]
dynamics = ["GARCH", "GJR"]
laws = ["gaussian", "student_t"]
regressors = ["N", "SE"]

[forecast]
taus = [0.01]
"""


def main(workdir: str = "demo_run") -> int:
    root = Path(workdir)
    write_fixture(root / "data", FixtureConfig(days=4))
    cfg = root / "experiment.toml"
    cfg.write_text(CONFIG, encoding="utf-8")
    code = cli.main(["run", "--config", str(cfg)])
    if code == 0:
        code = cli.main(["report", "--config", str(cfg)])
    print((root / "out" / "sentiment" / "dictionary_summary.json").read_text())
    return code


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
