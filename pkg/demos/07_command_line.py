"""The command-line workflow in a temporary directory.

``simulate`` writes a JSON report and a CSV of raw rows, both stamped with the
configuration hash; ``rates`` checks the stamps and prints the statistics.
"""

import json
import tempfile
from pathlib import Path

from splinekern.core import DesignDensity, ModelConfig, NoiseSpec, make_grid, sample_regression, sine, write_sample_csv
from splinekern.cli import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    config = {
        "model": {"regression": {"name": "sin"}, "noise": {"kind": "gaussian", "scale": 1.0}},
        "m": 2,
        "range": "H",
        "n_values": [500, 1000, 2000],
        "h_count": 5,
        "replications": 5,
        "seed": 1,
    }
    (tmp / "study.json").write_text(json.dumps(config))
    main(["simulate", "--config", str(tmp / "study.json"), "--threads", "4"])
    main(["rates", "--report", str(tmp / "study.report.json")])

    grid = make_grid(2000)
    model = ModelConfig(sine(1.0), DesignDensity.uniform(grid), NoiseSpec("gaussian", 0.5), 2000)
    write_sample_csv(tmp / "sample.csv", sample_regression(model, 0))
    main(["fit", "--input", str(tmp / "sample.csv"), "--m", "2", "--h", "0.1", "--output", str(tmp / "fit.csv")])
    main(["bands", "--input", str(tmp / "sample.csv"), "--m", "2", "--h", "0.1", "--q", "1.6",
          "--output", str(tmp / "band.csv")])
    print((tmp / "band.csv").read_text().splitlines()[:3])
