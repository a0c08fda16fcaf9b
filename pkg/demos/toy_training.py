"""Train a small regression MLP with and without Gaussian weight sampling.

Prints the eval loss of each method and the final bit-width distribution of
the sampled model.  Takes a few seconds.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from gaussws.config import ModelConfig
from gaussws.pqt_core import bitwidth_report
from gaussws.trainer import train_run

cfg = ModelConfig(steps=800, eval_every=200)
with tempfile.TemporaryDirectory() as tmp:
    for method in ("baseline", "gaussws", "diffq"):
        res = train_run(cfg.replace(method=method), 0, Path(tmp) / method)
        evals = ", ".join(f"{v:.4f}" for _, v in res.eval_loss)
        print(f"{method:>8}: eval loss {evals}")
        if method == "gaussws":
            report = bitwidth_report(res.model.pqt.values(), res.model.pqt_cfg)
            print(report.format())
