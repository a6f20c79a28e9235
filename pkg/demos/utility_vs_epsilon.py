"""Compare exact PCA, MOD-SULQ, PPCA and random projection on synthetic data.

Runs a reduced version of the utility-vs-epsilon preset (fewer trials and
shorter chains) and prints mean q_F per mechanism and privacy level.

    python demos/utility_vs_epsilon.py
"""

import math
import warnings

from dppca.experiments import preset, run_utility_vs_epsilon
from dppca.mechanisms import UnboundedDataWarning

# The preset uses raw Gaussian draws, which can leave the unit ball; every
# trial would warn that the privacy guarantee does not formally apply.
warnings.simplefilter("ignore", UnboundedDataWarning)

cfg = preset("utility-vs-epsilon")
cfg.experiment_id = "demo_utility_vs_epsilon"
cfg.mechanisms = ["exact", "ppca", "modsulq", "randproj"]
cfg.trials = {"exact": 1, "ppca": 10, "modsulq": 50, "randproj": 50}
cfg.sampler = {"iterations": 5000}

res = run_utility_vs_epsilon(cfg)

print(f"{'mechanism':<10} {'epsilon':>8} {'count':>6} {'mean q_F':>9} {'std':>8}")
for s in res.summary:
    eps = "-" if s["epsilon"] is None else f"{s['epsilon']:g}"
    std = "" if math.isnan(s["q_f_std"]) else f"{s['q_f_std']:.4f}"
    print(f"{s['mechanism']:<10} {eps:>8} {s['count']:>6} {s['q_f_mean']:>9.4f} {std:>8}")

# With n = 5000 the PPCA loss shrinks like k(d - k)/(n eps) while the
# MOD-SULQ loss shrinks like beta^2 ~ 1/(n eps)^2, so MOD-SULQ catches up
# once epsilon is large enough.
