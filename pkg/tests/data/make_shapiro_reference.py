"""Regenerate shapiro_reference.json with scipy (run once; the JSON is committed)."""
import json
from pathlib import Path

import numpy as np
from scipy import stats

rng = np.random.default_rng(20240611)
cases = []
for n in (5, 20, 50, 200):
    for shape in ("normal", "uniform", "exponential", "t3", "bimodal"):
        if shape == "normal":
            x = rng.normal(size=n)
        elif shape == "uniform":
            x = rng.uniform(size=n)
        elif shape == "exponential":
            x = rng.exponential(size=n)
        elif shape == "t3":
            x = rng.standard_t(3, size=n)
        else:
            x = np.concatenate([rng.normal(-2, 1, n // 2), rng.normal(2, 1, n - n // 2)])
        x = np.round(x, 6)
        w, p = stats.shapiro(x)
        cases.append({"n": n, "shape": shape, "sample": x.tolist(), "w": float(w), "p": float(p)})

out = Path(__file__).with_name("shapiro_reference.json")
out.write_text(json.dumps({"source": f"scipy {__import__('scipy').__version__} stats.shapiro",
                           "cases": cases}, indent=1))
print(len(cases), "cases ->", out)
