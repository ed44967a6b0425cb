"""Generate the synthetic station demo data set (data/stations.csv, data/stations_start.json).

438 candidate sites on a 500 km x 250 km planar domain with a smooth synthetic
elevation surface. 36 of them are flagged as the initial station network.
"""
import json
import pathlib

import numpy as np

rng = np.random.default_rng(438)
n, k = 438, 36
x = rng.uniform(0.0, 500.0, n)
y = rng.uniform(0.0, 250.0, n)
ridge = 2400.0 * np.exp(-((y - 150.0) / 45.0) ** 2) * (0.6 + 0.4 * np.sin(x / 80.0))
elev = 150.0 + ridge + 0.8 * x + rng.normal(0.0, 60.0, n)
elev = np.clip(elev, 100.0, None)
ids = np.arange(1001, 1001 + n)

root = pathlib.Path(__file__).resolve().parent.parent / "data"
root.mkdir(exist_ok=True)
with open(root / "stations.csv", "w") as f:
    f.write("id,x,y,elev\n")
    for i in range(n):
        f.write(f"{ids[i]},{x[i]:.3f},{y[i]:.3f},{elev[i]:.1f}\n")

stations = sorted(int(v) for v in rng.choice(ids, size=k, replace=False))
with open(root / "stations_start.json", "w") as f:
    json.dump({"design": {"ids": stations}}, f, indent=2)
    f.write("\n")
