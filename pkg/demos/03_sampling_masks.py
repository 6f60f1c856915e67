"""Cartesian undersampling patterns."""

# %%
import numpy as np

from flowinr import sampling

nx, ny, nt = 64, 64, 8
for kind in ("random-cartesian", "pseudo-vista"):
    m = sampling.make_mask(kind, nx, ny, nt, 8, 4, 0)
    lines = m[0]  # phase-encode lines are constant along the readout axis
    print(kind, "lines per frame", lines.sum(axis=0).astype(int).tolist(),
          "effective AF %.2f" % (m.size / m.sum()))

# %% pseudo-VISTA spreads lines across frames: less overlap than i.i.d. draws
def overlap(m):
    lines = m[0].astype(bool)
    return np.mean([np.sum(lines[:, k] & lines[:, k + 1]) for k in range(lines.shape[1] - 1)])

for kind in ("random-cartesian", "pseudo-vista"):
    print(kind, "mean shared lines between neighbours:",
          np.mean([overlap(sampling.make_mask(kind, nx, ny, nt, 8, 4, s)) for s in range(20)]))

# %% temporal factor 3 keeps whole frames
m = sampling.make_mask("temporal-uniform", nx, ny, nt, 3, 0, 0)
print("measured frames:", np.flatnonzero(m.any(axis=(0, 1))).tolist())
