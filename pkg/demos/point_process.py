"""Shape of the next-check-in density for a few intensity settings.

    python demos/point_process.py
"""

import numpy as np

from mvmn.temporal import log_density_from_activation

hours = np.array([0.25, 0.5, 1, 2, 4, 8, 16])
print("dt (h)      " + "".join(f"{h:>8.2f}" for h in hours))
for a, omega in [(0.0, 0.0), (-1.0, 0.0), (-1.0, 0.3), (-1.0, -0.5)]:
    dens = np.exp(log_density_from_activation(np.full(len(hours), a), np.array(omega), hours).data)
    print(f"a={a:+.1f} w={omega:+.1f} " + "".join(f"{d:8.4f}" for d in dens))
# a decaying intensity (w < 0) leaves probability mass at infinity: no next event
