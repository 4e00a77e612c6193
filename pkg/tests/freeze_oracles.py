"""Regenerate tests/data/frozen_oracles.json from the reference computations.

Run with ``python tests/freeze_oracles.py``.  The tests compare the package
against the frozen file and separately check that the oracles still reproduce it.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import oracles  # noqa: E402
from tridiag_resolvent.operator_model import (  # noqa: E402
    build_operator,
    chebyshev_spec,
    perturbed_chebyshev_spec,
)

FROZEN = Path(__file__).resolve().parent / "data" / "frozen_oracles.json"
PHI_POINTS = {"2": 2.0, "3i": 3j, "-1.5+0.5i": -1.5 + 0.5j}


def compute() -> dict:
    cheb = build_operator(chebyshev_spec())
    pert = build_operator(perturbed_chebyshev_spec(5.0))
    phi = {k: oracles.phi_quadrature(v) for k, v in PHI_POINTS.items()}
    moments = oracles.matrix_power_moments([0.25] * 8, [0.0] * 8, 8)
    return {
        "phi_quadrature": {k: [v.real, v.imag] for k, v in phi.items()},
        "chebyshev_rates_lambda_2_N_256": oracles.chebyshev_rates(2.0, 256),
        "perturbed_eigenvalue": {str(N): oracles.largest_real_eigenvalue(pert, N)
                                 for N in (200, 400)},
        "chebyshev_moments_M_8": [[c.real, c.imag] for c in moments],
        "chebyshev_convergents_at_1": [oracles.chebyshev_convergent_at_one(n) for n in range(1, 31)],
        "chebyshev_h_first_8": [float(h) for h in oracles.basis_norms(cheb, 7)],
    }


if __name__ == "__main__":
    FROZEN.write_text(json.dumps(compute(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {FROZEN}")
