"""SDE dX = (1 + 0.3 tanh X) dY against the parametrix kernel of the induced coefficient."""
import sys

from levikernel import SpaceTimeGrid, build_field, kappa_from_matrix, tanh_matrix_field
from levikernel.mc_sim import compare_with_parametrix, estimate_jump_intensity, simulate_sde

A = tanh_matrix_field(0.3)
k = kappa_from_matrix(A, 1.0)
fld, _ = build_field(k, SpaceTimeGrid(), cache_dir=sys.argv[1] if len(sys.argv) > 1 else None)
x0 = float(fld.grid.x[fld.grid.n // 2])
ens = simulate_sde(A, x0, 0.5, 64, 100_000, seed=1)
print(compare_with_parametrix(fld, ens, 0.5).line())
wrong = simulate_sde(A, x0, 0.5, 64, 100_000, seed=2, alpha=1.5)
print("wrong alpha:", compare_with_parametrix(fld, wrong, 0.5, require_match=False).line())
print(estimate_jump_intensity(ens, k, (0.0, 1.0), (4.0, 5.0)).line())
