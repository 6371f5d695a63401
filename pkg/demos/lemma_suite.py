"""Measured constants of the rho convolution inequalities for a few stability indices."""
from levikernel.rho_calculus import run_lemma21_suite

for alpha in (0.5, 1.0, 1.5):
    recs = run_lemma21_suite(alpha)
    worst = max(recs, key=lambda r: r.measured_constant / r.ceiling)
    print(f"alpha={alpha}: {len(recs)} records, all pass={all(r.passed for r in recs)}, "
          f"largest {worst.inequality_id} constant {worst.measured_constant:.3f}")
