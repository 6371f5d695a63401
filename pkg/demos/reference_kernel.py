"""Build the Hölder reference kernel and run the property checks on it.

Takes about a minute; pass a directory as the first argument to cache the field.
"""
import sys

from levikernel import SpaceTimeGrid, build_field, reference_kernel
from levikernel.validator import run_checks

k = reference_kernel()
fld, cert = build_field(k, SpaceTimeGrid(), cache_dir=sys.argv[1] if len(sys.argv) > 1 else None)
print(f"series truncated at N={cert.N}, tail bound {cert.tail_bound:.2e}")
print("envelope ratios:", ", ".join(f"{r:.2e}" for r in cert.envelope_ratios))
names = ["chapman-kolmogorov", "conservativeness", "maximum-principle", "smoothing", "two-sided"]
for rep in run_checks(fld, k, names):
    print(rep.line())
