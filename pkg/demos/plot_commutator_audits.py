"""
Transport audits of the shape-derivative identities
===================================================

Each identity is checked by moving the domain with a closed-form flow for
time delta, differencing, and comparing with the closed form.  First-order
agreement shows up as a Richardson slope near one.
"""

####################################################################
from cornerwaves import calculus_audit as ca

for r in ca.run_suite():
    print(f"{r.identity:24s} slope={r.slope:5.2f} pass={r.passed}")

####################################################################
# The surface-Laplacian commutator with the Hessian term's sign reversed.
r = ca.run_suite(["surface_laplacian"], surface_laplacian_form="derived")[0]
print(f"{r.identity} (derived sign): slope={r.slope:.2f} pass={r.passed}")

####################################################################
# A velocity of zero leaves every identity exact.
for r in ca.run_suite(["harmonic", "dn", "curvature"], flow=ca.zero_flow()):
    print(r.identity, max(r.defects))
