"""
Test suite for the PR-CapsNet engine.

Educational Note:
Numerical code fails quietly, so most tests here are property checks
rather than golden numbers:
- Geometry maps keep points on the manifold and invert each other
- Routing keeps coupling rows on the simplex and ignores child order
- Analytic gradients agree with finite differences
- Fixed seeds reproduce reports exactly
"""
