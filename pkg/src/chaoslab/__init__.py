"""chaoslab: exact contraction/cumulant calculus for finite Wiener chaos.

The package realizes vectors of multiple Wiener-Ito integrals on a finite
orthonormal Gaussian basis and provides

* dense symmetric-tensor contraction calculus (:mod:`chaoslab.tensor_core`),
* chaos arithmetic, Gamma operators, joint cumulants and normal-approximation
  discrepancies (:mod:`chaoslab.chaos`),
* multivariate Hermite polynomials, Gaussian integration by parts and the
  smoothed Stein transform (:mod:`chaoslab.hermite_stein`),
* moment/cumulant combinatorics and generalized Edgeworth expansions
  (:mod:`chaoslab.edgeworth`),
* the step-kernel matrix calculus of the second chaos
  (:mod:`chaoslab.second_chaos_matrix`),
* majorizing contraction-graph integrals (:mod:`chaoslab.majorizing`),
* three quantitative example families: exploding Brownian-sheet functionals,
  Toeplitz quadratic functionals and Breuer-Major Hermite variations
  (:mod:`chaoslab.examples`),
* a deterministic parallel Monte-Carlo harness and CLI
  (:mod:`chaoslab.harness`, :mod:`chaoslab.cli`).
"""

__version__ = "0.1.0"
