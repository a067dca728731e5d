"""crosswalk: random walks on crossed products and fusion rings.

The package is organized around five mathematical layers plus a CLI:

* :mod:`crosswalk.groups` -- free products of cyclic groups with exact normal
  forms, ball enumeration, and finite symmetry groups acting by automorphisms.
* :mod:`crosswalk.fusion` -- fusion rings, measures on simple labels, measure
  convolution, and truncated Green/Martin kernels of the induced classical walk.
* :mod:`crosswalk.crossed` -- the crossed product ``linf(G) x S``: windowed
  elements, invariant states, the convolution Markov operator, block
  decomposition of the irreducible labels, and the dual-symmetry machinery.
* :mod:`crosswalk.boundary` -- verification harnesses: invariance-defect decay,
  harmonic lifts via Dirichlet solves, Doob transforms, and Green/Martin kernel
  comparisons between the crossed product and its classical quotient.
* :mod:`crosswalk.subcat` -- measure-level machinery of finite fusion
  subrings: the idempotent dimension-squared measure, commutation checks,
  measure splits, and the averaged-representation contraction bound.
* :mod:`crosswalk.cli` -- scenario-driven command line front end with cached,
  byte-deterministic JSON reports.
"""

__version__ = "0.1.0"
