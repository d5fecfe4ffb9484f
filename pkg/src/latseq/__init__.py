"""latseq: self-attentional lattice encoding and lattice-to-sequence translation."""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    Edge,
    EdgeLabeledLattice,
    LabeledEdge,
    Lattice,
    LatticeError,
    Node,
    from_sequence,
    line_graph,
    linearize,
    longest_path_positions,
    reverse,
    topological_order,
)
from .masks import (  # noqa: F401
    MaskMatrix,
    binary_masks,
    brute_force_reach_probs,
    compute_marginals,
    head_masks,
    merge_nondirectional,
    probabilistic_masks,
)
