"""tdmc: exact #SAT and weighted model counting with TD-guided branching."""

from .counter import (
    BranchConfig,
    Component,
    ComponentCache,
    ComponentSignature,
    CounterConfig,
    CountResult,
    CountSemiring,
    WeightedSemiring,
    branch_constant,
    branch_score,
    component_signature,
    count,
)
from .formula import CnfFormula, ParseError, WeightMap, normalize_clause, parse_input, write_cnf
from .oracle import OracleResult, brute_force_count, check_equivalent_counts
from .preprocess import (
    PreprocessConfig,
    PreprocessResult,
    eliminate_defined,
    merge_equivalences,
    run_pipeline,
    sparsify,
    vivify_complete,
    vivify_propagation,
)
from .sat import Solver, compute_lbd, propagate_units, reduce_learned, solve
from .td import (
    PrimalGraph,
    TreeDecomposition,
    build_primal_graph,
    compute_td,
    parse_pace,
    select_root,
    variable_depths,
)

__version__ = "0.1.0"
