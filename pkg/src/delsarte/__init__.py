"""delsarte: a numerical laboratory for Delsarte transmutation operators.

Builds variable-coefficient matrix differential operators on uniform grids,
derives their bilinear concomitants by automated integration by parts,
assembles spectral kernel matrices and Volterra-type transmutation
operators from null-function data (with closed-form Darboux/Crum
cross-checks in 1D), and realizes the generalized de Rham complex d_L with
its Hodge star, Laplace-Hodge operator and harmonic spaces on periodic
grids.
"""

from .grids import Grid, GridFunction
from .diffop import (MultiIndex, DifferentialOperator, OperatorAction,
                     apply_operator, formal_adjoint, compose,
                     commutator_residual, locality_score, load_operator,
                     operator_from_dict)
from .concomitant import (ConcomitantSpec, ConcomitantTerm, build_concomitant,
                          evaluate_concomitant, verify_lagrangian_identity,
                          potential_form, PotentialForm, ClosednessError)
from .transmutation import (SpectralFamily, SpectralLabel, make_family,
                            KernelMatrix, kernel_matrix, DelsarteOperator,
                            delsarte_apply_spectral, conjugate_operator,
                            intertwining_residual, crum_transform,
                            kernel_invariance_check, soliton_family,
                            multi_soliton_family, oscillatory_family,
                            FamilyResidualError, KernelDegenerateError,
                            WronskianZeroError)
from .dl_complex import (DiscreteForm, ComplexOperatorFamily, standard_family,
                         d_l, d_l_adjoint_action,
                         laplace_action, d_l_squared_residual, hodge_star, inner_product,
                         assemble_complex, laplace_hodge, harmonic_report,
                         HarmonicReport, hodge_decomposition_check,
                         chain_pairing, coordinate_loop)
from .scenarios import ScenarioConfig, ReportRow, run_scenario, list_scenarios

__version__ = "0.1.0"
