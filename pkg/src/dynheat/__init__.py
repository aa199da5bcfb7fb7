"""dynheat: controllability laboratory for stochastic heat equations with
dynamic boundary conditions, at desk scale.

The package discretizes the bulk-surface heat system on an interval whose
two endpoints carry their own dynamics, diagonalizes it in the weighted
eigenbasis of the coupling operator, and uses exact spectral solvers to
verify spectral/observability inequalities and to synthesize null and
approximate controls together with the counterexample that appears when
the time control set stays clear of the horizon.
"""

from .domain import ControlRegion, DomainConfig, TimeSet
from .errors import (ConfigurationError, DegenerateObservationError, DimensionError,
                     DynheatError, IllPosedWindowError, MeasureConditionError,
                     NumericError, PlanningError, UnsupportedControlError,
                     UnsupportedTerminalError, VerificationError)
from .noise import (BrownianBundle, CoefficientPair, NoiseFactor, PiecewiseConstant,
                    sample_brownian, second_moment_factor, stochastic_factor)
from .operator import (SpectralBasis, SpectralWindow, WentzellOperator, assemble,
                       eigendecompose, spectral_inequality_constant,
                       spectral_inequality_profile, window_thresholds)
from .solvers import (AdjointSolution, ControlSignal, ControlStage, DualityResult,
                      ForwardSolution, ModeState, check_duality, decay_profile,
                      propagate_reduced, regress_correction, solve_backward,
                      solve_backward_mc, solve_forward, solve_forward_em)
from .observability import (InterpolationSample, ObservabilityReport, SlicingSequence,
                            UniqueContinuationResult, build_slicing,
                            check_unique_continuation, estimate_observability_constant,
                            highmode_decay, implied_constant, interpolation_profile,
                            interpolation_ratio, telescoping_required_constant)
from .control import (ApproximateControlResult, ControlPlan, CounterexampleWitness,
                      HumGramian, LebeauRobbianoSchedule, approximate_control,
                      build_counterexample, build_gramian, control_cost_sweep,
                      counterexample_moments, lebeau_robbiano_plan,
                      partial_null_control, simulate_plan)

__version__ = "0.1.0"
