"""grwlab: numerical laboratory for spontaneous-collapse wavepacket dynamics.

Three cross-validating engines (closed-form moments, stochastic trajectory
unraveling, density-matrix grid evolution), a toy pointer-measurement chain,
and a (rate, localization-length) parameter-space scanner with exclusion
bounds.
"""

__version__ = "0.1.0"

from .analytic import (MomentSet, SpreadCurve, SpreadSample, SpreadTerms,
                       collapse_quantum_ratio, coexistence_rate, grw_moments,
                       grw_width, reduction_factor, schrodinger_moments,
                       schrodinger_width, spread_curve)
from .core import (HBAR_SI, NATURAL, NUCLEON_MASS_SI, SI, CollapseParams,
                   ConfigError, EvolutionAbort, FormulaDomainError,
                   GridDomainError, NumericalCheckError, ResourceLimitError,
                   ScaleSet, UnitError, UnitSystem, WavepacketParams,
                   effective_rate, from_natural, natural_scales,
                   params_from_config, read_config, to_natural, unit_system)
from .master_equation import (DecayRate, DensityGrid, apply_hit_map,
                              decoherence_profile, evolve, evolve_series,
                              grid_moments, hit_damping_factor,
                              hit_map_quadrature, read_grid_binary,
                              render_state, stable_timestep, trace_distance,
                              write_grid_binary, write_grid_magnitude_csv)
from .measurement import (BranchState, InteractionRamp, MeasurementSetup,
                          entangle, gaussian_overlap, measurement_report,
                          pointer_diagonalization_time, pointer_overlap,
                          read_scenario, reduced_density)
from .scan import (BoundCurve, BoundResult, OverlayResult, ScanPoint,
                   ScanResult, classify_phase, collapse_dominance_time,
                   collapse_rate_bound, overlay_bounds, read_curve_csv,
                   read_scan_csv, scan_plane, write_scan_csv)
from .trajectories import (EnsembleStats, GaussianState, HitEvent, apply_hit,
                           free_evolve, run_ensemble, run_trajectory,
                           sample_hit_time, write_ensemble_csv)
