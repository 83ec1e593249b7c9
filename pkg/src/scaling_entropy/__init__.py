"""Scaling entropy of measure-preserving systems from sampled orbits."""

__version__ = "0.1.0"

from .entropy import CoveringNet, HUpperBound, InvalidEps, cover_target, eps_entropy_H_upper, \
    eps_entropy_Hprime, greedy_net, minimal_cover_bruteforce  # noqa: E402
from .metrics import (MODES, Arc, Cylinder, IteratedMetric, LengthMismatch, Semimetric,  # noqa: E402
                      admissibility_probe, arc_metric, constant_metric, cut_semimetric, distance_matrix,
                      dyadic_metric, hamming_window_metric, indicator_semimetric, iterate, lipschitz_probe,
                      metric_axiom_check, rotation_average_closed_form, rotation_average_profile,
                      semicontinuity_probe)
from .scaling import (EmptyInput, GrowthVerdict, ScalingCurve, SpectrumVerdict, TooFewPoints,  # noqa: E402
                      classify_growth, scaling_curve, scaling_curves, spectrum_diagnostic)
from .systems import (BitWord, BufferExhausted, DomainOverflow, EmpiricalSample, SystemSpec,  # noqa: E402
                      orbit, orbit_states, pascal_step, pascal_step_inverse, sample_invariant, sample_orbits,
                      step)
from .transport import (CertificateError, DiscreteMeasure, InvalidMeasure, NotACover, SizeCap,  # noqa: E402
                        TransportPlan, discrete_entropy, kantorovich, lemma3_plan, solve_transport,
                        transport_bruteforce)
