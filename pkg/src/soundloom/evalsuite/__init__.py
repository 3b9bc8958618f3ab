from .listening import export_listening_pairs, render_segment
from .protocols import (IMPACT_N_VALUES, PRECISION_CUTOFFS, REFERENCE_RESULTS,
                        ImpactReport, PrecisionReport, eval_impact,
                        eval_precision, random_precision_baseline)

__all__ = [
    "IMPACT_N_VALUES", "PRECISION_CUTOFFS", "REFERENCE_RESULTS",
    "ImpactReport", "PrecisionReport", "eval_impact", "eval_precision",
    "export_listening_pairs", "random_precision_baseline", "render_segment",
]
