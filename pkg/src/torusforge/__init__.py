"""Isometric immersions of flat tori with small extrinsic curvature."""
from .bending import CorrugationCurve, CorrugationStep, cascade, certify_flat
from .curvature import (
    CurvatureConfig,
    CurvatureReport,
    QuarticForm,
    curv,
    isotropy_defect,
    max_on_sphere,
    normal_curvature_form,
    petrunin_bound,
    petrunin_product_check,
    waring_cone_membership,
)
from .design import DesignSearchProblem, clifford_subtorus, delta_table, search, solve_weights
from .freeness import dimension_thresholds, is_free, is_m_free, osc2_rank
from .immersion import (
    FrequencySpec,
    GeneralImmersion,
    enclosing_radius,
    evaluate,
    homothety_compress,
    induced_metric,
    is_isometric,
    jet2,
)

__version__ = "0.1.0"
