"""polarsep: diffuse/specular separation for four-angle polarization images
via tensor low-rank + sparse decomposition with a phase-angle regularizer."""

from .polar_model import (ANGLES_DEG, ANGLES_RAD, ChromaticityImage,
                          IlluminationGamma, PolarDecomposition, PolarStack,
                          chromaticity, evaluate_cosine_model, fit_cosine_model,
                          normalize_illumination, reduce_phase)
from .tensor_core import (SliceSvdError, tensor_nuclear_norm, tsvt,
                          weighted_shrink)
from .representations import (CandidateMap, RepresentationTensor, TensorLayout,
                              build_tensor, extract_diffuse, fold,
                              gather_representations, initialize_diffuse,
                              select_candidates, unfold)
from .decomposer import (DecompositionResult, SolverConfig, SolverDivergence,
                         auto_lambda, phase_project, solve, tau_weight)
from .synth import (GroundTruthScene, SceneSpec, normals_from_depth, render,
                    scene_suite)
from .metrics import MetricReport, compare, psnr, ssim
from .pipeline import (PipelineConfig, PipelineResult, demosaic, pack_mosaic,
                       run_pipeline, run_suite, separate)

__version__ = "0.1.0"
