"""saliencylab: attribution decompositions, saliency maps, bias decay, and
perturbation-based evaluation for small self-contained ReLU networks."""

from .attribution import (AttributionMap, DecompositionReport, PsiConfig,
                          PSI_AGGREGATE, PSI_SINGLE_LAYER, SaliencyMap,
                          activity_attribution, aggregate_activity_saliency,
                          bias_attribution, decomposition_report,
                          fullgrad_saliency, gradcam_attribution,
                          gradient_saliency, gradient_times_input, psi, rescale)
from .datasets import Dataset, ingest_idx, load_dataset_manifest, synth_patch_dataset
from .decay import (DecaySchedule, DecayTrajectory, DistillConfig,
                    distillation_loss, recovery_report, run_decay)
from .nets import (Checkpoint, NetworkSpec, build_network, evaluate_topk,
                   fit_output_regression, forward_logits, forward_run,
                   linear_classifier, logit_correlation, num_units, resnet_mini,
                   scale_shift_sweep, vgg_mini, zero_bias)
from .perturbation import (EvalRecord, NoisePool, PerturbConfig, compare_methods,
                           evaluate_method, noise_reference, perturb_until_flip)
from .resize import resize_map
from .stats import WilcoxonResult, summarize, wilcoxon_signed_rank
from .training import TrainConfig, train_classifier

__version__ = "0.1.0"
