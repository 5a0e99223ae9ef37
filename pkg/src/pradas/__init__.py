"""FDR-controlled feature selection via prior-assisted data splitting.

The package builds mirror statistics from a data split, estimates the false
discovery proportion from their negative tail, and selects features with the
smallest qualifying threshold.  Priors enter twice: through Bayes-optimal
mirror statistics (posterior density ratios of the held-out summary against
its negation) and through adaptive, per-feature choice of the split ratio by
optimal stopping over a nested-split filtration.
"""

from .datamodel import (Dataset, Hyperpriors, Metrics, MirrorKind, MirrorVector, ModelKind,
                        SelectionResult, SlabKind, SlabSpec, SpikeSlabPrior, SplitPlan,
                        derive_seed, make_split_plan, split_at)
from .samplers import (NU_LOGISTIC, W2_LOGISTIC, NormalMeansPosterior, PosteriorDraws,
                       gibbs_linear, gibbs_logistic, inclusion_rates, normal_means_posterior)
from .estimators import PValueReport, SplitEstimate, full_data_pvalues, logistic_mle, ols_fit
from .mirrors import (bayes_optimal, blockwise_closed_form, decompose, grouped_closed_form,
                      marginal_optimal, sign_sum, sign_sum_means)
from .seqstep import fdp_hat, select, select_two_stage
from .adms import (DEFAULT_RATIOS, RewardPath, SnellSolution, StoppingDecision, StoppingTree,
                   adms_snell, adms_threshold, assemble_adaptive_mirror, chain_envelope,
                   prescreen, reward_path, simulate_chain_path, snell_exact)
from .baselines import bh_select, lfdr_normal_means, lfdr_select
from .experiments import (GeneratorSpec, HammingCurve, MethodSpec, ReplicationResult,
                          RunOptions, Scenario, aggregate, draw_rare_weak, generate,
                          hamming_study, run_many, run_method, scenario_spec)
from .cli import ingest_csv, run_config, select_command

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Hyperpriors", "Metrics", "MirrorKind", "MirrorVector", "ModelKind",
    "SelectionResult", "SlabKind", "SlabSpec", "SpikeSlabPrior", "SplitPlan",
    "derive_seed", "make_split_plan", "split_at",
    "NU_LOGISTIC", "W2_LOGISTIC", "NormalMeansPosterior", "PosteriorDraws",
    "gibbs_linear", "gibbs_logistic", "inclusion_rates", "normal_means_posterior",
    "PValueReport", "SplitEstimate", "full_data_pvalues", "logistic_mle", "ols_fit",
    "bayes_optimal", "blockwise_closed_form", "decompose", "grouped_closed_form",
    "marginal_optimal", "sign_sum", "sign_sum_means",
    "fdp_hat", "select", "select_two_stage",
    "DEFAULT_RATIOS", "RewardPath", "SnellSolution", "StoppingDecision", "StoppingTree",
    "adms_snell", "adms_threshold", "assemble_adaptive_mirror", "chain_envelope",
    "prescreen", "reward_path", "simulate_chain_path", "snell_exact",
    "bh_select", "lfdr_normal_means", "lfdr_select",
    "GeneratorSpec", "HammingCurve", "MethodSpec", "ReplicationResult", "RunOptions",
    "Scenario", "aggregate", "draw_rare_weak", "generate", "hamming_study",
    "run_many", "run_method", "scenario_spec",
    "ingest_csv", "run_config", "select_command",
]
