"""Preference-based system ranking from per-utterance subjective scores."""
from .aggregate import (AggMethod, BtlConfig, ComparisonTally, UtilityScores, agg_btl, agg_dc, agg_mean,
                        agg_ps, agg_wc, tally)
from .dataset import (Dataset, Rating, Scale, SynthConfig, SystemTruth, generate_synthetic, load_csv,
                      normalize, save_csv, split_holdout, system_truth)
from .errors import ParseError, PrefSQAError, ValidationError
from .metrics import lcc, paired_t_test, rank, srcc
from .pairgen import (PairMethod, PairPlan, RatingPair, gen_bs, gen_link, gen_rand, realize_plan,
                      sample_training_pair)
from .preference import (Outcome, ThresholdMethod, Thresholds, alpha, classify, fit_eer_thresholds,
                         pref_gt, pref_pred, thresholds_er, thresholds_nd)
from .simulate import SimConfig, SimResult, run_bound_simulation, run_model_eval
from .trainer import Objective, ScoreModel, TrainConfig, grad_check, predict, train

__version__ = "0.1.0"
