"""Similarity-based clustering and co-clustering for collaborative filtering
with information-rich and information-sparse users and items."""

from .ratings import (ERASED, DomainError, MaskSplit, ParseError, RatingError,
                      RatingMatrix, flip_noise, load_ratings, quantize_binary,
                      split_mask)
from .synth import (ClusterModel, GeneratedInstance, InfeasibleError,
                    PreferenceMatrix, SynthConfig, apply_biased_channel,
                    apply_erasure, expected_observations, expected_similarity,
                    generate_instance, generate_preferences, thresholds)
from .similarity import (UNDEFINED, SimilarityTable, co_rating,
                         modified_normalized_similarity, normalized_similarity,
                         similarity, similarity_table)
from .algorithms import (UNPREDICTED, CompletedMatrix, add_user_incremental,
                         cor, estimate_T, estimate_cluster_size, fit_state,
                         hcor, hicr, hucr, icr, paf_baseline, ucr)

__version__ = "0.1.0"
