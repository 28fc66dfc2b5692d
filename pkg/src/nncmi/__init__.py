"""Nearest-neighbour conditional mutual information in arbitrary metric spaces."""
from nncmi.generators import (MarkovTreeParams, XYLattice, XYParams, gaussian_cmi_oracle,
                              gaussian_mi_oracle, sample_markov_tree, xy_series, xy_step)
from nncmi.histogram import BinningSpec, choose_bins, histogram_cmi
from nncmi.kernels import BACKEND
from nncmi.kl import (CmiEstimate, estimate_cmi, estimate_mi, interaction_information, raw_cmi,
                      total_bias)
from nncmi.ksg import ksg_cmi, ksg_mi
from nncmi.metric import Block, Dataset, NeighbourIndex, build_index, get_metric
from nncmi.transfer import EmbeddingSpec, embed, transfer_entropy

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BinningSpec", "Block", "CmiEstimate", "Dataset", "EmbeddingSpec",
    "MarkovTreeParams", "NeighbourIndex", "XYLattice", "XYParams", "build_index",
    "choose_bins", "embed", "estimate_cmi", "estimate_mi", "gaussian_cmi_oracle",
    "gaussian_mi_oracle", "get_metric", "histogram_cmi", "interaction_information",
    "ksg_cmi", "ksg_mi", "raw_cmi", "sample_markov_tree", "total_bias", "transfer_entropy",
    "xy_series", "xy_step",
]
