"""VICReg pre-training for graphs with node, dimension and joint loss sampling."""

from .graph import (AugmentationConfig, Graph, SbmConfig, ViewPair, augment, generate_sbm,
                    load_graph)
from .objective import (LossBreakdown, LossWeights, covariance_loss, covariance_matrix,
                        invariance_loss, variance_loss, vicreg_loss)
from .samplers import (SamplingPlan, forman_ricci, ricci_node_probs, ricci_node_sample,
                       rotating_partition, uniform_dim_sample, uniform_node_sample)

__version__ = "0.1.0"
