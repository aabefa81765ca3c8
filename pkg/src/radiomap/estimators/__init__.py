from .base import GridMapEstimate, MapEstimator, NumericalError
from .frade import FradeEstimator, frade_assemble_input, traditional_channels
from .network import NetworkEstimator, NetworkWeights, network_backward, network_forward
from .traditional import (
    Kernel,
    KnnEstimator,
    KnnParams,
    KrigingEstimator,
    KrigingParams,
    KrrEstimator,
    KrrParams,
    kernel_matrix,
    knn_estimate,
    kriging_estimate,
    krr_fit,
    krr_objective,
)
