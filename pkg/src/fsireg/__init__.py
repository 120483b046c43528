"""Single-index Frechet regression for metric-space-valued responses."""

__version__ = "0.1.0"

from .fsi import (
    FsiConfig,
    FsiFit,
    IndexParam,
    fit_fsi,
    loocv_bandwidth,
    normalize_identifiable,
    polar_to_theta,
    predict,
    theta_to_polar,
    wn_criterion,
    wn_proxy_sphere,
)
from .geometry import (
    Euclidean1D,
    QuantileGrid,
    Sphere,
    Wasserstein1D,
    pav,
    sphere_distance,
    sphere_exp,
    sphere_frechet_mean,
    sphere_log,
    wasserstein_distance,
    weighted_frechet_mean,
)
from .regression import (
    FittedObject,
    RegressionDataset,
    global_frechet_fit,
    local_frechet_at,
    multivariate_local_frechet_at,
    nadaraya_watson_sphere_init,
    standardize,
)
from .smoothing import (
    DegenerateWindow,
    Kernel,
    get_kernel,
    multivariate_local_weights,
    projected_local_weights,
    scalar_local_weights,
)
