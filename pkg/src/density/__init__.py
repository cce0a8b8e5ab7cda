from .gaussian import DiagonalGaussian, fit_gaussian, gaussian_log_density, gaussian_penalty
from .gmm import (DiagonalGmm, EmConfig, GmmEmFitter, fit_gmm_em, gmm_log_density,
                  gmm_penalty, responsibilities)
from .layer_set import (DensityKind, DensityModel, LayerDensitySet, collect_activations,
                        fit_layer_densities)
from .serialization import (decode_density, density_path, encode_density,
                            load_density_set, save_density_set)

__all__ = [
    'DiagonalGaussian', 'fit_gaussian', 'gaussian_log_density', 'gaussian_penalty',
    'DiagonalGmm', 'EmConfig', 'GmmEmFitter', 'fit_gmm_em', 'gmm_log_density',
    'gmm_penalty', 'responsibilities',
    'DensityKind', 'DensityModel', 'LayerDensitySet', 'collect_activations',
    'fit_layer_densities',
    'decode_density', 'density_path', 'encode_density', 'load_density_set', 'save_density_set',
]
