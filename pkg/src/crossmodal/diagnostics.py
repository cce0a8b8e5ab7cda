"""Finite-difference checks of every gradient path used in training."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..density import (DensityKind, DiagonalGaussian, EmConfig, GmmEmFitter, LayerDensitySet,
                       fit_gaussian)
from ..netcore import (GradCheckResult, LinearLayer, Mlp, RngState, Tensor, finite_diff_check,
                       mlp_backward, mlp_forward, softmax_cross_entropy)
from ..netcore.layers import layer_param_names, named_layer_parameters
from .network import REGULARIZED_LAYERS, ArchConfig, CrossModalNet, ModalityBranch, SharedTrunk
from .objective import regularized_objective

logger = logging.getLogger(__name__)

LossFn = Callable[[], Tuple[float, Dict[str, Tensor]]]


@dataclass
class GradCheckCase:
    name: str
    seed: int
    result: GradCheckResult


@dataclass
class GradCheckSuiteResult:
    tolerance: float
    cases: List[GradCheckCase] = field(default_factory=list)

    @property
    def worst(self) -> Optional[GradCheckCase]:
        if not self.cases:
            return None
        return max(self.cases, key=lambda case: case.result.max_rel_error)

    @property
    def passed(self) -> bool:
        return all(case.result.passed(self.tolerance) for case in self.cases)


def _corrupted(loss_fn: LossFn, corruption: float) -> LossFn:
    if not corruption:
        return loss_fn

    def wrapped():
        loss, grads = loss_fn()
        return loss, {name: grad + corruption for name, grad in grads.items()}
    return wrapped


def _mlp_case(rng: RngState) -> Tuple[LossFn, Dict[str, Tensor]]:
    dims = [5, 7, 6, 4]
    net = Mlp([LinearLayer.initialize(dims[j], dims[j + 1], 0.5, rng.child(f"layer{j}"))
               for j in range(len(dims) - 1)])
    for j, layer in enumerate(net.layers):
        layer.bias[:] = rng.child(f"bias{j}").generator.normal(0.0, 0.1, size=layer.out_dim)
    x = rng.child("x").generator.normal(size=(6, dims[0]))
    y = rng.child("y").generator.integers(0, dims[-1], size=6)
    names = [f"layer{j}" for j in range(len(net.layers))]
    params = named_layer_parameters(list(zip(names, net.layers)))

    def loss_fn():
        taps = mlp_forward(net, x)
        loss, grad = softmax_cross_entropy(taps.output, y)
        layer_grads, _ = mlp_backward(net, taps, grad)
        grads = {}
        for name, layer_grad in zip(names, layer_grads):
            weight_name, bias_name = layer_param_names(name)
            grads[weight_name], grads[bias_name] = layer_grad.weight, layer_grad.bias
        return loss, grads
    return loss_fn, params


def _penalty_case(rng: RngState, kind: DensityKind) -> Tuple[LossFn, Dict[str, Tensor]]:
    generator = rng.generator
    dim = 5
    if kind is DensityKind.GAUSSIAN:
        model = DiagonalGaussian(mean=generator.normal(size=dim),
                                 variance=generator.uniform(0.5, 2.0, size=dim))
    else:
        samples = np.concatenate([generator.normal(-2.0, 1.0, size=(40, dim)),
                                  generator.normal(2.0, 1.0, size=(40, dim))])
        model = GmmEmFitter(EmConfig(n_components=3, variance_floor=1e-2), rng.child("em")).fit(samples)
    params = {"h": generator.normal(size=(4, dim))}

    def loss_fn():
        penalty, grad = model.penalty(params["h"])
        return float(np.mean(penalty)), {"h": grad / params["h"].shape[0]}
    return loss_fn, params


def _objective_case(rng: RngState, kinds: Sequence[DensityKind]) -> Tuple[LossFn, Dict[str, Tensor]]:
    """Full regularized objective; ``kinds[i]`` is the density fitted at REGULARIZED_LAYERS[i]."""
    arch = ArchConfig(shared_dim=8, hidden_dim=8, encoder_width=8, encoder_layers=2, init_std=0.5)
    trunk = SharedTrunk.initialize(4, arch, rng.child("trunk"))
    branch = ModalityBranch.initialize("check", 6, arch, rng.child("branch"))
    net = CrossModalNet({"check": branch}, trunk)
    for name, layer in net.named_layers():
        layer.bias[:] = rng.child(f"bias/{name}").generator.normal(0.0, 0.1, size=layer.out_dim)
    x = rng.child("x").generator.normal(size=(16, 6))
    y = rng.child("y").generator.integers(0, 4, size=16)

    taps = net.forward("check", x)
    models = {}
    for layer, kind in zip(REGULARIZED_LAYERS, kinds):
        activations = taps[net.tap_index("check", layer)]
        if kind is DensityKind.GAUSSIAN:
            models[layer] = fit_gaussian(activations, variance_floor=1e-2)
        else:
            fitter = GmmEmFitter(EmConfig(n_components=3, variance_floor=1e-2), rng.child(f"em/{layer}"))
            models[layer] = fitter.fit(activations)
    # the set's kind only names serialized blobs; penalties dispatch on each model
    densities = LayerDensitySet(kind=kinds[-1], models=models)
    lambdas = {layer: 0.1 for layer in REGULARIZED_LAYERS}

    def loss_fn():
        result = regularized_objective(net, "check", x, y, densities, lambdas)
        return result.loss, result.grads
    return loss_fn, net.named_parameters()


GAUSSIAN_ONLY = (DensityKind.GAUSSIAN,) * len(REGULARIZED_LAYERS)
GMM_ONLY = (DensityKind.GMM,) * len(REGULARIZED_LAYERS)
MIXED = (DensityKind.GMM, DensityKind.GAUSSIAN, DensityKind.GMM)

CASES = {
    "mlp_cross_entropy": _mlp_case,
    "gaussian_penalty": lambda rng: _penalty_case(rng, DensityKind.GAUSSIAN),
    "gmm_penalty": lambda rng: _penalty_case(rng, DensityKind.GMM),
    "objective_gaussian": lambda rng: _objective_case(rng, GAUSSIAN_ONLY),
    "objective_gmm": lambda rng: _objective_case(rng, GMM_ONLY),
    "objective_mixed": lambda rng: _objective_case(rng, MIXED),
}

# Central-difference roundoff is about machine epsilon * |loss| / epsilon, near
# 1e-10 here. Absolute discrepancies up to ROUNDOFF_FLOOR count as exact, so tiny
# rectifier gradients are not judged on that noise; atol=0.0 is the bare relative rule.
ROUNDOFF_FLOOR = 1e-7


def run_gradcheck_suite(seeds: Sequence[int] = tuple(range(10)), tolerance: float = 1e-5,
                        epsilon: float = 1e-6, atol: float = ROUNDOFF_FLOOR, corruption: float = 0.0,
                        cases: Optional[Sequence[str]] = None) -> GradCheckSuiteResult:
    """
    Check analytic gradients of the network, both penalties and the full
    regularized objective (Gaussian, GMM and mixed per-layer densities)
    against central differences, once per seed.

    Args:
        seeds: One run of every case per seed
        tolerance: Maximum accepted relative error
        epsilon: Central-difference step
        atol: Absolute discrepancy treated as exact; ROUNDOFF_FLOOR by default
        corruption: Constant added to every analytic gradient, for detector checks
        cases: Subset of case names; all cases when None

    Returns:
        Per-case results and the overall verdict
    """
    suite = GradCheckSuiteResult(tolerance=tolerance)
    for name in (cases or list(CASES)):
        if name not in CASES:
            raise ValueError(f"unknown gradient-check case {name!r}; expected one of {list(CASES)}")
        for seed in seeds:
            rng = RngState(seed).child(name)
            loss_fn, params = CASES[name](rng)
            result = finite_diff_check(_corrupted(loss_fn, corruption), params, epsilon=epsilon,
                                       atol=atol)
            suite.cases.append(GradCheckCase(name=name, seed=seed, result=result))
            logger.debug(f"{name} seed {seed}: max relative error {result.max_rel_error:.3e}")
    worst = suite.worst
    if worst is not None:
        logger.info(f"Gradient check: {len(suite.cases)} cases, worst {worst.name} seed {worst.seed} "
                    f"rel err {worst.result.max_rel_error:.3e} ({'pass' if suite.passed else 'FAIL'})")
    return suite
