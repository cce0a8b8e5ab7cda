import dataclasses
import json
import logging

import numpy as np
import pytest

from src.crossmodal import (LAYER_IDS, CrossModalNet, CurriculumController, CurriculumSchedule,
                            ModalityBranch, Phase, RegConfig, StrategyKind, StrategySpec,
                            anchor_as_model, classification_accuracy, create_strategy,
                            decode_checkpoint, encode_checkpoint, extract_features,
                            fit_anchor_densities, is_trainable, load_checkpoint,
                            placesnet_baseline, regularized_objective, run_gradcheck_suite,
                            save_checkpoint, train_anchor, train_strategy, trainable_set)
from src.crossmodal.trainer import _step
from src.density import DensityKind, EmConfig, LayerDensitySet
from src.errors import (ConfigError, DivergenceError, FormatError, InsufficientDataError,
                        MissingArtifactError)
from src.netcore import RngState, softmax_cross_entropy
from src.synthdata import Split


def _spec(kind, schedule, lambdas=None):
    reg = RegConfig() if lambdas is None else RegConfig(lambdas=lambdas)
    return StrategySpec(kind=kind, curriculum=schedule, reg=reg)


def _same_parameters(a, b):
    params_a, params_b = a.named_parameters(), b.named_parameters()
    return params_a.keys() == params_b.keys() and all(
        np.array_equal(params_a[name], params_b[name]) for name in params_a)


@pytest.fixture
def gauss_densities(tiny_anchor, tiny_dataset):
    return fit_anchor_densities(tiny_anchor, tiny_dataset, DensityKind.GAUSSIAN,
                                RngState(0).child("densities/gaussian"), variance_floor=0.05)


@pytest.fixture
def gmm_densities(tiny_anchor, tiny_dataset):
    return fit_anchor_densities(tiny_anchor, tiny_dataset, DensityKind.GMM,
                                RngState(0).child("densities/gmm"),
                                em_config=EmConfig(n_components=3, variance_floor=0.05),
                                variance_floor=0.05)


class TestNetwork:
    def test_tap_indices(self, tiny_anchor):
        assert [tiny_anchor.tap_index("natural", layer) for layer in LAYER_IDS] == [1, 2, 3, 4]
        with pytest.raises(ValueError):
            tiny_anchor.tap_index("natural", "conv1")
        with pytest.raises(KeyError):
            tiny_anchor.tap_index("sketch", "fc7")

    def test_parameter_ids(self, tiny_anchor):
        assert sorted(tiny_anchor.named_parameters()) == sorted([
            "branch/natural/enc0.weight", "branch/natural/enc0.bias",
            "branch/natural/enc1.weight", "branch/natural/enc1.bias",
            "trunk/fc6.weight", "trunk/fc6.bias", "trunk/fc7.weight", "trunk/fc7.bias",
            "trunk/classifier.weight", "trunk/classifier.bias"])

    def test_shared_trunk_identity(self, tiny_dataset, tiny_anchor, tiny_arch):
        model = create_strategy(StrategySpec(kind=StrategyKind.BL_SHARED_UPPER)).build_model(
            tiny_dataset, tiny_anchor, tiny_arch, RngState(0))
        assert len(model.unique_networks()) == 1
        net = model.network("text")
        assert net.chain("text").layers[-1] is net.chain("sketch").layers[-1]
        assert net.trunk is not tiny_anchor.trunk
        assert np.array_equal(net.trunk.fc7.weight, tiny_anchor.trunk.fc7.weight)
        assert net.branch("text").input_dim == 10

    def test_branch_width_must_match_trunk(self, tiny_anchor, tiny_arch):
        wide = dataclasses.replace(tiny_arch, shared_dim=9)
        branch = ModalityBranch.initialize("sketch", 14, wide, RngState(0))
        with pytest.raises(ValueError):
            CrossModalNet({"sketch": branch}, tiny_anchor.trunk)

    def test_extract_features(self, tiny_anchor, tiny_dataset):
        model = anchor_as_model(tiny_anchor)
        x, _ = tiny_dataset.split("natural", Split.VAL)
        features = extract_features(model, "natural", x, "fc6")
        assert features.shape == (24, 8)
        assert np.all(features >= 0)
        with pytest.raises(ValueError):
            extract_features(model, "natural", x, "pool5")


class TestStrategies:
    @pytest.mark.parametrize("kind,phase,expected", [
        (StrategyKind.BL_INDIVIDUAL, Phase.FREE, {"private/sketch"}),
        (StrategyKind.BL_SHARED_SCRATCH, Phase.FREE, {"branch/sketch", "trunk"}),
        (StrategyKind.BL_SHARED_UPPER, Phase.FREE, {"branch/sketch", "trunk"}),
        (StrategyKind.A_TUNE_FROZEN, Phase.FROZEN, {"branch/sketch"}),
        (StrategyKind.A_TUNE_FREE, Phase.FROZEN, {"branch/sketch"}),
        (StrategyKind.A_TUNE_FREE, Phase.FREE, {"branch/sketch", "trunk"}),
        (StrategyKind.B_GAUSS, Phase.FREE, {"branch/sketch", "trunk"}),
        (StrategyKind.B_GMM, Phase.FREE, {"branch/sketch", "trunk"}),
        (StrategyKind.C_JOINT, Phase.FROZEN, {"branch/sketch"}),
        (StrategyKind.C_JOINT, Phase.FREE, {"branch/sketch", "trunk"}),
    ])
    def test_trainable_set(self, kind, phase, expected):
        assert trainable_set(StrategySpec(kind=kind), phase, "sketch") == frozenset(expected)

    def test_group_matching(self):
        groups = {"branch/sketch", "trunk"}
        assert is_trainable("trunk/fc6.weight", groups)
        assert is_trainable("branch/sketch/enc0.bias", groups)
        assert not is_trainable("branch/sketch2/enc0.bias", groups)
        assert not is_trainable("branch/text/enc0.weight", groups)

    def test_phase_schedule(self, tiny_schedule):
        free = create_strategy(_spec(StrategyKind.A_TUNE_FREE, tiny_schedule))
        assert free.phase_at(9) is Phase.FROZEN
        assert free.phase_at(10) is Phase.FREE
        frozen = create_strategy(_spec(StrategyKind.A_TUNE_FROZEN, tiny_schedule))
        assert frozen.phase_at(19) is Phase.FROZEN
        assert create_strategy(_spec(StrategyKind.B_GMM, tiny_schedule)).phase_at(0) is Phase.FREE

    def test_spec_properties(self):
        assert StrategySpec(kind="b_gauss").density_kind is DensityKind.GAUSSIAN
        assert StrategySpec(kind="c_joint").density_kind is DensityKind.GMM
        assert StrategySpec(kind="a_tune_free").density_kind is None
        assert not StrategySpec(kind="bl_shared_scratch").needs_anchor
        assert StrategySpec(kind="bl_individual").needs_anchor

    def test_regularization_skips_anchor(self, tiny_schedule):
        strategy = create_strategy(_spec(StrategyKind.C_JOINT, tiny_schedule))
        assert strategy.lambdas(Phase.FROZEN, "sketch", "natural") == {}
        assert strategy.lambdas(Phase.FREE, "natural", "natural") == {}
        assert strategy.lambdas(Phase.FREE, "sketch", "natural") == {
            "shared_in": 0.1, "fc6": 0.1, "fc7": 0.1}

    def test_individual_copies_anchor_where_dims_match(self, tiny_dataset, tiny_anchor, tiny_arch):
        model = create_strategy(StrategySpec(kind=StrategyKind.BL_INDIVIDUAL)).build_model(
            tiny_dataset, tiny_anchor, tiny_arch, RngState(0))
        assert len(model.unique_networks()) == 3
        sketch = model.network("sketch")
        anchor_encoder = tiny_anchor.branch("natural").encoder.layers[0].weight
        assert np.array_equal(sketch.branch("sketch").encoder.layers[0].weight, anchor_encoder)
        assert model.network("text").branch("text").input_dim == 10
        assert all(name.startswith("private/sketch/") for name in sketch.named_parameters())

    def test_anchor_required(self, tiny_dataset, tiny_arch):
        with pytest.raises(ValueError):
            create_strategy(StrategySpec(kind=StrategyKind.A_TUNE_FREE)).build_model(
                tiny_dataset, None, tiny_arch, RngState(0))

    def test_frozen_phase_needs_freeze_iters(self):
        schedule = CurriculumSchedule(total_iters=10, freeze_iters=0)
        with pytest.raises(ConfigError):
            _spec(StrategyKind.A_TUNE_FREE, schedule).validate()
        _spec(StrategyKind.B_GMM, schedule).validate()

    def test_schedule_validation(self):
        with pytest.raises(ConfigError):
            CurriculumSchedule(total_iters=5, freeze_iters=6).validate()
        with pytest.raises(ConfigError):
            CurriculumSchedule(lr=0.0).validate()
        with pytest.raises(ConfigError):
            RegConfig(lambdas={"logits": 0.1}).validate()


class TestObjective:
    def test_zero_lambda_is_plain_cross_entropy(self, tiny_anchor, tiny_dataset, gauss_densities):
        x, y = tiny_dataset.split("natural", Split.TRAIN)
        plain = regularized_objective(tiny_anchor, "natural", x[:16], y[:16])
        zeroed = regularized_objective(tiny_anchor, "natural", x[:16], y[:16], gauss_densities,
                                       {"shared_in": 0.0, "fc6": 0.0, "fc7": 0.0})
        taps = tiny_anchor.forward("natural", x[:16])
        expected, _ = softmax_cross_entropy(taps.output, y[:16])
        assert plain.loss == zeroed.loss == expected
        assert zeroed.reg_terms == {} and zeroed.lambdas == {}
        assert all(np.array_equal(plain.grads[n], zeroed.grads[n]) for n in plain.grads)

    def test_loss_adds_weighted_penalties(self, tiny_anchor, tiny_dataset, gauss_densities):
        x, y = tiny_dataset.split("natural", Split.TRAIN)
        result = regularized_objective(tiny_anchor, "natural", x[:16], y[:16], gauss_densities,
                                       {"fc6": 0.5, "fc7": 0.0})
        assert list(result.reg_terms) == ["fc6"]
        assert result.loss == pytest.approx(result.ce_loss + 0.5 * result.reg_terms["fc6"])

    def test_mixed_densities_add_their_own_penalties(self, tiny_anchor, tiny_dataset,
                                                     gauss_densities, gmm_densities):
        x, y = tiny_dataset.split("natural", Split.TRAIN)
        sources = {"shared_in": gmm_densities, "fc6": gauss_densities, "fc7": gmm_densities}
        mixed = LayerDensitySet(kind=DensityKind.GMM,
                                models={layer: source[layer] for layer, source in sources.items()})
        result = regularized_objective(tiny_anchor, "natural", x[:16], y[:16], mixed,
                                       {layer: 0.1 for layer in sources})
        taps = tiny_anchor.forward("natural", x[:16])
        for layer, source in sources.items():
            penalty, _ = source.penalty(layer, taps[tiny_anchor.tap_index("natural", layer)])
            assert result.reg_terms[layer] == pytest.approx(float(np.mean(penalty)))
        assert result.loss == pytest.approx(result.ce_loss + 0.1 * sum(result.reg_terms.values()))

    def test_invalid_lambdas(self, tiny_anchor, tiny_dataset, gauss_densities):
        x, y = tiny_dataset.split("natural", Split.TRAIN)
        with pytest.raises(ConfigError):
            regularized_objective(tiny_anchor, "natural", x, y, gauss_densities, {"fc6": -0.1})
        with pytest.raises(ConfigError):
            regularized_objective(tiny_anchor, "natural", x, y, gauss_densities, {"logits": 0.1})
        with pytest.raises(ConfigError):
            regularized_objective(tiny_anchor, "natural", x, y, None, {"fc6": 0.1})

    def test_gradcheck_suite(self):
        suite = run_gradcheck_suite(seeds=range(2))
        assert suite.passed
        assert {case.name for case in suite.cases} == {
            "mlp_cross_entropy", "gaussian_penalty", "gmm_penalty", "objective_gaussian",
            "objective_gmm", "objective_mixed"}
        assert suite.worst.result.max_rel_error < 1e-5

    def test_penalties_pass_bare_relative_rule(self):
        suite = run_gradcheck_suite(seeds=range(3), atol=0.0,
                                    cases=["gaussian_penalty", "gmm_penalty"])
        assert suite.passed

    def test_gradcheck_detects_corruption(self):
        suite = run_gradcheck_suite(seeds=[0], corruption=1e-3, cases=["objective_gmm"])
        assert not suite.passed
        with pytest.raises(ValueError):
            run_gradcheck_suite(seeds=[0], cases=["conv"])


class TestTraining:
    def test_anchor_training_is_deterministic(self, tiny_dataset, tiny_arch, tiny_anchor):
        schedule = CurriculumSchedule(total_iters=150, freeze_iters=0, lr=0.05, batch_size=16)
        again = train_anchor(tiny_dataset, tiny_arch, schedule, RngState(0).child("anchor"))
        assert _same_parameters(again, tiny_anchor)

    def test_anchor_learns(self, tiny_dataset, tiny_anchor):
        accuracy = classification_accuracy(anchor_as_model(tiny_anchor), tiny_dataset)
        assert accuracy["natural"] > 0.4

    def test_anchor_needs_every_class(self, tiny_dataset, tiny_arch):
        block = tiny_dataset.blocks["natural"]
        blocks = dict(tiny_dataset.blocks)
        blocks["natural"] = block.select(~((block.split == Split.TRAIN) & (block.labels == 0)))
        dataset = dataclasses.replace(tiny_dataset, blocks=blocks)
        with pytest.raises(InsufficientDataError):
            train_anchor(dataset, tiny_arch, CurriculumSchedule(total_iters=1), RngState(0))

    def test_frozen_tuning_keeps_trunk(self, tiny_dataset, tiny_anchor, tiny_arch, tiny_schedule):
        result = train_strategy(_spec(StrategyKind.A_TUNE_FROZEN, tiny_schedule), tiny_dataset,
                                tiny_anchor, tiny_arch, RngState(0).child("train"))
        net = result.model.network("sketch")
        for trained, original in zip(net.trunk.layers, tiny_anchor.trunk.layers):
            assert np.array_equal(trained.weight, original.weight)
            assert np.array_equal(trained.bias, original.bias)
        assert not np.array_equal(net.branch("natural").encoder.layers[0].weight,
                                  tiny_anchor.branch("natural").encoder.layers[0].weight)

    def test_training_leaves_anchor_untouched(self, tiny_dataset, tiny_anchor, tiny_arch,
                                              tiny_schedule):
        before = tiny_anchor.copy()
        train_strategy(_spec(StrategyKind.A_TUNE_FREE, tiny_schedule), tiny_dataset, tiny_anchor,
                       tiny_arch, RngState(0).child("train"))
        assert _same_parameters(before, tiny_anchor)

    def test_stat_reg_with_zero_lambdas_equals_shared_upper(self, tiny_dataset, tiny_anchor,
                                                           tiny_arch, tiny_schedule):
        zero = {"shared_in": 0.0, "fc6": 0.0, "fc7": 0.0}
        upper = train_strategy(_spec(StrategyKind.BL_SHARED_UPPER, tiny_schedule), tiny_dataset,
                               tiny_anchor, tiny_arch, RngState(0).child("train"))
        gmm = train_strategy(_spec(StrategyKind.B_GMM, tiny_schedule, zero), tiny_dataset,
                             tiny_anchor, tiny_arch, RngState(0).child("train"))
        assert _same_parameters(upper.model, gmm.model)

    def test_joint_with_zero_lambdas_equals_tune_free(self, tiny_dataset, tiny_anchor, tiny_arch,
                                                      tiny_schedule):
        zero = {"shared_in": 0.0, "fc6": 0.0, "fc7": 0.0}
        free = train_strategy(_spec(StrategyKind.A_TUNE_FREE, tiny_schedule), tiny_dataset,
                              tiny_anchor, tiny_arch, RngState(0).child("train"))
        joint = train_strategy(_spec(StrategyKind.C_JOINT, tiny_schedule, zero), tiny_dataset,
                               tiny_anchor, tiny_arch, RngState(0).child("train"))
        assert _same_parameters(free.model, joint.model)

    def test_full_freeze_equals_frozen_tuning(self, tiny_dataset, tiny_anchor, tiny_arch):
        schedule = CurriculumSchedule(total_iters=12, freeze_iters=12, lr=0.05, batch_size=16)
        free = train_strategy(_spec(StrategyKind.A_TUNE_FREE, schedule), tiny_dataset,
                              tiny_anchor, tiny_arch, RngState(3))
        frozen = train_strategy(_spec(StrategyKind.A_TUNE_FROZEN, schedule), tiny_dataset,
                                tiny_anchor, tiny_arch, RngState(3))
        assert _same_parameters(free.model, frozen.model)

    def test_regularized_records(self, tmp_path, tiny_dataset, tiny_anchor, tiny_arch,
                                 tiny_schedule, gauss_densities):
        log_path = tmp_path / "logs" / "train_b_gauss.jsonl"
        result = train_strategy(_spec(StrategyKind.B_GAUSS, tiny_schedule), tiny_dataset,
                                tiny_anchor, tiny_arch, RngState(0).child("train"),
                                densities=gauss_densities, log_every=5, log_path=log_path)
        assert len(result.records) == 5 * 3
        lines = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert lines == result.records
        assert [r["iteration"] for r in lines[::3]] == [0, 5, 10, 15, 19]
        anchor_record = next(r for r in lines if r["modality"] == "natural")
        sketch_record = next(r for r in lines if r["modality"] == "sketch")
        assert anchor_record["lambdas"] == {} and anchor_record["reg"] == {}
        assert set(sketch_record["reg"]) == {"shared_in", "fc6", "fc7"}
        assert sketch_record["total"] == pytest.approx(
            sketch_record["ce_loss"] + 0.1 * sum(sketch_record["reg"].values()))

    def test_gmm_joint_training_runs(self, tiny_dataset, tiny_anchor, tiny_arch, tiny_schedule,
                                     gmm_densities):
        result = train_strategy(_spec(StrategyKind.C_JOINT, tiny_schedule), tiny_dataset,
                                tiny_anchor, tiny_arch, RngState(0).child("train"),
                                densities=gmm_densities, log_every=1)
        frozen = [r for r in result.records if r["phase"] == "frozen"]
        free = [r for r in result.records if r["phase"] == "free" and r["modality"] == "text"]
        assert all(r["lambdas"] == {} for r in frozen)
        assert len(free) == 10 and all(r["reg"] for r in free)

    def test_missing_densities(self, tiny_dataset, tiny_anchor, tiny_arch, tiny_schedule):
        with pytest.raises(ConfigError):
            train_strategy(_spec(StrategyKind.B_GAUSS, tiny_schedule), tiny_dataset, tiny_anchor,
                           tiny_arch, RngState(0))

    def test_without_anchor_replay(self, tiny_dataset, tiny_anchor, tiny_arch, tiny_schedule):
        spec = dataclasses.replace(_spec(StrategyKind.BL_SHARED_UPPER, tiny_schedule),
                                   replay_anchor=False)
        result = train_strategy(spec, tiny_dataset, tiny_anchor, tiny_arch, RngState(0),
                                log_every=5)
        assert {r["modality"] for r in result.records} == {"sketch", "text"}

    def test_scratch_needs_no_anchor(self, tiny_dataset, tiny_arch, tiny_schedule):
        result = train_strategy(_spec(StrategyKind.BL_SHARED_SCRATCH, tiny_schedule), tiny_dataset,
                                None, tiny_arch, RngState(0))
        assert result.model.name == "bl_shared_scratch"

    def test_divergence_is_reported(self):
        params = {"w.weight": np.ones(2)}
        schedule = CurriculumSchedule(total_iters=1, freeze_iters=0)
        with pytest.raises(DivergenceError) as excinfo:
            _step(params, {"w.weight": np.ones(2)}, schedule, 7, "sketch", float("nan"))
        assert excinfo.value.iteration == 7 and excinfo.value.modality == "sketch"
        with pytest.raises(DivergenceError):
            _step(params, {"w.weight": np.array([np.inf, 0.0])}, schedule, 8, "text", 1.0)

    def test_curriculum_logs_unfreeze(self, caplog, tiny_schedule):
        caplog.set_level(logging.INFO, logger="src.crossmodal.curriculum")
        controller = CurriculumController(create_strategy(_spec(StrategyKind.A_TUNE_FREE,
                                                                tiny_schedule)))
        phases = [controller.update(i) for i in range(20)]
        assert phases.count(Phase.FROZEN) == 10
        assert controller.unfrozen_at == 10 and not controller.frozen
        assert "Unfreezing shared trunk at iteration 10" in caplog.text


class TestCheckpoint:
    def test_shared_round_trip(self, tmp_path, tiny_dataset, tiny_anchor, tiny_arch, tiny_schedule):
        model = train_strategy(_spec(StrategyKind.A_TUNE_FREE, tiny_schedule), tiny_dataset,
                               tiny_anchor, tiny_arch, RngState(0)).model
        loaded = load_checkpoint(save_checkpoint(model, tmp_path / "a_tune_free.xmck"))
        assert loaded.name == "a_tune_free"
        assert len(loaded.unique_networks()) == 1
        assert loaded.modalities == model.modalities
        assert _same_parameters(loaded, model)

    def test_individual_round_trip(self, tiny_dataset, tiny_anchor, tiny_arch):
        model = create_strategy(StrategySpec(kind=StrategyKind.BL_INDIVIDUAL)).build_model(
            tiny_dataset, tiny_anchor, tiny_arch, RngState(0))
        loaded = decode_checkpoint(encode_checkpoint(model))
        assert len(loaded.unique_networks()) == 3
        assert loaded.network("text").prefix == "private/text/"
        assert _same_parameters(loaded, model)

    def test_errors(self, tmp_path, tiny_anchor):
        with pytest.raises(MissingArtifactError):
            load_checkpoint(tmp_path / "missing.xmck")
        payload = encode_checkpoint(anchor_as_model(tiny_anchor))
        with pytest.raises(FormatError):
            decode_checkpoint(b"XMDS1" + payload[5:])
        with pytest.raises(FormatError):
            decode_checkpoint(payload[:-8])

    def test_placesnet_baseline(self, tiny_dataset, tiny_anchor, tiny_arch):
        model = placesnet_baseline(tiny_anchor, tiny_dataset, tiny_arch, RngState(0))
        net = model.network("sketch")
        assert model.name == "bl_placesnet"
        assert np.array_equal(net.trunk.fc6.weight, tiny_anchor.trunk.fc6.weight)
        assert np.array_equal(net.branch("natural").encoder.layers[1].weight,
                              tiny_anchor.branch("natural").encoder.layers[1].weight)
        assert not np.array_equal(net.branch("sketch").encoder.layers[0].weight,
                                  tiny_anchor.branch("natural").encoder.layers[0].weight)
