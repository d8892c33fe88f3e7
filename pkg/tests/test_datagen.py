import numpy as np
import pytest

from wheelgraph.datagen import (
    GenConfig,
    generate_dataset,
    generate_scene,
    is_small,
    load_dataset,
    parse_dataset,
    render_node_input,
    render_scene_inputs,
    save_dataset,
    scene_input_parts,
    serialize_dataset,
    split_easy_hard,
)
from wheelgraph.errors import FormatError, InvalidParameterError, PartitionError
from wheelgraph.geometry import BoundingBox, BoxClass, Scene, containment


class TestGenerateScene:
    def test_single_vehicle_counts(self):
        cfg = GenConfig(scenes=1, min_vehicles=1, max_vehicles=1, wheels_per_vehicle=2, seed=1)
        scene = generate_scene(cfg, np.random.default_rng(0))
        assert len(scene.vehicles()) == 1
        assert len(scene.wheels()) == 2
        assert len(scene.gt_wheel_vehicle) == 2
        assert len(scene.gt_wheel_wheel) == 1

    def test_wheel_count_options(self):
        for wheels in (0, 1, 2):
            cfg = GenConfig(min_vehicles=2, max_vehicles=2, wheels_per_vehicle=wheels, seed=2)
            scene = generate_scene(cfg, np.random.default_rng(5))
            assert len(scene.wheels()) == 2 * wheels

    def test_full_ambiguity_creates_double_containment(self):
        cfg = GenConfig(
            scenes=30, min_vehicles=2, max_vehicles=5, wheels_per_vehicle=2,
            ambiguity=1.0, jitter=0.0, seed=3,
        )
        for scene in generate_dataset(cfg):
            assert scene.ambiguous
            double = 0
            for wheel in scene.wheels():
                owners = [v for v in scene.vehicles() if containment(wheel, v) >= 0.99]
                if len(owners) >= 2:
                    double += 1
            assert double >= 1

    def test_determinism(self):
        cfg = GenConfig(scenes=5, min_vehicles=1, max_vehicles=4, ambiguity=0.5, jitter=2.0, seed=11)
        a = generate_dataset(cfg)
        b = generate_dataset(cfg)
        assert serialize_dataset(a) == serialize_dataset(b)

    def test_wheels_contained_before_jitter(self):
        cfg = GenConfig(scenes=40, min_vehicles=1, max_vehicles=6, ambiguity=0.3, jitter=0.0, seed=13)
        for scene in generate_dataset(cfg):
            for wheel_id, vehicle_id in scene.gt_wheel_vehicle.items():
                c = containment(scene.box(wheel_id), scene.box(vehicle_id))
                assert c >= 0.99

    def test_wheels_in_bottom_half(self):
        cfg = GenConfig(scenes=20, min_vehicles=1, max_vehicles=3, jitter=0.0, seed=17)
        for scene in generate_dataset(cfg):
            for wheel_id, vehicle_id in scene.gt_wheel_vehicle.items():
                wheel = scene.box(wheel_id)
                vehicle = scene.box(vehicle_id)
                assert wheel.center()[1] > vehicle.center()[1]

    def test_difficulty_tagging(self):
        easy_cfg = GenConfig(scenes=5, min_vehicles=1, max_vehicles=3, seed=19)
        hard_cfg = GenConfig(scenes=5, min_vehicles=4, max_vehicles=6, seed=19)
        assert all(s.difficulty == "easy" for s in generate_dataset(easy_cfg))
        assert all(s.difficulty == "hard" for s in generate_dataset(hard_cfg))

    def test_invalid_config(self):
        with pytest.raises(InvalidParameterError):
            GenConfig(min_vehicles=3, max_vehicles=2)
        with pytest.raises(InvalidParameterError):
            GenConfig(ambiguity=1.5)
        with pytest.raises(InvalidParameterError):
            GenConfig(wheels_per_vehicle=3)

    def test_unsatisfiable_placement_raises(self):
        from wheelgraph.errors import GenerationError

        cramped = GenConfig(width=100.0, height=100.0, min_vehicles=8, max_vehicles=8, seed=1)
        with pytest.raises(GenerationError):
            generate_scene(cramped, np.random.default_rng(0))


class TestRenderNodeInput:
    def scene(self):
        vehicle = BoundingBox(0, BoxClass.VEHICLE, 0, 0, 800, 600)
        wheel = BoundingBox(1, BoxClass.WHEEL, 100, 400, 200, 500)
        return Scene(0, 800, 600, (vehicle, wheel), gt_wheel_vehicle={1: 0})

    def test_whole_image_object_crop_equals_context(self):
        tensor = render_node_input(self.scene(), 0)
        np.testing.assert_array_equal(tensor[:, :, 0:3], tensor[:, :, 3:6])

    def test_coordinate_quadrants_exact(self):
        scene = self.scene()
        tensor = render_node_input(scene, 1)
        coord = tensor[:, :, 6]
        assert np.all(coord[:28, :28] == 100 / 800)
        assert np.all(coord[:28, 28:] == 400 / 600)
        assert np.all(coord[28:, :28] == 200 / 800)
        assert np.all(coord[28:, 28:] == 500 / 600)

    def test_shape_and_range(self):
        scenes = generate_dataset(GenConfig(scenes=5, min_vehicles=1, max_vehicles=4, seed=23))
        for scene in scenes:
            for tensor in render_scene_inputs(scene):
                assert tensor.shape == (56, 56, 7)
                assert tensor.min() >= 0.0 and tensor.max() <= 1.0

    def test_class_intensities(self):
        tensor = render_node_input(self.scene(), 0)
        context = tensor[:, :, 3]
        assert set(np.unique(context)) <= {0.0, 0.5, 1.0}
        assert (context == 1.0).any()
        assert (context == 0.5).any()

    def test_unknown_object_rejected(self):
        with pytest.raises(KeyError):
            render_node_input(self.scene(), 99)

    def test_compact_parts_match_full_tensor(self):
        scene = generate_scene(GenConfig(min_vehicles=2, max_vehicles=3, seed=29),
                               np.random.default_rng(2))
        crops, context, quads = scene_input_parts(scene)
        tensors = render_scene_inputs(scene)
        for i, tensor in enumerate(tensors):
            np.testing.assert_array_equal(tensor[:, :, 0], crops[i].reshape(56, 56))
            np.testing.assert_array_equal(tensor[:, :, 4], context.reshape(56, 56))
            box = scene.boxes[i]
            np.testing.assert_array_equal(
                quads[i],
                [box.x_min / scene.width, box.y_min / scene.height,
                 box.x_max / scene.width, box.y_max / scene.height],
            )


class TestSplitEasyHard:
    def make(self, n_easy, n_hard):
        scenes = []
        scenes += generate_dataset(GenConfig(scenes=n_easy, min_vehicles=1, max_vehicles=3, seed=41))
        hard = generate_dataset(GenConfig(scenes=n_hard, min_vehicles=4, max_vehicles=6, seed=43))
        for i, s in enumerate(hard):
            object.__setattr__(s, "scene_id", n_easy + i)
        return scenes + hard

    def test_boundary_at_three_vehicles(self):
        three = generate_dataset(GenConfig(scenes=4, min_vehicles=3, max_vehicles=3, seed=47))
        four = generate_dataset(GenConfig(scenes=4, min_vehicles=4, max_vehicles=4, seed=53))
        for i, s in enumerate(four):
            object.__setattr__(s, "scene_id", 4 + i)
        easy, hard, _ = split_easy_hard(three + four, seed=0)
        assert {len(s.vehicles()) for s in easy} == {3}
        assert {len(s.vehicles()) for s in hard} == {4}

    def test_mixed_is_equal_halves(self):
        scenes = self.make(20, 14)
        easy, hard, mixed = split_easy_hard(scenes, seed=5)
        assert len(easy) == 20 and len(hard) == 14
        assert len(mixed) == 14  # 2 * (14 // 2)
        easy_ids = {s.scene_id for s in easy}
        n_easy_in_mixed = sum(1 for s in mixed if s.scene_id in easy_ids)
        assert n_easy_in_mixed == 7

    def test_seeded_and_deterministic(self):
        scenes = self.make(12, 12)
        _, _, m1 = split_easy_hard(scenes, seed=9)
        _, _, m2 = split_easy_hard(scenes, seed=9)
        assert [s.scene_id for s in m1] == [s.scene_id for s in m2]

    def test_partition_error_on_missing_kind(self):
        scenes = generate_dataset(GenConfig(scenes=6, min_vehicles=1, max_vehicles=2, seed=59))
        with pytest.raises(PartitionError):
            split_easy_hard(scenes, seed=0)


class TestDatasetFormat:
    def test_round_trip_byte_equal(self, tmp_path):
        scenes = generate_dataset(
            GenConfig(scenes=8, min_vehicles=1, max_vehicles=5, ambiguity=0.5, jitter=1.5, seed=61)
        )
        path = tmp_path / "scenes.txt"
        save_dataset(scenes, path)
        loaded = load_dataset(path)
        save_dataset(loaded, tmp_path / "again.txt")
        assert (tmp_path / "scenes.txt").read_bytes() == (tmp_path / "again.txt").read_bytes()

    def test_content_preserved(self):
        scenes = generate_dataset(GenConfig(scenes=3, min_vehicles=2, max_vehicles=4, seed=67))
        loaded = parse_dataset(serialize_dataset(scenes))
        for a, b in zip(scenes, loaded):
            assert a.scene_id == b.scene_id
            assert a.gt_wheel_vehicle == b.gt_wheel_vehicle
            assert a.gt_wheel_wheel == b.gt_wheel_wheel
            assert a.difficulty == b.difficulty
            assert a.ambiguous == b.ambiguous
            for ba, bb in zip(a.boxes, b.boxes):
                assert ba == bb

    def test_unknown_version_rejected(self):
        text = serialize_dataset(generate_dataset(GenConfig(scenes=1, seed=1)))
        bumped = text.replace("wheelgraph-dataset v1", "wheelgraph-dataset v2", 1)
        with pytest.raises(FormatError):
            parse_dataset(bumped)

    def test_truncated_rejected(self):
        text = serialize_dataset(generate_dataset(GenConfig(scenes=2, seed=1)))
        lines = text.splitlines()
        with pytest.raises((FormatError, IndexError, ValueError)):
            parse_dataset("\n".join(lines[: len(lines) // 2]))


class TestSmallObjects:
    def test_threshold_rule(self):
        scene = Scene(0, 800, 600, (BoundingBox(0, BoxClass.WHEEL, 0, 0, 13, 13),))
        assert is_small(scene.boxes[0], scene)  # 169 < 192
        scene2 = Scene(0, 800, 600, (BoundingBox(0, BoxClass.WHEEL, 0, 0, 14, 14),))
        assert not is_small(scene2.boxes[0], scene2)  # 196 >= 192
