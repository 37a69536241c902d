import numpy as np
import pytest

from conftest import small_model
from masktune.errors import ConfigError, ShapeError
from masktune.linalg import frobenius_sq
from masktune.masking import (
    GradientMaskSet,
    LayerMask,
    brute_force_best_rows,
    build_mask,
    col_scores,
    compute_mask_set,
    full_mask,
    load_masks,
    mask_objective,
    retained_energy,
    row_scores,
    save_masks,
    scl_gradients,
    topk_indices,
    trainable_fraction,
)
from masktune.model import init_model


H = np.array([[1.0, 2.0], [3.0, 4.0]])


class TestScores:
    def test_row_zero(self):
        assert np.array_equal(row_scores(np.zeros((3, 4))), np.zeros(3))

    def test_row_identity(self):
        assert np.array_equal(row_scores(np.eye(3)), np.ones(3))

    def test_row_hand(self):
        assert np.array_equal(row_scores(H), np.array([5.0, 25.0]))

    def test_col_hand(self):
        assert np.array_equal(col_scores(H), np.array([10.0, 20.0]))

    def test_col_is_row_of_transpose(self, np_rng):
        h = np_rng.normal(size=(4, 6))
        assert np.array_equal(col_scores(h), row_scores(h.T))


class TestTopK:
    def test_hand(self):
        assert topk_indices(np.array([5.0, 25.0, 9.0]), 2) == (1, 2)

    def test_tie_lowest_index(self):
        assert topk_indices(np.array([7.0, 7.0, 7.0]), 1) == (0,)

    def test_k_equals_len(self):
        assert topk_indices(np.array([3.0, 1.0, 2.0]), 3) == (0, 1, 2)

    def test_k_out_of_range(self):
        with pytest.raises(ConfigError):
            topk_indices(np.array([1.0]), 2)


class TestBuildMask:
    def test_row_hand(self):
        mask = build_mask(H, 1, "row")
        assert mask.indices == (1,)
        assert np.array_equal(mask.to_dense(), np.array([[0.0, 0.0], [1.0, 1.0]]))

    def test_sparse_hand(self):
        h = np.array([[1.0, -5.0, 2.0], [0.0, 3.0, -1.0]])
        mask = build_mask(h, 1, "sparse")
        assert mask.indices == ((1,), (1,))

    def test_row_k_equals_rows_is_full_effect(self, np_rng):
        h = np_rng.normal(size=(3, 4))
        mask = build_mask(h, 3, "row")
        assert np.array_equal(mask.to_dense(), np.ones((3, 4)))


class TestToDense:
    def test_full(self):
        assert np.array_equal(full_mask((2, 2)).to_dense(), np.ones((2, 2)))

    def test_row(self):
        mask = LayerMask("row", (2, 3), (0,))
        assert np.array_equal(mask.to_dense(), np.array([[1, 1, 1], [0, 0, 0]], dtype=float))

    def test_sparse(self):
        mask = LayerMask("sparse", (2, 3), ((1,), (1,)))
        assert np.array_equal(mask.to_dense(), np.array([[0, 1, 0], [0, 1, 0]], dtype=float))

    def test_invalid_indices_rejected(self):
        with pytest.raises(ConfigError):
            LayerMask("row", (2, 3), (1, 1))
        with pytest.raises(ConfigError):
            LayerMask("col", (2, 3), (3,))


class TestObjectiveAndEnergy:
    def test_full_mask_objective_zero(self, np_rng):
        h = np_rng.normal(size=(3, 3))
        assert mask_objective(h, full_mask((3, 3))) == 0.0

    def test_empty_mask(self):
        empty = LayerMask("row", (2, 2), ())
        assert mask_objective(H, empty) == frobenius_sq(H)
        assert retained_energy(H, empty) == 0.0

    def test_hand_values(self):
        mask = LayerMask("row", (2, 2), (1,))
        assert mask_objective(H, mask) == 5.0
        assert retained_energy(H, mask) == 25.0

    def test_inner_product_identity(self, np_rng):
        for _ in range(100):
            h = np_rng.normal(size=(5, 6))
            m = (np_rng.uniform(size=(5, 6)) < 0.5).astype(float)
            mask = LayerMask("dense", (5, 6), m)
            inner = float(np.sum(h * (h * m)))
            energy = retained_energy(h, mask)
            assert abs(inner - energy) <= 1e-12 * max(abs(inner), 1e-300)

    def test_decomposition_all_variants(self, np_rng):
        h = np_rng.normal(size=(6, 5))
        total = frobenius_sq(h)
        for mask in (build_mask(h, 2, "row"), build_mask(h, 2, "col"),
                     build_mask(h, 2, "sparse"), full_mask(h.shape),
                     LayerMask("dense", h.shape, (np_rng.uniform(size=h.shape) < 0.5).astype(float))):
            s = retained_energy(h, mask) + mask_objective(h, mask)
            assert abs(s - total) <= 1e-12 * total

    def test_objective_monotone_in_k(self, np_rng):
        h = np_rng.normal(size=(7, 4))
        for variant in ("row", "sparse"):
            limit = 7 if variant == "row" else 4
            objs = [mask_objective(h, build_mask(h, k, variant)) for k in range(1, limit + 1)]
            assert all(b <= a + 1e-15 for a, b in zip(objs, objs[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mask_objective(H, full_mask((3, 3)))


class TestBruteForce:
    def test_hand(self):
        assert brute_force_best_rows(H, 1) == (1,)

    def test_identical_rows_tie(self):
        h = np.ones((4, 3))
        assert brute_force_best_rows(h, 2) == (0, 1)

    def test_k_equals_rows(self):
        assert brute_force_best_rows(H, 2) == (0, 1)

    def test_guard(self):
        with pytest.raises(ConfigError):
            brute_force_best_rows(np.zeros((21, 2)), 1)

    def test_selection_optimality(self, np_rng):
        for _ in range(40):
            rows = int(np_rng.integers(2, 9))
            cols = int(np_rng.integers(1, 9))
            h = np_rng.normal(size=(rows, cols))
            for k in range(1, rows + 1):
                fast = mask_objective(h, build_mask(h, k, "row"))
                best = mask_objective(h, LayerMask("row", h.shape, brute_force_best_rows(h, k)))
                assert abs(fast - best) <= 1e-12 * max(best, 1e-300)


class TestStorageBits:
    def test_dense_768(self):
        assert LayerMask("dense", (768, 768), np.zeros((768, 768))).storage_bits() == 589824

    def test_row_768_k2(self):
        assert LayerMask("row", (768, 768), (1, 2)).storage_bits() == 20

    def test_sparse_768_k1(self):
        mask = LayerMask("sparse", (768, 768), tuple((0,) for _ in range(768)))
        assert mask.storage_bits() == 7680

    def test_full_free(self):
        assert full_mask((768, 768)).storage_bits() == 0

    def test_row_dominates(self, np_rng):
        rows, cols, k = 16, 64, 2
        row = LayerMask("row", (rows, cols), tuple(range(k)))
        sparse = LayerMask("sparse", (rows, cols), tuple(tuple(range(k)) for _ in range(rows)))
        dense = LayerMask("dense", (rows, cols), np.ones((rows, cols)))
        assert row.storage_bits() < sparse.storage_bits() < dense.storage_bits()


class TestMaskSet:
    def make_inputs(self, seed=2):
        model = init_model([4, 6, 5, 3], seed=seed)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(12, 4))
        y = rng.integers(0, 3, size=12)
        return model, x, y

    def test_head_full_and_k_rows_selected(self):
        model, x, y = self.make_inputs()
        masks = compute_mask_set(model, x, y, 2, "row", 0.5)
        assert masks.layers[-1].variant == "full"
        assert all(len(m.indices) == 2 for m in masks.layers[:-1])

    def test_deterministic(self):
        model, x, y = self.make_inputs()
        a = compute_mask_set(model, x, y, 2, "row", 0.5)
        b = compute_mask_set(model, x, y, 2, "row", 0.5)
        assert all(ma.indices == mb.indices for ma, mb in zip(a.layers[:-1], b.layers[:-1]))

    def test_matches_brute_force_per_layer(self):
        model, x, y = self.make_inputs(seed=3)
        masks = compute_mask_set(model, x, y, 2, "row", 0.5)
        hs = scl_gradients(model, x, y, 0.5)
        for mask, h in zip(masks.layers[:-1], hs[:-1]):
            fast = mask_objective(h, mask)
            best = mask_objective(h, LayerMask("row", h.shape, brute_force_best_rows(h, 2)))
            assert abs(fast - best) <= 1e-12 * max(best, 1e-300)

    def test_k_full_rows_equals_full_effect(self):
        model, x, y = self.make_inputs()
        masks = compute_mask_set(model, x, y, 5, "row", 0.5)
        # every maskable layer here has >= 5 rows only when all rows selected match
        for m, layer in zip(masks.layers[:-1], model.layers[:-1]):
            if layer.weight.shape[0] == 5:
                assert np.array_equal(m.to_dense(), np.ones(layer.weight.shape))

    def test_k_out_of_range_names_layer(self):
        model, x, y = self.make_inputs()
        with pytest.raises(ConfigError, match="layer"):
            compute_mask_set(model, x, y, 99, "row", 0.5)

    def test_trainable_fraction_full(self):
        model, _, _ = self.make_inputs()
        assert trainable_fraction(model, GradientMaskSet.all_full(model)) == 1.0

    def test_trainable_fraction_head_only(self):
        model, _, _ = self.make_inputs()
        frac = trainable_fraction(model, GradientMaskSet.head_only(model))
        head = model.layers[-1]
        assert frac == (head.weight.size + head.bias.size) / model.param_count()

    def test_trainable_fraction_hand_count(self):
        model = init_model([4, 4, 4, 3], seed=0)
        masks = compute_mask_set(model, np.random.default_rng(0).normal(size=(8, 4)),
                                 np.array([0, 0, 1, 1, 2, 2, 0, 1]), 1, "row", 0.5)
        # two maskable layers: 1 row of 4 weights + 1 bias each; head 3x4 + 3 fully
        total = (16 + 4) + (16 + 4) + (12 + 3)
        assert trainable_fraction(model, masks) == (5 + 5 + 15) / total


class TestSerialization:
    def test_round_trip(self, tmp_path, np_rng):
        model = small_model()
        h = np_rng.normal(size=(6, 4))
        masks = GradientMaskSet((
            build_mask(h, 2, "row"),
            build_mask(np_rng.normal(size=(5, 6)), 3, "sparse"),
            full_mask((3, 5)),
        ))
        path = tmp_path / "masks.json"
        save_masks(masks, path)
        loaded = load_masks(path)
        for a, b in zip(masks.layers, loaded.layers):
            assert a.variant == b.variant
            assert a.shape == b.shape
            assert np.array_equal(a.to_dense(), b.to_dense())
        assert loaded.total_storage_bits() == masks.total_storage_bits()
