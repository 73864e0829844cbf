import numpy as np
import pytest

from epimem import idf
from epimem.ltm import (
    DegenerateHistory,
    NoSharedLayout,
    decompose,
    recompose,
    train_latent_model,
)
from epimem.model import parse_id

ENTITY = parse_id("Mem/Core/prov/thing")


def rank_r_history(d=100, r=5, n=40, seed=0, noise=0.0):
    """Vectors lying exactly in a rank-r affine subspace with balanced spread."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((d, r)))
    origin = rng.standard_normal(d)
    coeffs = rng.standard_normal((n, r))
    data = origin + coeffs @ basis.T
    if noise:
        data = data + rng.standard_normal(data.shape) * noise
    history = [
        (1_000_000 * (i + 1), idf.NDArray.from_numpy(data[i].astype(np.float64)))
        for i in range(n)
    ]
    return history, data


def reconstruction_errors(history, model, latents, extras):
    errs = []
    for (ts, value), z, extra in zip(history, latents, extras):
        rebuilt = model.decode_value(z, extra)
        _, orig_vec, _ = decompose(value)
        _, new_vec, _ = decompose(rebuilt)
        errs.append(np.max(np.abs(orig_vec - new_vec)))
    return errs


@pytest.mark.parametrize("r", [1, 5, 20])
def test_rank_r_recovers_k_and_reconstructs(r):
    history, _ = rank_r_history(d=100, r=r, n=50, seed=r)
    encoded = train_latent_model(ENTITY, history)
    assert encoded.model.latent_dim == r
    errs = reconstruction_errors(history, encoded.model, encoded.latents, encoded.extras)
    assert max(errs) <= 1e-6


def test_constant_history_zero_variance():
    value = idf.Map({"v": idf.Float64(7.5), "w": idf.Float64(-1.0)})
    history = [(1_000_000 * i, value) for i in range(1, 6)]
    encoded = train_latent_model(ENTITY, history)
    assert encoded.model.zero_variance
    assert encoded.model.latent_dim == 1
    assert np.allclose(encoded.model.mean, [7.5, -1.0])
    for z in encoded.latents:
        assert np.allclose(z, 0.0)
    rebuilt = encoded.model.decode_value(encoded.latents[0], encoded.extras[0])
    assert rebuilt == value


def test_full_rank_k_max_is_lossless():
    history, _ = rank_r_history(d=12, r=12, n=30, seed=3)
    encoded = train_latent_model(ENTITY, history, k_max=12, variance_keep=1.0)
    errs = reconstruction_errors(history, encoded.model, encoded.latents, encoded.extras)
    assert max(errs) <= 1e-6


def test_mse_non_increasing_in_k():
    history, data = rank_r_history(d=30, r=10, n=60, seed=4, noise=0.3)
    mses = []
    for k in range(1, 11):
        encoded = train_latent_model(ENTITY, history, k_override=k)
        model = encoded.model
        errs = []
        for (ts, value), z in zip(history, encoded.latents):
            x_hat = model.decode_vector(z)
            _, x, _ = decompose(value)
            errs.append(np.mean((x - x_hat) ** 2))
        mses.append(np.mean(errs))
    for a, b in zip(mses, mses[1:]):
        assert b <= a + 1e-12


def test_basis_orthonormality():
    for seed in range(5):
        history, _ = rank_r_history(d=40, r=7, n=25, seed=seed)
        model = train_latent_model(ENTITY, history).model
        gram = model.basis.T @ model.basis
        assert np.max(np.abs(gram - np.eye(model.latent_dim))) <= 1e-6


def test_dynamics_fitted_with_three_or_more():
    history, _ = rank_r_history(d=10, r=2, n=10, seed=1)
    assert train_latent_model(ENTITY, history).model.has_dynamics
    assert not train_latent_model(ENTITY, history[:2]).model.has_dynamics


def test_too_small_history_rejected():
    with pytest.raises(DegenerateHistory):
        train_latent_model(ENTITY, [(0, idf.Float64(1.0))])


def test_no_shared_layout_rejected():
    history = [
        (0, idf.Map({"v": idf.Float64(1.0)})),
        (1_000_000, idf.Map({"v": idf.Float64(1.0), "w": idf.Float64(2.0)})),
    ]
    with pytest.raises(NoSharedLayout):
        train_latent_model(ENTITY, history)


def test_strings_and_bools_are_extracted_and_restored():
    history = []
    for i in range(6):
        history.append(
            (
                1_000_000 * (i + 1),
                idf.Map(
                    {
                        "pos": idf.Float64(float(i)),
                        "label": idf.String(f"step-{i}"),
                        "ok": idf.Bool(i % 2 == 0),
                        "at": idf.Time(123450 + i),
                    }
                ),
            )
        )
    encoded = train_latent_model(ENTITY, history)
    for (ts, value), z, extras in zip(history, encoded.latents, encoded.extras):
        rebuilt = encoded.model.decode_value(z, extras)
        assert rebuilt.entries["label"] == value.entries["label"]
        assert rebuilt.entries["ok"] == value.entries["ok"]
        assert rebuilt.entries["at"] == value.entries["at"]
        assert abs(rebuilt.entries["pos"].value - value.entries["pos"].value) <= 1e-6


def test_decompose_recompose_identity_on_mixed_tree():
    value = idf.Map(
        {
            "a": idf.List((idf.Int64(3), idf.Float32(1.5), idf.String("x"))),
            "b": idf.NDArray.from_numpy(np.arange(6, dtype=np.int32).reshape(2, 3)),
            "c": idf.Map({}),
            "d": idf.Null(),
        }
    )
    layout, vector, extras = decompose(value)
    assert recompose(layout, vector, extras) == value
