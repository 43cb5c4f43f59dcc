import numpy as np
import pytest
from scipy import integrate, special

from shiftguard.errors import ValidationError
from shiftguard.models import (
    DirichletParams,
    EnsembleOutput,
    LinearModel,
    MlpConfig,
    PriorNetConfig,
    cw_attack,
    dirichlet_reverse_kl,
    ensemble_predict,
    fuse,
    load_model,
    predict_proba,
    priornet_alphas,
    save_model,
    score_to_probability_pair,
    train_ensemble,
    train_mlp,
    train_priornet,
    train_stumps,
)
from shiftguard.models.ensemble import EnsembleModel

FAST = MlpConfig(layer_sizes=(16, 16), epochs=60, seed=1)


def blobs(n=200, seed=7, sep=6.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, 2)) + np.where(y[:, None] == 1, sep / 2, -sep / 2) * np.array([1.0, 0.0])
    return X, y


@pytest.fixture(scope="module")
def blob_data():
    return blobs()


def test_mlp_separates_blobs(blob_data):
    X, y = blob_data
    model = train_mlp(X, y, FAST)
    _, p = predict_proba(model, X)
    assert np.mean(p.argmax(axis=1) == y) >= 0.99
    Xh, yh = blobs(500, seed=8)
    assert np.mean(predict_proba(model, Xh)[1].argmax(axis=1) == yh) >= 0.99


def test_mlp_single_example_loss_decreases():
    hist = []
    train_mlp(np.array([[0.5, -1.0]]), np.array([1]), MlpConfig(epochs=1, dropout_rate=0.0), history=hist)
    assert hist[1] < hist[0]


def test_mlp_is_deterministic(blob_data):
    X, y = blob_data
    a, b = train_mlp(X, y, FAST), train_mlp(X, y, FAST)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = train_mlp(X, y, FAST.with_seed(2))
    assert not np.array_equal(a.params["W1"], c.params["W1"])


def test_predict_proba_examples():
    model = LinearModel(np.zeros((2, 2)), np.array([np.log(3), 0.0]))
    logits, p = predict_proba(model, np.array([1.0, 2.0]))
    assert p == pytest.approx([0.75, 0.25])
    assert predict_proba(LinearModel(np.zeros((2, 2))), np.ones(2))[1] == pytest.approx([0.5, 0.5])


def test_mlp_rejects_bad_training_data():
    with pytest.raises(ValidationError):
        train_mlp(np.zeros((3, 2)), np.array([0, 2, 1]), FAST)
    with pytest.raises(ValidationError):
        train_mlp(np.array([[np.nan, 0.0]]), np.array([0]), FAST)


def test_ensemble_members_and_mean(blob_data):
    X, y = blob_data
    ens = train_ensemble(X, y, MlpConfig(layer_sizes=(8,), epochs=60), m=10, base_seed=3)
    assert list(ens.member_seeds) == list(range(3, 13))
    for member in ens.members:
        assert np.mean(member.predict_proba(X)[1].argmax(axis=1) == y) >= 0.95
    out = ensemble_predict(ens, X[:5])
    manual = np.mean([m.predict_proba(X[:5])[1] for m in ens.members], axis=0)
    assert np.allclose(out.mean_probs, manual, atol=1e-12)
    again = train_ensemble(X, y, MlpConfig(layer_sizes=(8,), epochs=60), m=10, base_seed=3)
    assert np.array_equal(ens.member_logits(X), again.member_logits(X))


def test_single_member_ensemble_equals_member(blob_data):
    X, y = blob_data
    ens = train_ensemble(X, y, MlpConfig(layer_sizes=(8,), epochs=5), m=1, base_seed=0)
    assert np.allclose(ensemble_predict(ens, X).mean_probs, ens.members[0].predict_proba(X)[1])


def test_ensemble_output_means():
    out = EnsembleOutput.from_members(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert out.mean_probs == pytest.approx([0.5, 0.5])
    same = EnsembleOutput.from_members(np.array([[0.3, 0.7]] * 4))
    assert same.mean_probs == pytest.approx([0.3, 0.7])


def test_ensemble_rejects_duplicate_seeds(blob_data):
    X, y = blob_data
    m = train_mlp(X, y, MlpConfig(layer_sizes=(4,), epochs=1))
    with pytest.raises(ValidationError):
        EnsembleModel([m, m], (0, 0))


def test_stumps_threshold_data_and_constant_labels():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(300, 1))
    y = (X[:, 0] > 0.2).astype(int)
    model = train_stumps(X, y, rounds=10, learning_rate=0.5)
    assert np.mean((model.score(X) > 0.5) == y) >= 0.95
    ones = train_stumps(X, np.ones(300, dtype=int), rounds=5)
    assert np.all(ones.score(X) >= 0.99)
    with pytest.raises(ValidationError):
        train_stumps(X, y, rounds=0)


@pytest.mark.parametrize("s, expected", [(0.7, [0.3, 0.7]), (0.0, [1.0, 0.0]), (0.5, [0.5, 0.5])])
def test_score_to_probability_pair(s, expected):
    assert score_to_probability_pair(s) == pytest.approx(expected)


def kl_quadrature(pred, target):
    """KL(Dir(pred) || Dir(target)) on the 2-simplex by 1-D quadrature over p1."""
    a, b = pred
    c, d = target

    def logpdf(p, u, v):
        return (u - 1) * np.log(p) + (v - 1) * np.log1p(-p) - special.betaln(u, v)

    def integrand(p):
        return np.exp(logpdf(p, a, b)) * (logpdf(p, a, b) - logpdf(p, c, d))

    return integrate.quad(integrand, 0, 1, limit=200)[0]


def test_reverse_kl_against_quadrature():
    for pred, target in [([2.0, 1.0], [1.0, 1.0]), ([3.0, 5.0], [100.0, 1.0]), ([1.5, 0.7], [1.0, 1.0])]:
        got = dirichlet_reverse_kl(np.array(pred), np.array(target))
        assert got == pytest.approx(kl_quadrature(pred, target), abs=1e-4)


def test_reverse_kl_self_divergence_is_zero():
    assert abs(dirichlet_reverse_kl(np.array([1.0, 1.0]), np.array([1.0, 1.0]))) < 1e-10
    a = np.array([4.2, 0.3])
    assert abs(dirichlet_reverse_kl(a, a)) < 1e-10


def test_dirichlet_params_validation():
    d = DirichletParams.from_alphas([2.0, 1.0])
    assert d.alpha0 == pytest.approx(3.0)
    with pytest.raises(ValidationError):
        DirichletParams.from_alphas([1.0, 0.0])


def test_priornet_config_validation():
    with pytest.raises(ValidationError):
        PriorNetConfig(alpha_in_target=1.0, alpha_out_target=1.0)


@pytest.fixture(scope="module")
def priornet(blob_data):
    X, y = blob_data
    rng = np.random.default_rng(0)
    # unit-scale inputs, OOD rows on a ring around both blobs
    ang, r = rng.uniform(0, 2 * np.pi, 400), rng.uniform(7, 12, 400)
    ood = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    cfg = PriorNetConfig(layer_sizes=(16, 16), epochs=600, batch_size=32, seed=2)
    return train_priornet(X / 4, y, ood / 4, cfg), cfg


def test_priornet_is_sharp_in_domain_and_flat_far_away(priornet, blob_data):
    model, _ = priornet
    X, _ = blob_data
    ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    far = 8 * np.column_stack([np.cos(ang), np.sin(ang)])
    a_in = priornet_alphas(model, X / 4).alpha0
    a_far = priornet_alphas(model, far / 4).alpha0
    assert a_in.mean() > a_far.mean()
    assert np.all(a_far < np.median(a_in))


def test_priornet_alphas_contract(priornet):
    model, _ = priornet
    d = priornet_alphas(model, np.random.default_rng(1).normal(size=(50, 2)) * 20)
    assert d.alphas.min() > 0
    assert np.allclose(d.alpha0, d.alphas.sum(axis=1), atol=1e-12)


def test_priornet_determinism_and_lambda_zero(blob_data):
    X, y = blob_data
    cfg = PriorNetConfig(layer_sizes=(8,), epochs=10, lambda_weight=0.0)
    a = train_priornet(X, y, None, cfg)
    b = train_priornet(X, y, None, cfg)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    with pytest.raises(ValidationError):
        train_priornet(X, y, None, PriorNetConfig(epochs=1))


def test_cw_steps_zero_returns_input():
    model = LinearModel(np.array([[-1.0, 1.0], [0.0, 0.0]]))
    x = np.array([2.0, 1.0])
    r = cw_attack(model, x, steps=0)
    assert np.array_equal(r.x_adv, x) and not r.success


def test_cw_success_flips_prediction():
    model = LinearModel(np.array([[-1.0, 1.0], [0.0, 0.0]]))
    x = np.array([0.8, -0.3])
    r = cw_attack(model, x, c=2.0, steps=200)
    assert r.success and r.delta_norm > 0
    assert np.argmax(model.logits(r.x_adv)[0]) != np.argmax(model.logits(x)[0])


@pytest.mark.parametrize("pa, pb, w, expected", [
    ([0.8, 0.2], [0.6, 0.4], 0.5, [0.7, 0.3]),
    ([0.8, 0.2], [0.6, 0.4], 1.0, [0.8, 0.2]),
    ([1.0, 0.0], [0.0, 1.0], 0.8, [0.8, 0.2]),
])
def test_fuse(pa, pb, w, expected):
    assert fuse(np.array(pa), np.array(pb), w) == pytest.approx(expected)


def test_fuse_rejects_bad_weight():
    with pytest.raises(ValidationError):
        fuse(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 1.5)


def test_model_documents_round_trip(tmp_path, blob_data, priornet):
    X, y = blob_data
    models = [
        train_mlp(X, y, MlpConfig(layer_sizes=(4, 4), epochs=2)),
        train_ensemble(X, y, MlpConfig(layer_sizes=(4,), epochs=2), m=2),
        priornet[0],
        train_stumps(X, y, rounds=3),
    ]
    for i, m in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(m, path, {"note": "x"})
        loaded, doc = load_model(path)
        assert doc["note"] == "x"
        f = next(getattr(type(m), a) for a in ("score", "member_logits", "logits") if hasattr(m, a))
        assert np.array_equal(f(m, X), f(loaded, X))
