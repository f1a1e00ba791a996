import numpy as np
import pytest
from sklearn.base import clone

from salitrack import DiscriminativeSaliency, NonRigidTracker, SaliencyNetwork
from salitrack.exceptions import ConfigurationError
from salitrack.saliency_net import checkpoint
from salitrack.saliency_net.model import Topology, init_params


def test_checkpoint_round_trip_is_float32_exact(tmp_path):
    p = init_params(Topology(widths=(4, 6)), seed=2)
    path = tmp_path / "net.tfcn"
    checkpoint.save(p, path)
    q = checkpoint.load(path, expected=p.topology)
    assert q.topology == p.topology
    for k in p.weights:
        np.testing.assert_array_equal(q.weights[k], p.weights[k].astype(np.float32))


def test_checkpoint_is_deterministic():
    p = init_params(Topology(), seed=7)
    assert checkpoint.dumps(p) == checkpoint.dumps(p.copy())


@pytest.mark.parametrize("mutate,match", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:-4], "truncated"),
    (lambda b: b + b"\0", "trailing"),
    (lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:], "version"),
])
def test_checkpoint_rejects_damage(mutate, match):
    blob = checkpoint.dumps(init_params(Topology(), seed=0))
    with pytest.raises(ConfigurationError, match=match):
        checkpoint.loads(mutate(blob))


def test_checkpoint_rejects_other_topology():
    blob = checkpoint.dumps(init_params(Topology(widths=(4, 8, 16)), seed=0))
    with pytest.raises(ConfigurationError, match="does not match"):
        checkpoint.loads(blob, expected=Topology())


def test_estimators_follow_sklearn_parameter_protocol():
    for est in (SaliencyNetwork(n_iterations=3), DiscriminativeSaliency(n_scales=2), NonRigidTracker(tau=1)):
        params = est.get_params()
        twin = clone(est)
        assert twin.get_params().keys() == params.keys()
        assert all(twin.get_params()[k] == v for k, v in params.items() if not hasattr(v, "get_params"))
    net = SaliencyNetwork().set_params(n_iterations=7)
    assert net.n_iterations == 7


def test_network_predicts_blobs(trained_net, blob_pairs):
    img, mask = blob_pairs[0]
    proba = trained_net.predict_proba(img)
    assert proba.shape == mask.shape
    assert proba[mask == 1].mean() > proba[mask == 0].mean() + 0.3
    assert set(np.unique(trained_net.predict(img))) <= {0, 1}
    assert len(trained_net.predict_proba([img, img])) == 2


def test_network_save_load(trained_net, tmp_path, blob_pairs):
    trained_net.save(tmp_path / "n.tfcn")
    again = SaliencyNetwork.load(tmp_path / "n.tfcn")
    img = blob_pairs[1][0]
    np.testing.assert_allclose(again.predict_proba(img), trained_net.predict_proba(img), atol=1e-4)


def test_discriminative_saliency_transform(trained_net, blob_pairs):
    ds = DiscriminativeSaliency(trained_net, n_scales=2, refit=False).fit(None)
    img, mask = blob_pairs[2]
    sal = ds.transform(img)
    assert sal.shape == mask.shape and 0 <= sal.min() and sal.max() <= 1
    assert len(ds.transform([img, img])) == 2


def test_tracker_requires_fitted_network(blob_pairs):
    with pytest.raises(ConfigurationError):
        NonRigidTracker(SaliencyNetwork()).fit(blob_pairs[0][0], (10, 10, 8, 8))
