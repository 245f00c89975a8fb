import json

import numpy as np
import pandas as pd
import pytest

from src.Dataset import CovariateKind, PenaltyConfig
from src.Discovery import Discovery
from src.Errors import SchemaError
from src.FileLoader import FileLoader
from src.GraphAssembly import predict_all
from src.Simulation import SimulationConfig, generate_dataset


@pytest.fixture
def truth():
    return generate_dataset(SimulationConfig(n=30, p=5, q=3, q_e=1, edge_prob=0.5, seed=8))


@pytest.fixture
def model(small_dataset):
    return Discovery.fit_fixed(small_dataset, PenaltyConfig.from_mixture(0.5, 0.03), threads=1, progress=False)


def test_dataset_round_trip(truth, tmp_path):
    FileLoader.save_dataset(truth.dataset, str(tmp_path))
    loaded = FileLoader.load_dataset(str(tmp_path / "X.csv"), str(tmp_path / "U.csv"), str(tmp_path / "kinds.json"))
    np.testing.assert_array_equal(loaded.X, truth.dataset.X)
    np.testing.assert_array_equal(loaded.U, truth.dataset.U)
    assert loaded.covariate_kinds == truth.dataset.covariate_kinds
    assert loaded.response_names == truth.dataset.response_names


def test_kinds_are_inferred_without_sidecar(tmp_path):
    pd.DataFrame({"a": [1.0, 2.0, 3.0], "b": [0.5, 0.1, 0.2]}).to_csv(tmp_path / "X.csv", index=False)
    pd.DataFrame({"sex": [0, 1, 1], "age": [30.0, 41.5, 52.0]}).to_csv(tmp_path / "U.csv", index=False)
    d = FileLoader.load_dataset(str(tmp_path / "X.csv"), str(tmp_path / "U.csv"))
    assert d.covariate_kinds == (CovariateKind.BINARY, CovariateKind.CONTINUOUS)
    assert d.covariate_names == ("sex", "age")


def test_kinds_sidecar_as_list(tmp_path):
    (tmp_path / "kinds.json").write_text(json.dumps(["continuous", "binary"]))
    kinds = FileLoader.load_kinds(str(tmp_path / "kinds.json"), ["u0", "u1"])
    assert kinds == [CovariateKind.CONTINUOUS, CovariateKind.BINARY]


@pytest.mark.parametrize("content", ['{"kinds": {"u0": "ordinal"}}', '{"kinds": {"other": "binary"}}', "not json"])
def test_bad_kinds_sidecar(tmp_path, content):
    (tmp_path / "kinds.json").write_text(content)
    with pytest.raises(SchemaError):
        FileLoader.load_kinds(str(tmp_path / "kinds.json"), ["u0"])


def test_non_numeric_column_is_rejected(tmp_path):
    pd.DataFrame({"a": ["x", "y"], "b": [1.0, 2.0]}).to_csv(tmp_path / "X.csv", index=False)
    pd.DataFrame({"u": [0, 1]}).to_csv(tmp_path / "U.csv", index=False)
    with pytest.raises(SchemaError):
        FileLoader.load_dataset(str(tmp_path / "X.csv"), str(tmp_path / "U.csv"))


def test_model_round_trip_is_byte_identical(model, tmp_path):
    path = tmp_path / "model.json"
    FileLoader.save_model(model, str(path))
    loaded = FileLoader.load_model(str(path))
    assert FileLoader.model_to_json(loaded) == path.read_text()
    for a, b in zip(model.b_tilde, loaded.b_tilde):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(loaded.gamma_hat, model.gamma_hat)
    assert loaded.symmetrization_rule is model.symmetrization_rule
    assert loaded.fits[1].penalty.lambda0 == model.fits[1].penalty.lambda0
    np.testing.assert_array_equal(loaded.fits[1].beta, model.fits[1].beta)


@pytest.mark.parametrize("mutate", [
    lambda payload: payload.update(format="something-else"),
    lambda payload: payload.update(version=99),
    lambda payload: payload.pop("gamma_hat"),
    lambda payload: payload.update(q=7),
    lambda payload: payload["components"][0].update(j=[1], k=[0], value=[0.5]),
])
def test_malformed_model_files(model, tmp_path, mutate):
    payload = json.loads(FileLoader.model_to_json(model))
    mutate(payload)
    path = tmp_path / "model.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(SchemaError):
        FileLoader.load_model(str(path))


def test_model_file_that_is_not_json(tmp_path):
    path = tmp_path / "model.json"
    path.write_text("{")
    with pytest.raises(SchemaError):
        FileLoader.load_model(str(path))


def test_truth_round_trip(truth, tmp_path):
    path = tmp_path / "truth.json"
    FileLoader.save_truth(truth, str(path))
    loaded = FileLoader.load_truth(str(path), truth.dataset)
    assert loaded.config == truth.config
    np.testing.assert_array_equal(loaded.gamma, truth.gamma)
    for a, b in zip(loaded.b, truth.b):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(loaded.mu_per_subject, truth.mu_per_subject, rtol=1e-12, atol=1e-14)
    assert loaded.active_covariates == truth.active_covariates


def test_truth_against_wrong_dataset(truth, small_dataset, tmp_path):
    path = tmp_path / "truth.json"
    FileLoader.save_truth(truth, str(path))
    with pytest.raises(SchemaError):
        FileLoader.load_truth(str(path), small_dataset)


def test_save_predictions(model, small_dataset, tmp_path):
    predictions = predict_all(model, small_dataset.U[:3])
    FileLoader.save_predictions(predictions, str(tmp_path), model.response_names, with_omega=True)
    mu = pd.read_csv(tmp_path / "mu.csv", float_precision="round_trip")
    assert list(mu.columns) == ["subject", "x0", "x1", "x2"]
    np.testing.assert_array_equal(mu[["x0", "x1", "x2"]].to_numpy(), np.array([pr.mu for pr in predictions]))
    assert len(pd.read_csv(tmp_path / "ridge.csv")) == 3
    omega = pd.read_csv(tmp_path / "omega.csv")
    assert set(omega["subject"]) == {0, 1, 2}
    assert (omega["j"] <= omega["k"]).all()
