import json
import logging
import os
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.Dataset import (CovariateKind, Dataset, GraphModel, NodewiseFit, PenaltyConfig, SubjectPrediction,
                         SymmetrizationRule, infer_covariate_kinds, validate_dataset)
from src.Errors import SchemaError
from src.Simulation import SimulationConfig, SimulationTruth, rebuild_truth

logger = logging.getLogger(__name__)

MODEL_FORMAT = "cspine-model"
TRUTH_FORMAT = "cspine-truth"
FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"


def _dumps(payload: dict) -> str:
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="\n") as file:
        file.write(text)


def _read_json(path: str, expected_format: str) -> dict:
    with open(path, "r") as file:
        try:
            payload = json.load(file)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path} is not valid JSON: {e}") from e
    if payload.get("format") != expected_format:
        raise SchemaError(f"{path} is not a {expected_format} file")
    if payload.get("version") != FORMAT_VERSION:
        raise SchemaError(f"{path} has unsupported version {payload.get('version')}")
    return payload


def _components_to_triplets(components: Sequence[np.ndarray]) -> list:
    triplets = []
    for h, component in enumerate(components):
        rows, cols = np.nonzero(np.triu(component, 1))
        triplets.append({
            "h": h,
            "j": rows.tolist(),
            "k": cols.tolist(),
            "value": component[rows, cols].tolist(),
        })
    return triplets


def _triplets_to_components(triplets: list, diagonal: Sequence[float], p: int) -> tuple:
    components = []
    for h, entry in enumerate(sorted(triplets, key=lambda t: t["h"])):
        if entry["h"] != h:
            raise SchemaError(f"Component {h} is missing")
        component = np.zeros((p, p))
        rows, cols = np.asarray(entry["j"], dtype=int), np.asarray(entry["k"], dtype=int)
        if np.any(rows >= cols):
            raise SchemaError(f"Component {h} stores entries outside the upper triangle")
        component[rows, cols] = entry["value"]
        component[cols, rows] = entry["value"]
        components.append(component)
    np.fill_diagonal(components[0], diagonal)
    return tuple(components)


def _fit_to_dict(fit: NodewiseFit) -> dict:
    beta = fit.beta
    support = np.flatnonzero(beta)
    penalty = fit.penalty
    return {
        "node": fit.node,
        "gamma": fit.gamma.tolist(),
        "beta_index": support.tolist(),
        "beta_value": beta[support].tolist(),
        "sigma2": fit.sigma2,
        "objective": fit.objective,
        "iterations": fit.iterations,
        "kkt_residual": fit.kkt_residual,
        "converged": fit.converged,
        "n_dropped": fit.n_dropped,
        "lam": penalty.lam if penalty is not None else None,
        "lam_g": penalty.lam_g if penalty is not None else None,
        "alpha_s": penalty.mixture[0] if penalty is not None and penalty.mixture is not None else None,
        "lambda0": penalty.mixture[1] if penalty is not None and penalty.mixture is not None else None,
    }


def _fit_from_dict(entry: dict, p: int, q: int) -> NodewiseFit:
    beta = np.zeros((q + 1) * (p - 1))
    beta[np.asarray(entry["beta_index"], dtype=int)] = entry["beta_value"]
    penalty = None
    if entry.get("lam") is not None:
        mixture = None
        if entry.get("alpha_s") is not None:
            mixture = (entry["alpha_s"], entry["lambda0"])
        penalty = PenaltyConfig(entry["lam"], entry["lam_g"], mixture)
    return NodewiseFit(
        node=entry["node"],
        gamma=np.asarray(entry["gamma"], dtype=float),
        beta_blocks=tuple(np.split(beta, q + 1)),
        sigma2=entry["sigma2"],
        objective=entry["objective"],
        iterations=entry["iterations"],
        kkt_residual=entry["kkt_residual"],
        converged=entry["converged"],
        penalty=penalty,
        n_dropped=entry["n_dropped"],
    )


class FileLoader:
    """
    Reads and writes datasets, models, truth bundles and result tables.
    """

    @staticmethod
    def load_dataset(x_path: str, u_path: str, kinds_path: Optional[str] = None) -> Dataset:
        """
        Loads X and U from CSV files with a header row. Covariate kinds come from
        the JSON sidecar when given and are inferred from the values otherwise.
        """
        X = pd.read_csv(x_path, float_precision="round_trip")
        U = pd.read_csv(u_path, float_precision="round_trip")
        for name, frame in (("X", X), ("U", U)):
            non_numeric = [c for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])]
            if non_numeric:
                raise SchemaError(f"{name} has non-numeric columns: {', '.join(map(str, non_numeric))}")

        if kinds_path is not None:
            kinds = FileLoader.load_kinds(kinds_path, list(U.columns))
        else:
            kinds = infer_covariate_kinds(U.to_numpy(dtype=float))
        return validate_dataset(X.to_numpy(dtype=float), U.to_numpy(dtype=float), kinds,
                                [str(c) for c in X.columns], [str(c) for c in U.columns])

    @staticmethod
    def load_kinds(path: str, covariate_names: Sequence[str]) -> list:
        with open(path, "r") as file:
            try:
                payload = json.load(file)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path} is not valid JSON: {e}") from e
        kinds = payload.get("kinds") if isinstance(payload, dict) else payload
        try:
            if isinstance(kinds, dict):
                return [CovariateKind.parse(kinds[name]) for name in covariate_names]
            return [CovariateKind.parse(kind) for kind in kinds]
        except (KeyError, ValueError, TypeError) as e:
            raise SchemaError(f"Invalid covariate kinds in {path}: {e}") from e

    @staticmethod
    def save_dataset(d: Dataset, save_dir: str) -> None:
        os.makedirs(save_dir, exist_ok=True)
        pd.DataFrame(d.X, columns=list(d.response_names)).to_csv(
            os.path.join(save_dir, "X.csv"), index=False, float_format=FLOAT_FORMAT)
        pd.DataFrame(d.U, columns=list(d.covariate_names)).to_csv(
            os.path.join(save_dir, "U.csv"), index=False, float_format=FLOAT_FORMAT)
        kinds = {"kinds": {name: str(kind) for name, kind in zip(d.covariate_names, d.covariate_kinds)}}
        _write_text(os.path.join(save_dir, "kinds.json"), _dumps(kinds))

    @staticmethod
    def model_to_json(model: GraphModel) -> str:
        payload = {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "p": model.p,
            "q": model.q,
            "rule": str(model.symmetrization_rule),
            "response_names": list(model.response_names),
            "covariate_names": list(model.covariate_names),
            "settings": model.settings,
            "sigma2": np.asarray(model.sigma2, dtype=float).tolist(),
            "gamma_hat": np.asarray(model.gamma_hat, dtype=float).tolist(),
            "b0_diagonal": np.diag(model.b_tilde[0]).tolist(),
            "components": _components_to_triplets(model.b_tilde),
            "nodes": [_fit_to_dict(fit) for fit in model.fits],
        }
        return _dumps(payload)

    @staticmethod
    def save_model(model: GraphModel, path: str) -> None:
        _write_text(path, FileLoader.model_to_json(model))

    @staticmethod
    def load_model(path: str) -> GraphModel:
        payload = _read_json(path, MODEL_FORMAT)
        try:
            p, q = int(payload["p"]), int(payload["q"])
            gamma_hat = np.asarray(payload["gamma_hat"], dtype=float).reshape(p, q)
            b_tilde = _triplets_to_components(payload["components"], payload["b0_diagonal"], p)
            if len(b_tilde) != q + 1:
                raise SchemaError(f"Expected {q + 1} components, found {len(b_tilde)}")
            fits = tuple(_fit_from_dict(entry, p, q) for entry in payload["nodes"])
            return GraphModel(
                gamma_hat=gamma_hat,
                b_tilde=b_tilde,
                sigma2=np.asarray(payload["sigma2"], dtype=float),
                symmetrization_rule=SymmetrizationRule(payload["rule"]),
                fits=fits,
                response_names=tuple(payload["response_names"]),
                covariate_names=tuple(payload["covariate_names"]),
                settings=dict(payload["settings"]),
            )
        except (KeyError, IndexError, TypeError, ValueError) as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(f"Malformed model file {path}: {e}") from e

    @staticmethod
    def save_truth(truth: SimulationTruth, path: str) -> None:
        config = asdict(truth.config)
        config["model"] = str(truth.config.model)
        config["entry_range"] = list(truth.config.entry_range)
        payload = {
            "format": TRUTH_FORMAT,
            "version": FORMAT_VERSION,
            "config": config,
            "pd_repairs": truth.pd_repairs,
            "active_covariates": list(truth.active_covariates),
            "gamma": truth.gamma.tolist(),
            "b0_diagonal": np.diag(truth.b[0]).tolist(),
            "components": _components_to_triplets(truth.b),
        }
        _write_text(path, _dumps(payload))

    @staticmethod
    def load_truth(path: str, d: Dataset) -> SimulationTruth:
        payload = _read_json(path, TRUTH_FORMAT)
        try:
            cfg = SimulationConfig(**payload["config"])
            b = _triplets_to_components(payload["components"], payload["b0_diagonal"], d.p)
            gamma = np.asarray(payload["gamma"], dtype=float).reshape(d.p, d.q)
        except (KeyError, IndexError, TypeError, ValueError) as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(f"Malformed truth file {path}: {e}") from e
        if len(b) != d.q + 1:
            raise SchemaError(f"Truth has {len(b) - 1} covariate components, data has {d.q} covariates")
        return rebuild_truth(cfg, gamma, b, d, payload["pd_repairs"], tuple(payload["active_covariates"]))

    @staticmethod
    def save_predictions(predictions: Sequence[SubjectPrediction], save_dir: str, response_names: Sequence[str],
                         with_omega: bool = False) -> None:
        os.makedirs(save_dir, exist_ok=True)
        mu = pd.DataFrame(np.array([prediction.mu for prediction in predictions]), columns=list(response_names))
        mu.insert(0, "subject", np.arange(len(predictions)))
        mu.to_csv(os.path.join(save_dir, "mu.csv"), index=False, float_format=FLOAT_FORMAT)

        ridges = pd.DataFrame({"subject": np.arange(len(predictions)),
                               "ridge_added": [prediction.ridge_added for prediction in predictions]})
        ridges.to_csv(os.path.join(save_dir, "ridge.csv"), index=False, float_format=FLOAT_FORMAT)

        if with_omega:
            frames = []
            for i, prediction in enumerate(predictions):
                rows, cols = np.nonzero(np.triu(prediction.omega))
                frames.append(pd.DataFrame({"subject": i, "j": rows, "k": cols, "value": prediction.omega[rows, cols]}))
            pd.concat(frames, ignore_index=True).to_csv(os.path.join(save_dir, "omega.csv"), index=False,
                                                        float_format=FLOAT_FORMAT)

    @staticmethod
    def save_table(frame: pd.DataFrame, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
