import logging
import os

import pandas as pd

from src.Dataset import NodewiseFit
from src.Tuning import CV_COLUMNS, CvResult

logger = logging.getLogger(__name__)

FIT_LOG_COLUMNS = ["node", "alpha_s", "lambda0", "lam", "lam_g", "iterations", "converged",
                   "kkt_residual", "sigma2", "objective", "s_beta", "s_gamma", "n_dropped", "failed"]


class FitMonitor:
    """
    Collects per-node diagnostics of a fit so they can be exported next to the model.
    """
    def __init__(self):
        self.fits = {}
        self.failures = {}
        self.cv_results = []

    def observe_cv(self, result: CvResult) -> None:
        self.cv_results.append(result)

    def observe_fit(self, fit: NodewiseFit) -> None:
        self.fits[fit.node] = fit

    def observe_failure(self, node: int, error: Exception) -> None:
        self.failures[node] = error

    def cv_table(self) -> pd.DataFrame:
        if not self.cv_results:
            return pd.DataFrame(columns=CV_COLUMNS)
        return CvResult.merge(self.cv_results).table

    def fit_log(self) -> pd.DataFrame:
        rows = []
        for node, fit in sorted(self.fits.items()):
            penalty = fit.penalty
            rows.append({
                "node": node,
                "alpha_s": penalty.alpha_s if penalty is not None else float("nan"),
                "lambda0": penalty.lambda0 if penalty is not None else float("nan"),
                "lam": penalty.lam if penalty is not None else float("nan"),
                "lam_g": penalty.lam_g if penalty is not None else float("nan"),
                "iterations": fit.iterations,
                "converged": fit.converged,
                "kkt_residual": fit.kkt_residual,
                "sigma2": fit.sigma2,
                "objective": fit.objective,
                "s_beta": fit.s_beta,
                "s_gamma": fit.s_gamma,
                "n_dropped": fit.n_dropped,
                "failed": node in self.failures,
            })
        return pd.DataFrame(rows, columns=FIT_LOG_COLUMNS)

    def save(self, save_dir: str, cv_name: str = "cv.csv", log_name: str = "fit_log.csv") -> None:
        os.makedirs(save_dir, exist_ok=True)
        self.cv_table().to_csv(os.path.join(save_dir, cv_name), index=False, float_format="%.17g")
        self.fit_log().to_csv(os.path.join(save_dir, log_name), index=False, float_format="%.17g")
        logger.info("Wrote %s and %s to %s", cv_name, log_name, save_dir)
