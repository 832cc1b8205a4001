"""Monte Carlo harness measuring the empirical size and power of the portmanteau test.
Each replication simulates a series from the data generating process, fits the null
model and runs the test for every lag up to m_max. Replications are independent tasks
keyed by their stream id and are reduced in replication order, so that serial and
parallel runs give identical tables.
"""

from pathlib import Path
import json
import time

from joblib import Parallel, delayed
import pandas as pd
import numpy as np
import toml

from .model import ModelOrder, Params, PowerMode, InvalidParamsError, NumericOverflowError, \
    validate_params, simulate
from .qmle import FitConfig, NotConvergedError, SingularJError, fit
from .portmanteau import DMethod, SingularDError, run_tests
from .linalg import RngStream, NotPositiveDefiniteError, normal_quantile
from .watcher import Watcher, ExperimentStartEvent, ReplicationDoneEvent, ReplicationFailedEvent, \
    ExperimentCompleteEvent, PowerDgpIsNullWarningEvent
from .util import merge_dict

from typing import Dict, List, Optional, Tuple, Union


MAX_FAILED_RATIO = 0.2
CI_LEVELS = (0.95, 0.99)

SYM_A = [[0.45, 0.25], [0.25, 0.35]]
ASYM_A_PLUS = [[0.25, 0.10], [0.10, 0.15]]
ALT_B = [[0.43, 0.1], [0.1, 0.42]]
DGP_OMEGA = [0.2, 0.3]
DGP_RHO = [0.7]

DEFAULT_CONFIG = {
    "n": 500,
    "replications": 100,
    "m_max": 12,
    "alphas": [0.01, 0.05, 0.10],
    "base_seed": 0,
    "burn_in": 500,
    "power_mode": PowerMode.KNOWN,
    "method": DMethod.GENERAL,
    "dgp": {
        "preset": "sym",
        "delta": [1.0, 1.0],
    },
    "fit": {
        "max_iters": 500,
        "grad_tol": 1e-5,
        "start": "dgp",
    },
}


class DgpPreset:
    SYM = "sym"
    ASYM = "asym"
    ALT = "alt"

    ALL = (SYM, ASYM, ALT)


def dgp_preset(name: str, delta=(1.0, 1.0)) -> Tuple[ModelOrder, Params]:
    """Bivariate designs of the simulation study: CCC-APGARCH(0,1) with symmetric
    (`sym`) or asymmetric (`asym`) ARCH coefficients, and the CCC-APGARCH(1,1)
    alternative (`alt`) adding a GARCH matrix to the asymmetric design.
    """

    delta = np.array(delta, dtype=float).reshape(-1)
    if delta.shape != (2,):
        raise ValueError(f"preset: power must have 2 components, got {delta.tolist()}")

    if name == DgpPreset.SYM:
        order = ModelOrder(2, 0, 1)
        params = Params(DGP_OMEGA, [SYM_A], [SYM_A], np.zeros((0, 2, 2)), DGP_RHO, delta)
    elif name == DgpPreset.ASYM:
        order = ModelOrder(2, 0, 1)
        params = Params(DGP_OMEGA, [ASYM_A_PLUS], [SYM_A], np.zeros((0, 2, 2)), DGP_RHO, delta)
    elif name == DgpPreset.ALT:
        order = ModelOrder(2, 1, 1)
        params = Params(DGP_OMEGA, [ASYM_A_PLUS], [SYM_A], [ALT_B], DGP_RHO, delta)
    else:
        raise ValueError(f"preset: unknown {name!r}, expected one of {', '.join(DgpPreset.ALL)}")

    return order, params


def nominal_interval(alpha: float, n_rep: int, level: float = 0.95) -> Tuple[float, float]:
    """Interval, in percent, where the rejection frequency of a test of exact level
    alpha falls with the given probability over n_rep replications (normal
    approximation of the binomial).
    """
    if not 0 < alpha < 1 or not 0 < level < 1:
        raise ValueError("interval: alpha and level must be in (0, 1)")
    if n_rep < 1:
        raise ValueError(f"interval: n_rep must be positive, got {n_rep}")
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    half = z * np.sqrt(alpha * (1.0 - alpha) / n_rep)
    return max(0.0, 100.0 * (alpha - half)), 100.0 * (alpha + half)


class McConfig:
    """Configuration of a Monte Carlo experiment.

    :param fitted_delta: Known power used for fitting in known power mode, defaults to
    the power of the data generating process. A different value gives the power
    misspecification study.
    :param start: Either "dgp" to start every fit from the data generating parameters
    (adapted to the fitted orders), or "auto" for automatic starting values.
    """

    __slots__ = "dgp_order", "dgp_params", "fitted_order", "n", "replications", "m_max", \
        "alphas", "base_seed", "burn_in", "fitted_delta", "method", "max_iters", "grad_tol", \
        "start", "label"

    def __init__(self,
        dgp_order: ModelOrder,
        dgp_params: Params,
        fitted_order: ModelOrder,
        n: int,
        replications: int,
        *,
        m_max: int = 12,
        alphas: List[float] = (0.01, 0.05, 0.10),
        base_seed: int = 0,
        burn_in: int = 500,
        fitted_delta=None,
        method: str = DMethod.GENERAL,
        max_iters: int = 500,
        grad_tol: float = 1e-5,
        start: str = "dgp",
        label: Optional[str] = None,
    ) -> None:

        if replications < 1:
            raise ValueError(f"mc config: replications must be positive, got {replications}")
        if m_max < 1 or m_max >= n:
            raise ValueError(f"mc config: m_max must be in [1, n), got {m_max} with n={n}")
        if not alphas or any(not 0 < a < 1 for a in alphas):
            raise ValueError(f"mc config: alphas must be in (0, 1), got {list(alphas)}")
        if base_seed < 0 or burn_in < 0:
            raise ValueError("mc config: base_seed and burn_in must be non-negative")
        if method not in DMethod.ALL:
            raise ValueError(f"mc config: unknown method {method!r}")
        if start not in ("dgp", "auto"):
            raise ValueError(f"mc config: unknown start {start!r}")
        if dgp_order.d != fitted_order.d:
            raise ValueError("mc config: data generating and fitted dimensions differ")

        validate_params(dgp_order, dgp_params)

        self.dgp_order = dgp_order
        self.dgp_params = dgp_params
        self.fitted_order = fitted_order
        self.n = int(n)
        self.replications = int(replications)
        self.m_max = int(m_max)
        self.alphas = sorted(float(a) for a in alphas)
        self.base_seed = int(base_seed)
        self.burn_in = int(burn_in)
        self.method = method
        self.max_iters = int(max_iters)
        self.grad_tol = float(grad_tol)
        self.start = start

        if fitted_delta is None:
            self.fitted_delta = dgp_params.delta.copy()
        else:
            self.fitted_delta = np.array(fitted_delta, dtype=float).reshape(-1)
            if self.fitted_delta.shape != (fitted_order.d,):
                raise ValueError(f"mc config: fitted power must have {fitted_order.d} components")

        self.label = label or "({})".format(",".join(f"{v:g}" for v in dgp_params.delta))

    @property
    def power_mode(self) -> str:
        return self.fitted_order.power_mode

    @classmethod
    def from_dict(cls, data: dict) -> "McConfig":
        """Build a config from a dictionary as read from a TOML file, missing keys are
        taken from the defaults.
        """

        data = json.loads(json.dumps(data))  # Deep copy, also rejects non plain values.
        merge_dict(data, DEFAULT_CONFIG)

        power_mode = data["power_mode"]
        if power_mode not in PowerMode.ALL:
            raise ValueError(f"mc config: unknown power_mode {power_mode!r}")

        dgp = data["dgp"]
        if "params" in dgp:
            if "order" not in dgp:
                raise ValueError("mc config: dgp.order is required with explicit params")
            dgp_order = ModelOrder.from_str(str(dgp["order"]))
            dgp_params = Params.from_dict(dgp_order, merge_params_delta(dgp["params"], dgp["delta"]))
        else:
            dgp_order, dgp_params = dgp_preset(dgp["preset"], dgp["delta"])

        fit_data = data["fit"]
        if "order" in fit_data:
            fitted_order = ModelOrder.from_str(str(fit_data["order"]), power_mode)
        else:
            fitted_order = dgp_order.with_mode(power_mode)

        return cls(dgp_order, dgp_params, fitted_order, data["n"], data["replications"],
                   m_max=data["m_max"],
                   alphas=data["alphas"],
                   base_seed=data["base_seed"],
                   burn_in=data["burn_in"],
                   fitted_delta=fit_data.get("delta"),
                   method=data["method"],
                   max_iters=fit_data["max_iters"],
                   grad_tol=fit_data["grad_tol"],
                   start=fit_data["start"],
                   label=data.get("label"))

    @classmethod
    def from_toml(cls, path: Union[str, Path]) -> "McConfig":
        with open(path, "rt", encoding="utf-8") as fp:
            return cls.from_dict(toml.load(fp))

    def start_params(self) -> Optional[Params]:
        """Starting parameters of every fit, None for automatic starting values. Lags
        missing from the data generating process start at 0.01 and its extra lags are
        dropped.
        """

        if self.start == "auto":
            return None

        src, order = self.dgp_params, self.fitted_order
        d = order.d

        def resize(mats: np.ndarray, count: int) -> np.ndarray:
            out = np.full((count, d, d), 0.01)
            keep = min(count, mats.shape[0])
            out[:keep] = mats[:keep]
            return out

        delta = src.delta.copy() if order.estimated else self.fitted_delta.copy()
        return Params(src.omega, resize(src.a_plus, order.q), resize(src.a_minus, order.q),
                      resize(src.b, order.p), src.rho, delta)

    def fit_config(self) -> FitConfig:
        return FitConfig(init_params=self.start_params(),
                         max_iters=self.max_iters,
                         grad_tol=self.grad_tol,
                         delta=self.fitted_delta)

    def dgp_is_null(self) -> bool:
        """Return true if the data generating process is an instance of the fitted
        model, in which case a power experiment only measures the size.
        """

        src, order = self.dgp_params, self.fitted_order
        if src.a_plus.shape[0] > order.q and np.any(src.a_plus[order.q:] != 0):
            return False
        if src.a_minus.shape[0] > order.q and np.any(src.a_minus[order.q:] != 0):
            return False
        if src.b.shape[0] > order.p and np.any(src.b[order.p:] != 0):
            return False
        return order.estimated or bool(np.all(src.delta == self.fitted_delta))


def merge_params_delta(params: dict, delta) -> dict:
    params = dict(params)
    params.setdefault("delta", delta)
    return params


class ReplicationOutcome:
    """Result of a single replication: statistics and p-values for m = 1..m_max, or an
    error code if the replication failed.
    """

    NOT_CONVERGED = "not_converged"
    SINGULAR_J = "singular_j"
    SINGULAR_D = "singular_d"
    OVERFLOW = "overflow"
    NOT_POSITIVE_DEFINITE = "not_positive_definite"
    INVALID_PARAMS = "invalid_params"

    __slots__ = "stream_id", "stats", "pvalues", "code", "message", "elapsed"

    def __init__(self, stream_id: int, stats: Optional[np.ndarray], pvalues: Optional[np.ndarray],
                 code: Optional[str], message: Optional[str], elapsed: float) -> None:
        self.stream_id = stream_id
        self.stats = stats
        self.pvalues = pvalues
        self.code = code
        self.message = message
        self.elapsed = elapsed

    @property
    def ok(self) -> bool:
        return self.code is None

    def to_dict(self) -> Optional[dict]:
        if not self.ok:
            return None
        return {
            "stat_r": self.stats.tolist(),
            "pvalue_r": self.pvalues.tolist(),
        }


def run_replication(config: McConfig, stream_id: int) -> ReplicationOutcome:
    """Run one replication, domain errors are returned as failed outcomes. This is a
    module-level function so that it can be sent to worker processes.
    """

    start = time.perf_counter()
    rng = RngStream(config.base_seed, stream_id)

    code = None
    try:
        series = simulate(config.dgp_order, config.dgp_params, config.n, config.burn_in, rng)
        result = fit(config.fitted_order, series, config.fit_config())
        reports = run_tests(result, config.m_max, method=config.method)
    except NotConvergedError as e:
        code, error = ReplicationOutcome.NOT_CONVERGED, e
    except SingularJError as e:
        code, error = ReplicationOutcome.SINGULAR_J, e
    except SingularDError as e:
        code, error = ReplicationOutcome.SINGULAR_D, e
    except NumericOverflowError as e:
        code, error = ReplicationOutcome.OVERFLOW, e
    except NotPositiveDefiniteError as e:
        code, error = ReplicationOutcome.NOT_POSITIVE_DEFINITE, e
    except InvalidParamsError as e:
        code, error = ReplicationOutcome.INVALID_PARAMS, e

    elapsed = time.perf_counter() - start
    if code is not None:
        return ReplicationOutcome(stream_id, None, None, code, str(error), elapsed)

    stats = np.array([report.stat_r for report in reports])
    pvalues = np.array([report.pvalue_r for report in reports])
    return ReplicationOutcome(stream_id, stats, pvalues, None, None, elapsed)


class McResult:
    """Rejection frequencies of an experiment, in percent, per alpha and per lag
    m = 1..m_max. Failed replications are excluded from the denominators.
    """

    __slots__ = "config", "kind", "rejection_freq", "n_failed_fits", "ci_bounds", "elapsed", "raw"

    def __init__(self, config: McConfig, kind: str, rejection_freq: Dict[float, np.ndarray],
                 n_failed_fits: int, ci_bounds: Dict[float, Dict[float, Tuple[float, float]]],
                 elapsed: float, raw: List[ReplicationOutcome]) -> None:
        self.config = config
        self.kind = kind
        self.rejection_freq = rejection_freq
        self.n_failed_fits = n_failed_fits
        self.ci_bounds = ci_bounds
        self.elapsed = elapsed
        self.raw = raw

    @property
    def n_ok(self) -> int:
        return len(self.raw) - self.n_failed_fits

    def table(self) -> pd.DataFrame:
        """Frequencies laid out with rows (δ, n, α) and columns m = 1..m_max, α being
        given in percent.
        """
        rows = []
        for alpha in self.config.alphas:
            row = {"delta": self.config.label, "n": self.config.n, "alpha": f"{100 * alpha:g}%"}
            for m, freq in enumerate(self.rejection_freq[alpha], start=1):
                row[f"m{m}"] = freq
            rows.append(row)
        return pd.DataFrame(rows)


def run_size_experiment(config: McConfig, *,
    jobs: int = 1,
    watcher: Optional[Watcher] = None
) -> McResult:
    """Empirical size: the data generating process must have the fitted orders.

    :raises TooManyFailedFitsError: If more than 20% of the fits fail.
    """
    if not config.dgp_order.same_orders(config.fitted_order):
        raise ValueError(f"size experiment: dgp order {config.dgp_order} differs from fitted order {config.fitted_order}")
    return _run_experiment(config, "size", jobs, watcher or Watcher())


def run_power_experiment(config: McConfig, *,
    jobs: int = 1,
    watcher: Optional[Watcher] = None
) -> McResult:
    """Empirical power against an alternative data generating process, a warning
    event is emitted if the process is actually an instance of the fitted model.

    :raises TooManyFailedFitsError: If more than 20% of the fits fail.
    """
    watcher = watcher or Watcher()
    if config.dgp_is_null():
        watcher.handle(PowerDgpIsNullWarningEvent())
    return _run_experiment(config, "power", jobs, watcher)


def _run_experiment(config: McConfig, kind: str, jobs: int, watcher: Watcher) -> McResult:

    if jobs == 0 or jobs < -1:
        raise ValueError(f"jobs: expected a positive count or -1, got {jobs}")

    total = config.replications
    max_failed = int(MAX_FAILED_RATIO * total)
    watcher.handle(ExperimentStartEvent(kind, total, jobs))

    start = time.perf_counter()
    outcomes: List[ReplicationOutcome] = []
    failed = 0

    # Results come back in replication order, whatever the number of jobs.
    parallel = Parallel(n_jobs=jobs, return_as="generator")
    for outcome in parallel(delayed(run_replication)(config, r) for r in range(total)):
        outcomes.append(outcome)
        if not outcome.ok:
            failed += 1
            watcher.handle(ReplicationFailedEvent(outcome.stream_id, outcome.code, outcome.message))
            if failed > max_failed:
                raise TooManyFailedFitsError(failed, total)
        watcher.handle(ReplicationDoneEvent(outcome.stream_id, len(outcomes), total))

    elapsed = time.perf_counter() - start
    n_ok = total - failed
    watcher.handle(ExperimentCompleteEvent(n_ok, failed, elapsed))

    pvalues = np.array([o.pvalues for o in outcomes if o.ok]).reshape(n_ok, config.m_max)
    freq = {}
    ci_bounds = {}
    for alpha in config.alphas:
        freq[alpha] = 100.0 * np.count_nonzero(pvalues < alpha, axis=0) / n_ok
        ci_bounds[alpha] = {level: nominal_interval(alpha, n_ok, level) for level in CI_LEVELS}

    return McResult(config, kind, freq, failed, ci_bounds, elapsed, outcomes)


def write_mc_csv(results: List[McResult], path: Union[str, Path]) -> None:
    """Write the frequency tables of one or more results, one decimal.
    """
    if not results:
        raise ValueError("results: at least one result is required")
    frame = pd.concat([result.table() for result in results], ignore_index=True)
    frame.to_csv(path, index=False, float_format="%.1f", lineterminator="\n")


def write_mc_json(result: McResult, path: Union[str, Path]) -> None:
    """Write the raw per-replication statistics with the tables, in stream order.
    """
    config = result.config
    doc = {
        "kind": result.kind,
        "dgp_order": str(config.dgp_order),
        "dgp_params": config.dgp_params.to_dict(),
        "fitted_order": str(config.fitted_order),
        "power_mode": config.power_mode,
        "fitted_delta": config.fitted_delta.tolist(),
        "n": config.n,
        "replications": config.replications,
        "base_seed": config.base_seed,
        "method": config.method,
        "n_failed_fits": result.n_failed_fits,
        "elapsed": result.elapsed,
        "rejection_freq": {f"{alpha:g}": freq.tolist() for alpha, freq in result.rejection_freq.items()},
        "ci_bounds": {
            f"{alpha:g}": {f"{level:g}": list(bounds) for level, bounds in levels.items()}
            for alpha, levels in result.ci_bounds.items()
        },
        "raw": [outcome.to_dict() for outcome in result.raw],
    }
    with open(path, "wt", encoding="utf-8") as fp:
        json.dump(doc, fp, indent=2, sort_keys=True)
        fp.write("\n")


class TooManyFailedFitsError(Exception):
    """Raised when more than 20% of the replications of an experiment failed.
    """
    def __init__(self, failed: int, total: int) -> None:
        self.failed = failed
        self.total = total

    def __str__(self) -> str:
        return f"{self.failed} failed fits over {self.total} replications"
