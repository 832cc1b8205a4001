"""CLI languages management.
"""

from apgarch.experiments import ReplicationOutcome
from apgarch.model import LyapunovEstimate

from typing import Optional


def get_raw(key: str, kwargs: Optional[dict], default: Optional[str] = None) -> str:
    """Get a message translated using the given keyword formatting arguments.

    :param key: The key of the message to translate.
    :param kwargs: The keyword formatting dictionary.
    :return: Translated message, or the default value if not found. By default, the
    default value if the key itself.
    """
    try:
        return lang[key].format_map(kwargs or {})
    except KeyError:
        return key if default is None else default


def get(key: str, **kwargs) -> str:
    """Get a message translated using the given keyword formatting arguments.

    :param key: The key of the message to translate.
    :return: Translated message, or the key itself if not found.
    """
    return get_raw(key, kwargs)


lang = {
    # Args root
    "args._":
        "  Simulation, quasi-maximum likelihood estimation and portmanteau adequacy tests\n"
        "  for multivariate CCC asymmetric power GARCH models, with a Monte Carlo harness\n"
        "  measuring the size and power of the test.\n\n",
    "args.output": "Set the output format, defaults to human-color, human if not a TTY.",
    "args.verbose": "Enable verbose output, per-iteration and per-replication lines "
        "are printed and tracebacks are shown on failure.",
    "args.jobs": "Number of parallel jobs for Monte Carlo replications, -1 for all cores (default 1).",
    # Args common
    "args.common.help": "Show this help message and exit.",
    "args.common.order": "Model order as 'd,p,q': dimension, GARCH order and ARCH order.",
    "args.common.params": "Parameters file, TOML or JSON, matrices as row-major lists.",
    "args.common.seed": "Base seed of the random streams.",
    "args.common.data": "CSV file of prices with a header line.",
    "args.common.columns": "Comma-separated columns to extract from the CSV file.",
    "args.common.transform": "Transformation of prices into returns (default log_return_100).",
    "args.common.date_column": "Column used to sort rows by date (default 'Date').",
    "args.common.delta_mode": "Whether the power is known or estimated (default known).",
    "args.common.delta": "Comma-separated power, the known value or the starting value.",
    "args.common.max_iters": "Maximum number of quasi-Newton iterations (default 500).",
    "args.common.grad_tol": "Gradient tolerance of the fit (default 1e-5).",
    "args.common.m_max": "Largest lag of the portmanteau test (default 12).",
    "args.common.alpha": "Nominal level of the test (default 0.05).",
    "args.common.method": "Estimator of the asymptotic covariance (default general).",
    # Args simulate
    "args.simulate": "Simulate a series from a model.",
    "args.simulate.n": "Number of observations.",
    "args.simulate.burn_in": "Number of discarded initial observations (default 500).",
    "args.simulate.stream": "Stream id of the simulation (default 0).",
    "args.simulate.out": "Output CSV file.",
    # Args fit
    "args.fit": "Fit a model to return series.",
    "args.fit.out": "Output JSON report.",
    # Args test
    "args.test": "Run the portmanteau test on a fitted model.",
    "args.test.fit": "JSON report produced by the fit command.",
    "args.test.out": "Output report, JSON or CSV depending on the suffix.",
    # Args mc
    "args.mc_size": "Run a Monte Carlo experiment of the empirical size.",
    "args.mc_power": "Run a Monte Carlo experiment of the empirical power.",
    "args.mc.config": "Experiment configuration TOML file.",
    "args.mc.out": "Output CSV table of rejection frequencies.",
    "args.mc.json": "Output JSON file with raw per-replication statistics.",
    "args.mc.seed": "Base seed of the experiment, replaces the one of the configuration.",
    # Args stationarity
    "args.stationarity": "Estimate the top Lyapunov exponent of a model.",
    "args.stationarity.products": "Number of random matrix products (default 10000).",
    # Args screen
    "args.screen": "Fit several orders and test each of them.",
    "args.screen.orders": "Orders to fit, each as 'd,p,q'.",
    "args.screen.out": "Output CSV table of p-values.",
    # Args show
    "args.show": "Show and debug various data.",
    "args.show.about": "Display authors, version and license information.",
    "args.show.lang": "Show every translation key and message.",
    # Args parsing errors
    "args.order.invalid": "invalid order '{given}', expected 'd,p,q'",
    "args.floats.invalid": "invalid list of numbers '{given}'",
    "args.columns.invalid": "invalid list of columns '{given}'",
    "args.jobs.invalid": "invalid jobs count '{given}', expected a positive count or -1",
    "args.level.invalid": "invalid level '{given}', expected a number in (0, 1)",
    # Common
    "echo": "{echo}",
    "data.loaded": "Loaded {n} observations of {columns} from {path}",
    "data.dropped": "Dropped {count} rows with missing values",
    "params.loaded": "Loaded parameters from {path}",
    "report.written": "Report written to {path}",
    # Simulate
    "simulate.running": "Simulating {n} observations of order {order}...",
    "simulate.done": "Simulated {n} observations to {path}",
    # Fit
    "fit.start": "Fitting order {order} on {n} observations ({n_params} parameters)...",
    "fit.iteration": "Iteration {iteration}: objective {objective}, gradient {grad_norm}",
    "fit.done": "Fit converged in {iterations} iterations (log-likelihood {loglik})",
    "fit.not_converged": "Fit stopped after {iterations} iterations (gradient {grad_norm})",
    "fit.small_sample": "Only {n} observations for {n_params} parameters, estimates may be unreliable",
    "fit.delta_mismatch": "Power has {given} components, expected {expected}",
    "fit.table.name": "Parameter",
    "fit.table.estimate": "Estimate",
    "fit.table.std_err": "Std. err.",
    "fit.table.t_ratio": "t-ratio",
    # Test
    "test.running": "Testing lags 1 to {m_max} ({method})...",
    "test.done": "Tested {count} lags",
    "test.columns_missing": "Columns must be given, the report doesn't record them",
    "test.table.stat_r": "Stat",
    "test.table.pvalue_r": "p-value",
    "test.table.stat_rho": "Stat ρ",
    "test.table.pvalue_rho": "p-value ρ",
    "test.table.band": "Band",
    # Monte Carlo
    "mc.start": "Running {replications} {kind} replications on {jobs} jobs...",
    "mc.progress": "Replications: {count}/{total}",
    "mc.failed": "Replication {stream_id} failed: {reason}",
    f"mc.failed.{ReplicationOutcome.NOT_CONVERGED}": "not converged",
    f"mc.failed.{ReplicationOutcome.SINGULAR_J}": "singular information matrix",
    f"mc.failed.{ReplicationOutcome.SINGULAR_D}": "singular test covariance",
    f"mc.failed.{ReplicationOutcome.OVERFLOW}": "numeric overflow",
    f"mc.failed.{ReplicationOutcome.NOT_POSITIVE_DEFINITE}": "matrix not positive definite",
    f"mc.failed.{ReplicationOutcome.INVALID_PARAMS}": "invalid parameters",
    "mc.done": "Completed {n_ok} replications in {elapsed} ({n_failed} failed fits)",
    "mc.dgp_is_null": "The data generating process is an instance of the fitted model, "
        "this measures the size",
    "mc.interval": "Nominal interval at {alpha}: {low95}-{high95}% (95%), {low99}-{high99}% (99%)",
    "mc.written": "Table written to {path}",
    "mc.json_written": "Raw statistics written to {path}",
    "mc.table.alpha": "α",
    # Stationarity
    "stationarity.running": "Computing {products} random matrix products...",
    "stationarity.result": "Top Lyapunov exponent {gamma} (std. err. {std_err})",
    f"stationarity.verdict.{LyapunovEstimate.STATIONARY}": "The model is strictly stationary",
    f"stationarity.verdict.{LyapunovEstimate.EXPLOSIVE}": "The model is explosive",
    f"stationarity.verdict.{LyapunovEstimate.INCONCLUSIVE}": "Stationarity is inconclusive",
    # Screen
    "screen.fitting": "Fitting and testing order {order}...",
    "screen.fitted": "Order {order} tested",
    "screen.failed": "Order {order} failed: {message}",
    "screen.table.model": "Model",
    "screen.table.delta": "δ",
    "screen.table.loglik": "Log-lik",
    "screen.table.failed": "failed",
    # Errors
    "error.invalid_params": "Invalid parameters: {error}",
    "error.overflow": "Numeric overflow in the volatility recursion: {error}",
    "error.not_positive_definite": "Matrix not positive definite: {error}",
    "error.not_converged": "Fit did not converge: {error}",
    "error.singular_j": "Information matrix is singular: {error}",
    "error.singular_d": "Test covariance is singular: {error}",
    "error.lag_too_large": "Lag too large: {error}",
    "error.mode_mismatch": "Power mode mismatch: {error}",
    "error.degenerate_order": "Degenerate order: {error}",
    "error.domain": "Out of domain: {error}",
    "error.missing_column": "Missing column: {error}",
    "error.parse": "Parse error: {error}",
    "error.empty_series": "Empty series: {error}",
    "error.too_many_failed_fits": "Too many failed fits: {error}",
    "error.os": "Unexpected operating system error.",
    "suggest_verbose": "Unexpected error, use -v for more details.",
    "keyboard_interrupt": "Interrupted.",
}
