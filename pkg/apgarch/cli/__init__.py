"""Entry module for the apgarch Command Line Interface.

This module implements all (sub)commands of the CLI, the arguments parser, language and
other utilities are defined in child modules.

**Note that this module, even when no *underscore* "_" is used, should not be considered
as part of the public API.**
"""

from pathlib import Path
import sys
import io

import numpy as np

from .parse import register_arguments, RootNs, DataNs, FitBaseNs, SimulateNs, FitNs, TestNs, \
    McNs, StationarityNs, ScreenNs
from .util import format_duration, format_float, format_number, format_pvalue, format_vector
from .output import Output, HumanOutput, MachineOutput
from .lang import get as _

from apgarch.model import ModelOrder, PowerMode, InvalidParamsError, NumericOverflowError, \
    DegenerateOrderError, ModeMismatchError, parameter_names, validate_params, simulate, \
    lyapunov_exponent
from apgarch.qmle import FitConfig, FitResult, NotConvergedError, SingularJError, \
    auto_init, evaluate_at, fit
from apgarch.portmanteau import SingularDError, LagTooLargeError, TestReport, run_tests
from apgarch.experiments import McConfig, McResult, TooManyFailedFitsError, \
    run_size_experiment, run_power_experiment, write_mc_csv, write_mc_json
from apgarch.data import ReturnsConfig, LoadedReturns, ReportDocument, MissingColumnError, \
    ParseError, EmptySeriesError, load_returns_csv, load_params_file, write_series_csv, \
    build_report, write_report, parse_report, report_table
from apgarch.linalg import RngStream, NotPositiveDefiniteError, DomainError
from apgarch.watcher import SimpleWatcher, FitStartEvent, FitIterationEvent, FitCompleteEvent, \
    SmallSampleWarningEvent, ExperimentStartEvent, ReplicationDoneEvent, ReplicationFailedEvent, \
    ExperimentCompleteEvent, PowerDgpIsNullWarningEvent

from typing import cast, Optional, List, Union, Dict, Callable, Any, Tuple


EXIT_OK = 0
EXIT_FAILURE = 1

# Domain errors and their message key, the first matching class is used.
ERROR_KEYS = [
    (InvalidParamsError, "error.invalid_params"),
    (NumericOverflowError, "error.overflow"),
    (NotPositiveDefiniteError, "error.not_positive_definite"),
    (NotConvergedError, "error.not_converged"),
    (SingularJError, "error.singular_j"),
    (SingularDError, "error.singular_d"),
    (LagTooLargeError, "error.lag_too_large"),
    (ModeMismatchError, "error.mode_mismatch"),
    (DegenerateOrderError, "error.degenerate_order"),
    (DomainError, "error.domain"),
    (MissingColumnError, "error.missing_column"),
    (ParseError, "error.parse"),
    (EmptySeriesError, "error.empty_series"),
    (TooManyFailedFitsError, "error.too_many_failed_fits"),
]

DOMAIN_ERRORS = tuple(error_type for error_type, _key in ERROR_KEYS)

CommandHandler = Callable[[Any], Any]
CommandTree = Dict[str, Union[CommandHandler, "CommandTree"]]


def main(args: Optional[List[str]] = None):
    """Main entry point of the CLI. This function parses the input arguments and try to
    find a command handler to dispatch to. These command handlers are specified by the
    `get_command_handlers` function.
    """

    if isinstance(sys.stdout, io.TextIOWrapper):
        sys.stdout.reconfigure(encoding='utf-8')
    if isinstance(sys.stderr, io.TextIOWrapper):
        sys.stderr.reconfigure(encoding='utf-8')

    parser = register_arguments()
    ns: RootNs = cast(RootNs, parser.parse_args(args or sys.argv[1:]))

    ns.parser = parser
    ns.out = get_output(ns.out_kind)

    command_handlers = get_command_handlers()
    command_attr = "subcommand"
    while True:
        command = getattr(ns, command_attr)
        handler = command_handlers.get(command)
        if handler is None:
            parser.print_help()
            sys.exit(EXIT_FAILURE)
        elif callable(handler):
            cmd(handler, ns)
        elif isinstance(handler, dict):
            command_attr = f"{command}_{command_attr}"
            command_handlers = handler
            continue
        sys.exit(EXIT_OK)


def get_output(kind: str) -> Output:
    """Internal function that construct the output depending on its kind.
    The kind is constrained by choices set to the arguments parser.
    """

    if kind == "human-color":
        return HumanOutput(True)
    elif kind == "human":
        return HumanOutput(False)
    elif kind == "machine":
        return MachineOutput()
    else:
        raise ValueError()


def get_command_handlers() -> CommandTree:
    """Internal function returns the tree of command handlers for each subcommand
    of the CLI argument parser.
    """

    return {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "test": cmd_test,
        "mc-size": cmd_mc_size,
        "mc-power": cmd_mc_power,
        "stationarity": cmd_stationarity,
        "screen": cmd_screen,
        "show": {
            "about": cmd_show_about,
            "lang": cmd_show_lang,
        },
    }


def get_error_key(error: Exception) -> str:
    for error_type, key in ERROR_KEYS:
        if isinstance(error, error_type):
            return key
    raise ValueError(f"no message for {type(error).__name__}")


def cmd(handler: CommandHandler, ns: RootNs):
    """Generic command handler that launch the given handler with the given namespace,
    it handles error in order to pretty print them.
    """

    try:
        handler(ns)
        sys.exit(EXIT_OK)

    except DOMAIN_ERRORS as error:
        ns.out.finish()
        ns.out.task("FAILED", get_error_key(error), error=str(error))
        ns.out.finish()
        if ns.verbose >= 1:
            import traceback
            traceback.print_exc()

    except ValueError as error:
        ns.out.finish()
        if len(error.args):
            for i, arg in enumerate(error.args):
                ns.out.task("FAILED" if i == 0 else None, "echo", echo=arg)
                ns.out.finish()
        else:
            ns.out.task("FAILED", "echo", echo="programming error")
            ns.out.finish()

        if ns.verbose >= 1:
            import traceback
            traceback.print_exc()
        else:
            ns.out.task("INFO", "suggest_verbose")
            ns.out.finish()

    except KeyboardInterrupt:
        ns.out.finish()
        ns.out.task("HALT", "keyboard_interrupt")
        ns.out.finish()

    except OSError as error:
        ns.out.finish()
        ns.out.task("FAILED", "error.os")
        ns.out.finish()
        if ns.verbose >= 1:
            import traceback
            traceback.print_exc()
        else:
            ns.out.task(None, "echo", echo=repr(error))
            ns.out.finish()
            ns.out.task("INFO", "suggest_verbose")
            ns.out.finish()

    sys.exit(EXIT_FAILURE)


def cmd_simulate(ns: SimulateNs):

    order = ns.order
    params = load_params(ns, ns.params, order)

    ns.out.task("..", "simulate.running", n=ns.n, order=str(order))
    series = simulate(order, params, ns.n, ns.burn_in, RngStream(ns.seed, ns.stream))
    write_series_csv(series, ns.out_file)
    ns.out.task("OK", "simulate.done", n=ns.n, path=str(ns.out_file))
    ns.out.finish()


def cmd_fit(ns: FitNs):

    loaded = load_series(ns, ns.columns)
    order = ns.order.with_mode(ns.delta_mode)
    result = fit_series(ns, order, loaded.values)
    print_fit(ns, result)

    doc = build_report(result, [], get_report_meta(ns, ns.columns))
    if ns.out_file is not None:
        write_output(ns, ns.out_file, write_report(doc, "json"))


def cmd_test(ns: TestNs):

    doc = parse_report(ns.fit.read_bytes())
    columns = ns.columns or doc.meta.get("columns")
    if not columns:
        ns.out.task("FAILED", "test.columns_missing")
        ns.out.finish()
        sys.exit(EXIT_FAILURE)

    loaded = load_series(ns, columns)
    order = doc.order
    params = doc.params()
    validate_params(order, params)

    result = evaluate_at(order, params, loaded.values,
                         converged=bool(doc.meta.get("converged", True)),
                         iterations=int(doc.meta.get("iterations", 0)))

    reports = run_fit_tests(ns, result)
    print_tests(ns, reports)

    meta = dict(doc.meta)
    meta.update(alpha=ns.alpha, method=ns.method)
    test_doc = build_report(result, reports, meta)
    if ns.out_file is not None:
        fmt = "csv" if ns.out_file.suffix.lower() == ".csv" else "json"
        write_output(ns, ns.out_file, write_report(test_doc, fmt))


def cmd_mc_size(ns: McNs):
    cmd_mc(ns, run_size_experiment)

def cmd_mc_power(ns: McNs):
    cmd_mc(ns, run_power_experiment)

def cmd_mc(ns: McNs, runner: Callable[..., McResult]):

    config = McConfig.from_toml(ns.config)
    config.base_seed = ns.seed

    result = runner(config, jobs=ns.jobs, watcher=McWatcher(ns))
    print_mc(ns, result)

    if ns.out_file is not None:
        write_mc_csv([result], ns.out_file)
        ns.out.task("OK", "mc.written", path=str(ns.out_file))
        ns.out.finish()
    if ns.json is not None:
        write_mc_json(result, ns.json)
        ns.out.task("OK", "mc.json_written", path=str(ns.json))
        ns.out.finish()


def cmd_stationarity(ns: StationarityNs):

    order = ns.order
    params = load_params(ns, ns.params, order)

    ns.out.task("..", "stationarity.running", products=ns.products)
    estimate = lyapunov_exponent(order, params, RngStream(ns.seed), ns.products)
    ns.out.task("OK", "stationarity.result",
        gamma=format_float(estimate.gamma_hat),
        std_err=format_float(estimate.std_err))
    ns.out.finish()

    verdict = estimate.verdict()
    ns.out.task("INFO" if verdict == estimate.STATIONARY else "WARN", f"stationarity.verdict.{verdict}")
    ns.out.finish()


def cmd_screen(ns: ScreenNs):

    loaded = load_series(ns, ns.columns)
    table = ns.out.table()
    docs: List[ReportDocument] = []
    rows: List[Tuple[ModelOrder, Optional[ReportDocument]]] = []

    for raw_order in ns.orders:
        order = raw_order.with_mode(ns.delta_mode)
        ns.out.task("..", "screen.fitting", order=str(order))
        ns.out.finish()
        try:
            result = fit_series(ns, order, loaded.values)
            reports = run_tests(result, ns.m_max, ns.alpha, ns.method)
        except DOMAIN_ERRORS as error:
            ns.out.task("WARN", "screen.failed", order=str(order), message=str(error))
            ns.out.finish()
            rows.append((order, None))
            continue
        meta = get_report_meta(ns, ns.columns)
        meta.update(alpha=ns.alpha, method=ns.method)
        doc = build_report(result, reports, meta)
        docs.append(doc)
        rows.append((order, doc))
        ns.out.task("OK", "screen.fitted", order=str(order))
        ns.out.finish()

    table.add(_("screen.table.model"), *(f"m={m}" for m in range(1, ns.m_max + 1)),
              _("screen.table.delta"), _("screen.table.loglik"))
    table.separator()
    for order, doc in rows:
        label = f"({order.p},{order.q})"
        if doc is None:
            table.add(label, _("screen.table.failed"))
        else:
            table.add(label,
                      *(format_pvalue(test["pvalue_r"]) for test in doc.tests),
                      format_vector(doc.params_hat["delta"]),
                      format_float(doc.loglik_mean))
    table.print()

    if ns.out_file is not None:
        data = report_table(docs).to_csv(index=False, lineterminator="\n").encode("utf-8")
        write_output(ns, ns.out_file, data)


def cmd_show_about(ns: RootNs):

    from .. import LIB_VERSION, LIB_AUTHORS, LIB_COPYRIGHT

    print(f"Version: {LIB_VERSION}")
    print(f"Authors: {', '.join(LIB_AUTHORS)}")
    print(f"License: {LIB_COPYRIGHT}")
    print( "         This program comes with ABSOLUTELY NO WARRANTY. This is free software,")
    print( "         and you are welcome to redistribute it under certain conditions.")
    print( "         See <https://www.gnu.org/licenses/gpl-3.0.html>.")


def cmd_show_lang(ns: RootNs):

    from .lang import lang

    table = ns.out.table()

    # Intentionally not i18n for now because used for debug purpose.
    table.add("Key", "Message")
    table.separator()

    for key, msg in lang.items():
        table.add(key, msg)

    table.print()


def load_params(ns: RootNs, path: Path, order: ModelOrder):
    params = load_params_file(path, order)
    validate_params(order, params)
    if ns.verbose >= 1:
        ns.out.task("INFO", "params.loaded", path=str(path))
        ns.out.finish()
    return params


def load_series(ns: DataNs, columns: List[str]) -> LoadedReturns:
    """Load the return series of the data arguments, rows with missing values are
    reported.
    """
    config = ReturnsConfig(columns, ns.transform, ns.date_column)
    loaded = load_returns_csv(ns.data, config)
    ns.out.task("OK", "data.loaded", n=loaded.values.shape[0], columns=",".join(columns), path=str(ns.data))
    ns.out.finish()
    if loaded.dropped:
        ns.out.task("INFO", "data.dropped", count=loaded.dropped)
        ns.out.finish()
    return loaded


def get_report_meta(ns: FitBaseNs, columns: List[str]) -> dict:
    return {
        "columns": list(columns),
        "transform": ns.transform,
        "date_column": ns.date_column,
        "data": str(ns.data),
    }


def fit_series(ns: FitBaseNs, order: ModelOrder, series: np.ndarray) -> FitResult:
    """Fit an order with the fit arguments. In known power mode the power defaults to 2,
    in estimated power mode the given power is the starting value.
    """

    if ns.delta is not None and len(ns.delta) != order.d:
        raise ValueError(_("fit.delta_mismatch", given=len(ns.delta), expected=order.d))

    if order.estimated and ns.delta is not None:
        known = order.with_mode(PowerMode.KNOWN)
        start = auto_init(known, series, FitConfig(delta=ns.delta))
        config = FitConfig(init_params=start, max_iters=ns.max_iters, grad_tol=ns.grad_tol)
    else:
        config = FitConfig(max_iters=ns.max_iters, grad_tol=ns.grad_tol, delta=ns.delta)

    return fit(order, series, config, watcher=FitWatcher(ns))


def run_fit_tests(ns: TestNs, result: FitResult) -> List[TestReport]:
    ns.out.task("..", "test.running", m_max=ns.m_max, method=ns.method)
    reports = run_tests(result, ns.m_max, ns.alpha, ns.method)
    ns.out.task("OK", "test.done", count=len(reports))
    ns.out.finish()
    return reports


def print_fit(ns: RootNs, result: FitResult) -> None:

    table = ns.out.table()
    table.add(_("fit.table.name"), _("fit.table.estimate"), _("fit.table.std_err"), _("fit.table.t_ratio"))
    table.separator()

    theta = result.params_hat.to_vector(result.order)
    std_errors = result.std_errors
    for name, value, std_err in zip(parameter_names(result.order), theta, std_errors):
        t_ratio = value / std_err if std_err > 0 else float("nan")
        table.add(name, format_float(value), format_float(std_err), f"{t_ratio:.2f}")

    if not result.order.estimated:
        table.separator()
        for i, value in enumerate(result.params_hat.delta):
            table.add(f"delta[{i + 1}]", format_float(value), "-", "-")

    table.print()


def print_tests(ns: RootNs, reports: List[TestReport]) -> None:

    table = ns.out.table()
    table.add("m",
              _("test.table.stat_r"), _("test.table.pvalue_r"),
              _("test.table.stat_rho"), _("test.table.pvalue_rho"),
              _("test.table.band"))
    table.separator()

    for report in reports:
        table.add(report.m,
                  format_float(report.stat_r), format_pvalue(report.pvalue_r),
                  format_float(report.stat_rho), format_pvalue(report.pvalue_rho),
                  f"±{report.bands[-1][1]:.4f}")

    table.print()


def print_mc(ns: McNs, result: McResult) -> None:

    config = result.config
    table = ns.out.table()
    table.add(_("mc.table.alpha"), *(f"m={m}" for m in range(1, config.m_max + 1)))
    table.separator()
    for alpha in config.alphas:
        table.add(f"{100 * alpha:g}%", *(f"{freq:.1f}" for freq in result.rejection_freq[alpha]))
    table.print()

    if result.kind == "size":
        for alpha in config.alphas:
            bounds = result.ci_bounds[alpha]
            ns.out.task("INFO", "mc.interval",
                alpha=f"{100 * alpha:g}%",
                low95=f"{bounds[0.95][0]:.1f}", high95=f"{bounds[0.95][1]:.1f}",
                low99=f"{bounds[0.99][0]:.1f}", high99=f"{bounds[0.99][1]:.1f}")
            ns.out.finish()


def write_output(ns: RootNs, path: Path, data: bytes) -> None:
    path.write_bytes(data)
    ns.out.task("OK", "report.written", path=str(path))
    ns.out.finish()


class FitWatcher(SimpleWatcher):

    def __init__(self, ns: RootNs) -> None:

        def fit_start(e: FitStartEvent) -> None:
            ns.out.task("..", "fit.start", order=str(e.order), n=e.n, n_params=e.n_params)

        def fit_iteration(e: FitIterationEvent) -> None:
            if ns.verbose >= 1:
                ns.out.task("..", "fit.iteration",
                    iteration=e.iteration,
                    objective=format_float(e.objective, 6),
                    grad_norm=format_float(e.grad_norm))

        def fit_complete(e: FitCompleteEvent) -> None:
            if e.converged:
                ns.out.task("OK", "fit.done", iterations=e.iterations, loglik=format_float(-0.5 * e.objective))
            else:
                ns.out.task("FAILED", "fit.not_converged", iterations=e.iterations, grad_norm=format_float(e.grad_norm))
            ns.out.finish()

        def small_sample(e: SmallSampleWarningEvent) -> None:
            ns.out.task("WARN", "fit.small_sample", n=e.n, n_params=e.n_params)
            ns.out.finish()

        super().__init__({
            FitStartEvent: fit_start,
            FitIterationEvent: fit_iteration,
            FitCompleteEvent: fit_complete,
            SmallSampleWarningEvent: small_sample,
        })


class McWatcher(SimpleWatcher):

    def __init__(self, ns: RootNs) -> None:

        def experiment_start(e: ExperimentStartEvent) -> None:
            ns.out.task("..", "mc.start", replications=format_number(e.replications).strip(),
                        kind=e.kind, jobs=e.jobs)

        def replication_done(e: ReplicationDoneEvent) -> None:
            total = str(e.total)
            ns.out.task("..", "mc.progress", count=f"{e.count:{len(total)}}", total=total)

        def replication_failed(e: ReplicationFailedEvent) -> None:
            if ns.verbose >= 1:
                ns.out.task("WARN", "mc.failed", stream_id=e.stream_id, reason=_(f"mc.failed.{e.code}"))
                ns.out.finish()

        def experiment_complete(e: ExperimentCompleteEvent) -> None:
            ns.out.task("OK", "mc.done", n_ok=e.n_ok, n_failed=e.n_failed, elapsed=format_duration(e.elapsed))
            ns.out.finish()

        def dgp_is_null(e: PowerDgpIsNullWarningEvent) -> None:
            ns.out.task("WARN", "mc.dgp_is_null")
            ns.out.finish()

        super().__init__({
            ExperimentStartEvent: experiment_start,
            ReplicationDoneEvent: replication_done,
            ReplicationFailedEvent: replication_failed,
            ExperimentCompleteEvent: experiment_complete,
            PowerDgpIsNullWarningEvent: dgp_is_null,
        })
