from argparse import ArgumentParser, SUPPRESS, HelpFormatter, RawDescriptionHelpFormatter, \
    ArgumentTypeError
from pathlib import Path
import sys

from apgarch.model import ModelOrder, PowerMode
from apgarch.portmanteau import DMethod
from apgarch.data import Transform

from .output import Output
from .lang import get as _

from typing import Optional, Type, List

# The following classes are only used for type checking and represent a typed namespace
# as produced by the arguments registered to the argument parser.

class RootNs:
    out_kind: str
    verbose: int
    jobs: int
    # Initialized by main function after argument parsing.
    parser: ArgumentParser
    out: Output

class DataNs(RootNs):
    data: Path
    columns: Optional[List[str]]
    transform: str
    date_column: str

class FitBaseNs(DataNs):
    delta_mode: str
    delta: Optional[List[float]]
    max_iters: int
    grad_tol: float

class TestBaseNs(RootNs):
    m_max: int
    alpha: float
    method: str

class SimulateNs(RootNs):
    order: ModelOrder
    params: Path
    n: int
    burn_in: int
    seed: int
    stream: int
    out_file: Path

class FitNs(FitBaseNs):
    order: ModelOrder
    out_file: Optional[Path]

class TestNs(DataNs, TestBaseNs):
    fit: Path
    out_file: Optional[Path]

class McNs(RootNs):
    config: Path
    out_file: Optional[Path]
    json: Optional[Path]
    seed: int

class StationarityNs(RootNs):
    order: ModelOrder
    params: Path
    products: int
    seed: int

class ScreenNs(FitBaseNs, TestBaseNs):
    orders: List[ModelOrder]
    out_file: Optional[Path]


def register_common_help(parser: ArgumentParser) -> None:
    parser.formatter_class = new_help_formatter_class(40)
    parser.add_argument("-h", "--help", action="help", default=SUPPRESS, help=_("args.common.help"))


def register_common_data(parser: ArgumentParser, columns_required: bool = True) -> None:
    parser.add_argument("--data", help=_("args.common.data"), type=type_path, required=True)
    parser.add_argument("--columns", help=_("args.common.columns"), type=type_columns, required=columns_required)
    parser.add_argument("--transform", help=_("args.common.transform"), choices=Transform.ALL, default=Transform.LOG_RETURN_100)
    parser.add_argument("--date-column", help=_("args.common.date_column"), default="Date", metavar="NAME")


def register_common_fit(parser: ArgumentParser) -> None:
    parser.add_argument("--delta-mode", help=_("args.common.delta_mode"), choices=PowerMode.ALL, default=PowerMode.KNOWN)
    parser.add_argument("--delta", help=_("args.common.delta"), type=type_floats, metavar="V1,V2")
    parser.add_argument("--max-iters", help=_("args.common.max_iters"), type=type_positive_int, default=500)
    parser.add_argument("--grad-tol", help=_("args.common.grad_tol"), type=float, default=1e-5)


def register_common_test(parser: ArgumentParser) -> None:
    parser.add_argument("--m-max", help=_("args.common.m_max"), type=type_positive_int, default=12)
    parser.add_argument("--alpha", help=_("args.common.alpha"), type=type_level, default=0.05)
    parser.add_argument("--method", help=_("args.common.method"), choices=DMethod.ALL, default=DMethod.GENERAL)


def register_arguments() -> ArgumentParser:

    parser = ArgumentParser(allow_abbrev=False, prog="apgarch", description=_("args._"), add_help=False)
    register_common_help(parser)

    output_default = "human-color" if sys.stdout.isatty() else "human"
    parser.add_argument("--output", help=_("args.output"), dest="out_kind", choices=get_outputs(), default=output_default)
    parser.add_argument("-v", dest="verbose", help=_("args.verbose"), action="count", default=0)
    parser.add_argument("--jobs", help=_("args.jobs"), type=type_jobs, default=1)
    register_subcommands(parser.add_subparsers(title="subcommands", dest="subcommand"))

    return parser


def register_subcommands(subparsers) -> None:
    register_simulate_arguments(subparsers.add_parser("simulate", help=_("args.simulate"), add_help=False))
    register_fit_arguments(subparsers.add_parser("fit", help=_("args.fit"), add_help=False))
    register_test_arguments(subparsers.add_parser("test", help=_("args.test"), add_help=False))
    register_mc_arguments(subparsers.add_parser("mc-size", help=_("args.mc_size"), add_help=False))
    register_mc_arguments(subparsers.add_parser("mc-power", help=_("args.mc_power"), add_help=False))
    register_stationarity_arguments(subparsers.add_parser("stationarity", help=_("args.stationarity"), add_help=False))
    register_screen_arguments(subparsers.add_parser("screen", help=_("args.screen"), add_help=False))
    register_show_arguments(subparsers.add_parser("show", help=_("args.show"), add_help=False))


def register_simulate_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    parser.add_argument("--order", help=_("args.common.order"), type=type_order, required=True)
    parser.add_argument("--params", help=_("args.common.params"), type=type_path, required=True)
    parser.add_argument("--n", help=_("args.simulate.n"), type=type_positive_int, required=True)
    parser.add_argument("--burn-in", help=_("args.simulate.burn_in"), type=type_natural_int, default=500)
    parser.add_argument("--seed", help=_("args.common.seed"), type=type_natural_int, required=True)
    parser.add_argument("--stream", help=_("args.simulate.stream"), type=type_natural_int, default=0)
    parser.add_argument("--out", dest="out_file", help=_("args.simulate.out"), type=type_path, required=True)


def register_fit_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    register_common_data(parser)
    parser.add_argument("--order", help=_("args.common.order"), type=type_order, required=True)
    register_common_fit(parser)
    parser.add_argument("--out", dest="out_file", help=_("args.fit.out"), type=type_path)


def register_test_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    parser.add_argument("--fit", help=_("args.test.fit"), type=type_path, required=True)
    register_common_data(parser, columns_required=False)
    register_common_test(parser)
    parser.add_argument("--out", dest="out_file", help=_("args.test.out"), type=type_path)


def register_mc_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    parser.add_argument("--config", help=_("args.mc.config"), type=type_path, required=True)
    parser.add_argument("--out", dest="out_file", help=_("args.mc.out"), type=type_path)
    parser.add_argument("--json", help=_("args.mc.json"), type=type_path)
    parser.add_argument("--seed", help=_("args.mc.seed"), type=type_natural_int, required=True)


def register_stationarity_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    parser.add_argument("--order", help=_("args.common.order"), type=type_order, required=True)
    parser.add_argument("--params", help=_("args.common.params"), type=type_path, required=True)
    parser.add_argument("--products", help=_("args.stationarity.products"), type=type_positive_int, default=10000)
    parser.add_argument("--seed", help=_("args.common.seed"), type=type_natural_int, required=True)


def register_screen_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    register_common_data(parser)
    parser.add_argument("--orders", help=_("args.screen.orders"), type=type_order, nargs="+", required=True)
    register_common_fit(parser)
    register_common_test(parser)
    parser.add_argument("--out", dest="out_file", help=_("args.screen.out"), type=type_path)


def register_show_arguments(parser: ArgumentParser) -> None:
    register_common_help(parser)
    subparsers = parser.add_subparsers(title="subcommands", dest="show_subcommand")
    subparsers.required = True
    subparsers.add_parser("about", help=_("args.show.about"), add_help=False)
    subparsers.add_parser("lang", help=_("args.show.lang"), add_help=False)


def new_help_formatter_class(max_help_position: int) -> Type[HelpFormatter]:

    class CustomHelpFormatter(RawDescriptionHelpFormatter):
        def __init__(self, prog):
            super().__init__(prog, max_help_position=max_help_position)

    return CustomHelpFormatter


def get_outputs() -> List[str]:
    return ["human-color", "human", "machine"]


def type_path(s: str) -> Path:
    return Path(s)

def type_order(s: str) -> ModelOrder:
    try:
        return ModelOrder.from_str(s)
    except ValueError:
        raise ArgumentTypeError(_("args.order.invalid", given=s))

def type_floats(s: str) -> List[float]:
    try:
        return [float(part) for part in s.split(",")]
    except ValueError:
        raise ArgumentTypeError(_("args.floats.invalid", given=s))

def type_columns(s: str) -> List[str]:
    columns = [part.strip() for part in s.split(",")]
    if not all(columns):
        raise ArgumentTypeError(_("args.columns.invalid", given=s))
    return columns

def type_jobs(s: str) -> int:
    try:
        jobs = int(s)
    except ValueError:
        jobs = 0
    if jobs == 0 or jobs < -1:
        raise ArgumentTypeError(_("args.jobs.invalid", given=s))
    return jobs

def type_level(s: str) -> float:
    try:
        level = float(s)
    except ValueError:
        level = -1.0
    if not 0 < level < 1:
        raise ArgumentTypeError(_("args.level.invalid", given=s))
    return level

def type_positive_int(s: str) -> int:
    value = int(s)
    if value < 1:
        raise ArgumentTypeError(f"expected a positive integer, got {s}")
    return value

def type_natural_int(s: str) -> int:
    value = int(s)
    if value < 0:
        raise ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return value
