"""Input and output of the package: return series from price CSV files (such as the ECB
reference rates history), parameter files and fit/test report documents.
"""

from pathlib import Path
import json

import pandas as pd
import numpy as np
import toml

from .model import ModelOrder, Params, parameter_names
from .qmle import FitResult
from .portmanteau import TestReport
from . import LIB_VERSION

from typing import Any, Dict, List, Optional, Union


MISSING_MARKERS = ("", "N/A", "NA", "NaN", "-")
REPORT_FORMATS = ("json", "csv")


class Transform:
    """Transformation applied to price columns.
    """
    LOG_RETURN_100 = "log_return_100"
    LOG_RETURN = "log_return"
    RAW = "raw"

    ALL = (LOG_RETURN_100, LOG_RETURN, RAW)


class ReturnsConfig:
    """Columns to extract from a CSV file and the transformation to apply. Rows are
    sorted by the date column when it is present in the file.
    """

    __slots__ = "columns", "transform", "date_column"

    def __init__(self, columns: List[str], transform: str = Transform.LOG_RETURN_100,
                 date_column: Optional[str] = "Date") -> None:
        if not columns:
            raise ValueError("returns config: at least one column is required")
        if len(set(columns)) != len(columns):
            raise ValueError(f"returns config: duplicated columns in {columns}")
        if transform not in Transform.ALL:
            raise ValueError(f"returns config: unknown transform {transform!r}")
        self.columns = list(columns)
        self.transform = transform
        self.date_column = date_column


class LoadedReturns:
    """Series loaded from a CSV file. `n_prices` is the number of complete rows kept
    before the transformation and `dropped` the number of rows dropped because one of
    the requested cells was missing.
    """

    __slots__ = "values", "dropped", "n_prices", "dates"

    def __init__(self, values: np.ndarray, dropped: int, n_prices: int, dates: Optional[pd.Series]) -> None:
        self.values = values
        self.dropped = dropped
        self.n_prices = n_prices
        self.dates = dates


def load_returns_csv(path: Union[str, Path], config: ReturnsConfig) -> LoadedReturns:
    """Load the requested columns of a CSV file and transform them into returns.
    Numeric cells must use a decimal point. Rows with a missing value in any of the
    requested columns are dropped before differencing.

    :raises MissingColumnError: If a requested column is absent.
    :raises ParseError: If a cell is neither numeric nor a missing marker, or if a
    price is not positive for a log transform.
    :raises EmptySeriesError: If no observation remains.
    """

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]

    for column in config.columns:
        if column not in frame.columns:
            raise MissingColumnError(column)

    # Line number in the file, the header being line 1.
    lines = np.arange(2, len(frame) + 2)

    raw = frame[config.columns].apply(lambda s: s.str.strip())
    missing = raw.isin(MISSING_MARKERS)
    values = raw.apply(lambda s: s.map(_parse_float))
    for column in config.columns:
        bad = values[column].isna() & ~missing[column]
        if bad.any():
            idx = int(np.argmax(bad.to_numpy()))
            raise ParseError(int(lines[idx]), column, raw[column].iloc[idx])

    keep = ~missing.any(axis=1).to_numpy()
    dropped = int(np.count_nonzero(~keep))
    values = values[keep]
    lines = lines[keep]

    dates = None
    if config.date_column is not None and config.date_column in frame.columns:
        date_strings = frame[config.date_column][keep].str.strip()
        dates = pd.to_datetime(date_strings, errors="coerce", format="%Y-%m-%d")
        if dates.isna().any():
            idx = int(np.argmax(dates.isna().to_numpy()))
            raise ParseError(int(lines[idx]), config.date_column, date_strings.iloc[idx])
        order = np.argsort(dates.to_numpy(), kind="stable")
        values = values.iloc[order]
        lines = lines[order]
        dates = dates.iloc[order].reset_index(drop=True)

    prices = values.to_numpy(dtype=float)
    if not np.all(np.isfinite(prices)):
        row, col = np.argwhere(~np.isfinite(prices))[0]
        raise ParseError(int(lines[row]), config.columns[col], str(prices[row, col]))

    if config.transform == Transform.RAW:
        series = prices
    else:
        if np.any(prices <= 0):
            row, col = np.argwhere(prices <= 0)[0]
            raise ParseError(int(lines[row]), config.columns[col], str(prices[row, col]))
        series = np.diff(np.log(prices), axis=0)
        if config.transform == Transform.LOG_RETURN_100:
            series = 100.0 * series
        if dates is not None:
            dates = dates.iloc[1:].reset_index(drop=True)

    if series.shape[0] == 0:
        raise EmptySeriesError()

    return LoadedReturns(series, dropped, prices.shape[0], dates)


def _parse_float(cell: str) -> float:
    """Correctly rounded parsing of a cell, NaN when not a number.
    """
    try:
        return float(cell)
    except ValueError:
        return float("nan")


def write_series_csv(series: np.ndarray, path: Union[str, Path], columns: Optional[List[str]] = None) -> None:
    """Write a simulated series, one column per component, full float precision.
    """
    series = np.asarray(series, dtype=float)
    if columns is None:
        columns = [f"eps{i + 1}" for i in range(series.shape[1])]
    frame = pd.DataFrame(series, columns=columns)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def load_params_file(path: Union[str, Path], order: ModelOrder) -> Params:
    """Load parameters from a TOML or JSON file (chosen by suffix), matrices being
    row-major nested lists.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    with open(path, "rt", encoding="utf-8") as fp:
        if suffix == ".toml":
            data = toml.load(fp)
        elif suffix == ".json":
            data = json.load(fp)
        else:
            raise ValueError(f"params file: unsupported suffix {suffix!r}, expected .toml or .json")
    if not isinstance(data, dict):
        raise ValueError("params file: expected a table at top level")
    return Params.from_dict(order, data)


def dump_params_file(params: Params, path: Union[str, Path]) -> None:
    path = Path(path)
    with open(path, "wt", encoding="utf-8") as fp:
        if path.suffix.lower() == ".toml":
            toml.dump(params.to_dict(), fp)
        else:
            json.dump(params.to_dict(), fp, indent=2, sort_keys=True)
            fp.write("\n")


class ReportDocument:
    """A fit summary with the test reports for each requested lag, this is the document
    exchanged between the `fit` and `test` commands.
    """

    __slots__ = "model", "params_hat", "vcov_diag", "loglik_mean", "tests", "meta"

    def __init__(self, model: Dict[str, Any], params_hat: Dict[str, Any], vcov_diag: List[float],
                 loglik_mean: float, tests: List[Dict[str, Any]], meta: Dict[str, Any]) -> None:
        self.model = model
        self.params_hat = params_hat
        self.vcov_diag = vcov_diag
        self.loglik_mean = loglik_mean
        self.tests = tests
        self.meta = meta

    @property
    def order(self) -> ModelOrder:
        return ModelOrder.from_str(self.model["order"], self.model["power_mode"])

    def params(self) -> Params:
        return Params.from_dict(self.order, self.params_hat)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params_hat": self.params_hat,
            "vcov_diag": self.vcov_diag,
            "loglik_mean": self.loglik_mean,
            "tests": self.tests,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReportDocument":
        try:
            return cls(data["model"], data["params_hat"], data["vcov_diag"],
                       data["loglik_mean"], data["tests"], data["meta"])
        except (KeyError, TypeError) as e:
            raise ValueError(f"report: missing key {e}")


def build_report(fit: FitResult, reports: List[TestReport], meta: Optional[Dict[str, Any]] = None) -> ReportDocument:
    """Build the report document of a fit and its test reports.
    """
    order = fit.order
    model = {
        "order": str(order),
        "power_mode": order.power_mode,
        "names": parameter_names(order),
    }
    full_meta = {
        "version": LIB_VERSION,
        "numpy": np.__version__,
        "init": fit.init_policy,
        "n": fit.n_used,
        "iterations": fit.iterations,
        "converged": fit.converged,
    }
    full_meta.update(meta or {})
    return ReportDocument(model, fit.params_hat.to_dict(), np.diag(fit.vcov).tolist(),
                          float(fit.loglik_mean), [report.to_dict() for report in reports], full_meta)


def write_report(doc: ReportDocument, fmt: str) -> bytes:
    """Serialize a report. JSON documents are indented with sorted keys, CSV is the lag
    grid of p-values with the power and the mean log-likelihood.
    """
    if fmt == "json":
        text = json.dumps(doc.to_dict(), indent=2, sort_keys=True) + "\n"
        return text.encode("utf-8")
    elif fmt == "csv":
        return report_table([doc]).to_csv(index=False, lineterminator="\n").encode("utf-8")
    else:
        raise ValueError(f"report: unknown format {fmt!r}, expected one of {', '.join(REPORT_FORMATS)}")


def parse_report(data: bytes) -> ReportDocument:
    """Parse a JSON report as produced by `write_report`.
    """
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError(f"report: invalid json ({e})")
    if not isinstance(raw, dict):
        raise ValueError("report: expected an object at top level")
    return ReportDocument.from_dict(raw)


def report_table(docs: List[ReportDocument]) -> pd.DataFrame:
    """Lag grid of several reports, one row per report having tests, p-values with
    three decimals. The power and log-likelihood are formatted as well, so that the
    CSV output is stable.
    """
    m_max = max((len(doc.tests) for doc in docs), default=0)
    header = ["series", "model"] + [f"m{m}" for m in range(1, m_max + 1)] + ["delta", "loglik"]
    rows = []
    for doc in docs:
        if not doc.tests:
            continue
        d, p, q = (int(x) for x in doc.model["order"].split(","))
        row = {
            "series": "({})".format(",".join(doc.meta.get("columns", []))),
            "model": f"({p},{q})",
        }
        for test in doc.tests:
            row[f"m{test['m']}"] = f"{test['pvalue_r']:.3f}"
        row["delta"] = "({})".format(",".join(f"{v:.3f}" for v in doc.params_hat["delta"]))
        row["loglik"] = f"{doc.loglik_mean:.4f}"
        rows.append(row)
    return pd.DataFrame(rows, columns=header)


class MissingColumnError(Exception):
    def __init__(self, column: str) -> None:
        self.column = column

    def __str__(self) -> str:
        return f"column {self.column!r} not found"

class ParseError(Exception):
    """Raised when a CSV cell cannot be parsed, the row is the line number in the file.
    """
    def __init__(self, row: int, column: str, value: str) -> None:
        self.row = row
        self.column = column
        self.value = value

    def __str__(self) -> str:
        return f"line {self.row}, column {self.column!r}: invalid value {self.value!r}"

class EmptySeriesError(Exception):
    def __str__(self) -> str:
        return "no observation left"
