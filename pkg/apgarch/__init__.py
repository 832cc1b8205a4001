"""Main module for the apgarch API.

The package is organized by concern: numeric kernels in `linalg`, the model itself
(parameters, volatility filter, simulation, stationarity and derivatives) in `model`,
estimation in `qmle`, the adequacy test in `portmanteau` and the Monte Carlo harness in
`experiments`. Data ingestion and report serialization live in `data`, progress
reporting in `watcher`. The `cli` subpackage is not part of the public API.
"""

LIB_NAME = "apgarch"
LIB_VERSION = "0.3.0"
LIB_AUTHORS = ["apgarch contributors"]
LIB_COPYRIGHT = "apgarch  Copyright (C) 2024-2026  apgarch contributors"
