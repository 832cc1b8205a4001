"""Watchers receive progress events from long-running operations (model fitting and
Monte Carlo experiments). The library never prints, the caller decides how events are
rendered, the CLI does it through its output abstraction.
"""

from typing import Any, Callable, Dict, List, Optional


class Watcher:
    """Base class for a watcher of fitting and experiments.
    """

    def handle(self, event: Any) -> None:
        """Called when the watcher can handle the given event. Default implementation
        does nothing.
        """


class SimpleWatcher(Watcher):
    """A watcher dispatching events to handlers depending on the event's exact type.
    """

    def __init__(self, handlers: Dict[type, Callable[[Any], None]]) -> None:
        self.handlers = handlers

    def handle(self, event: Any) -> None:
        handler = self.handlers.get(type(event))
        if handler is not None:
            handler(event)


class CollectWatcher(Watcher):
    """A watcher that keeps every event, mostly useful for tests and scripting.
    """

    def __init__(self) -> None:
        self.events: List[Any] = []

    def handle(self, event: Any) -> None:
        self.events.append(event)

    def of_type(self, ty: type) -> List[Any]:
        return [e for e in self.events if isinstance(e, ty)]


class FitStartEvent:
    """Event triggered when a fit starts, with the sample size and parameter count.
    """
    __slots__ = "order", "n", "n_params"
    def __init__(self, order: Any, n: int, n_params: int) -> None:
        self.order = order
        self.n = n
        self.n_params = n_params

class FitIterationEvent:
    """Event triggered after each quasi-Newton iteration.
    """
    __slots__ = "iteration", "objective", "grad_norm"
    def __init__(self, iteration: int, objective: float, grad_norm: float) -> None:
        self.iteration = iteration
        self.objective = objective
        self.grad_norm = grad_norm

class FitCompleteEvent:
    __slots__ = "iterations", "objective", "grad_norm", "converged"
    def __init__(self, iterations: int, objective: float, grad_norm: float, converged: bool) -> None:
        self.iterations = iterations
        self.objective = objective
        self.grad_norm = grad_norm
        self.converged = converged

class SmallSampleWarningEvent:
    """Event triggered when a fit is requested with fewer than ten observations per
    parameter.
    """
    __slots__ = "n", "n_params"
    def __init__(self, n: int, n_params: int) -> None:
        self.n = n
        self.n_params = n_params

class ExperimentStartEvent:
    __slots__ = "kind", "replications", "jobs"
    def __init__(self, kind: str, replications: int, jobs: int) -> None:
        self.kind = kind
        self.replications = replications
        self.jobs = jobs

class ReplicationDoneEvent:
    """Event triggered when a replication result is collected, in replication order.
    The count is the number of collected results so far.
    """
    __slots__ = "stream_id", "count", "total"
    def __init__(self, stream_id: int, count: int, total: int) -> None:
        self.stream_id = stream_id
        self.count = count
        self.total = total

class ReplicationFailedEvent:
    """Event triggered when a replication failed, the error code and message are given.
    """
    __slots__ = "stream_id", "code", "message"
    def __init__(self, stream_id: int, code: str, message: Optional[str]) -> None:
        self.stream_id = stream_id
        self.code = code
        self.message = message

class ExperimentCompleteEvent:
    __slots__ = "n_ok", "n_failed", "elapsed"
    def __init__(self, n_ok: int, n_failed: int, elapsed: float) -> None:
        self.n_ok = n_ok
        self.n_failed = n_failed
        self.elapsed = elapsed

class PowerDgpIsNullWarningEvent:
    """Event triggered when a power experiment is run with a data generating process
    that is itself an instance of the fitted null model.
    """
    __slots__ = tuple()
