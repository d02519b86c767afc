from concurrent.futures import ThreadPoolExecutor
from functools import wraps
import logging
import timeit

logger = logging.getLogger(__name__)


def agent_loop(parameters: list, jobs=1):
    """Modify a per-agent function to iterate the parameters pairwise.

    The looped parameters keep their names and receive sequences, one
    element per agent. With ``jobs > 1`` the agents run in a thread pool;
    the results are always in agent order.

    :param list parameters: parameters to loop
    :param int jobs: worker threads
    """

    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")

    def agent_loop_modifier(func):
        @wraps(func)
        def loop_wrapped(**kwargs):
            loop_values = [kwargs.pop(param) for param in parameters]
            calls = [dict(zip(parameters, value)) for value in zip(*loop_values)]

            if jobs == 1 or len(calls) < 2:
                return [func(**kwargs, **call) for call in calls]

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(lambda call: func(**kwargs, **call), calls))

        return loop_wrapped

    agent_loop_modifier.metadata = f"agent_loop({parameters!r}, jobs={jobs})"
    return agent_loop_modifier


def format_time(dt, precision):
    """Format time in seconds to a human-readable string."""

    units = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
    for unit, scale in units.items():
        if dt >= scale:
            return f"{dt / scale:.{precision}f} {unit}"
    return f"{dt:.{precision}e} s"


def log_time(level=logging.DEBUG, precision=2):
    """Log the wall time of every call."""

    timer = timeit.default_timer

    def log_time_modifier(func):
        @wraps(func)
        def wrapped(**kwargs):
            t0 = timer()
            result = func(**kwargs)
            logger.log(level, "%s - %s", func.__name__, format_time(timer() - t0, precision))
            return result

        return wrapped

    log_time_modifier.metadata = f"log_time(level={logging.getLevelName(level)})"
    return log_time_modifier
