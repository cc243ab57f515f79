import logging
import time
from functools import wraps


def timeit(func):
    log = logging.getLogger(func.__module__)

    @wraps(func)
    def wrapper(*args, **kwargs):
        name = func.__qualname__
        log.debug("start: %s.", name)
        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        finally:
            elapsed = time.perf_counter() - start
            log.debug("finished: %s (took %.3f s).", name, elapsed)
        return result

    return wrapper
