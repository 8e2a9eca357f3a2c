import logging
import os

logger = logging.getLogger(__name__)

THREADS_ENV = 'ZOEGD_THREADS'


def worker_count(requested=None):
    """
    Number of worker threads to use: `requested` if given, else the
    ZOEGD_THREADS cap, else the CPU count. Always at least 1.
    """
    if requested is not None:
        return max(1, int(requested))
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f'ignoring {THREADS_ENV}={raw!r}: not an integer')
    return os.cpu_count() or 1
