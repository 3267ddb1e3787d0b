import logging

from django.dispatch import Signal, receiver

logger = logging.getLogger(__name__)

# Sent once per finished sweep or scan point with ``record`` and ``total``.
sweep_point_computed = Signal()


@receiver(sweep_point_computed)
def log_sweep_progress(sender, record, total=None, **kwargs):
    if getattr(record, "ok", True):
        logger.info("Computed %s (%s points in run).", _label(record), total or "?")
    else:
        logger.warning("Point %s failed: %s", _label(record), record.error)


def _label(record):
    if hasattr(record, "eps"):
        return f"N={record.N} eps={record.eps:.6g}"
    return f"lambda={record.lam:.6g}"
