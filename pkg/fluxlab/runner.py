"""Execute a validated run configuration and collect result rows."""
import logging
from dataclasses import dataclass, field

from rest_framework import serializers

from .dicke_gaussian import critical_coupling, gamma_core, monte_carlo_oracle, scan
from .export import Journal, provenance, write_results
from .kerr_model import sweep
from .serializers import DickeRowSerializer, ResultRowSerializer, expand_grid

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    model: str
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.failures


class _Collector:
    """Turns finished points into rows on the calling thread and journals them."""

    def __init__(self, outcome, serializer_class, context, journal=None):
        self.outcome = outcome
        self.serializer_class = serializer_class
        self.context = context
        self.journal = journal

    def __call__(self, record):
        label = f"N={record.N} eps={record.eps:.17g}" if hasattr(record, "eps") else f"lambda={record.lam:.17g}"
        if not record.ok:
            self.outcome.failures.append((label, record.error))
            return
        try:
            row = self.serializer_class(record, context=self.context).data
        except serializers.ValidationError as exc:
            self.outcome.failures.append((label, f"non-finite result {exc.detail}"))
            return
        self.outcome.rows.append(row)
        if self.journal is not None:
            self.journal.append(row)


def _check_oracle(point, p, samples, seed):
    """Compare the closed-form budget of one Dicke point with sampled integrals."""
    estimate = monte_carlo_oracle(point.covariance, point.hp, p.at(point.lam), samples, seed)
    for name, exact, sampled, error in (
        ("S", point.budget.S, estimate.S, estimate.S_se),
        ("Pi_d", point.budget.Pi_d, estimate.Pi_d, estimate.Pi_d_se),
        ("Pi_u", point.budget.Pi_u, estimate.Pi_u, estimate.Pi_u_se),
    ):
        if abs(exact - sampled) > max(1e-2 * abs(exact), 5.0 * error):
            logger.warning("lambda=%g: %s closed form %.6g vs sampled %.6g +- %.2g.",
                           point.lam, name, exact, sampled, error)


def execute(config, raw_config, threads=1, journal=True):
    """Run every point of ``config`` (validated RunConfigSerializer data)."""
    model = config["model"]
    p = config["params"]
    sweep_block = config["sweep"]
    numerics = config["numerics"]
    context = {"model": model, "record_wall_time": numerics["record_wall_time"], "N": sweep_block["N"]}
    outcome = RunOutcome(model=model)
    extra = {}
    log = Journal(config["output"]) if journal else None

    try:
        if model == "dicke":
            lambda_c = critical_coupling(p)
            extra = {"lambda_c": lambda_c, "gamma_core": gamma_core(p)}
            grid = expand_grid(sweep_block["lambda_grid"], scale=lambda_c)
            collect = _Collector(outcome, DickeRowSerializer, context, log)
            points = scan(p, grid, N=sweep_block["N"], threads=threads, on_record=collect)
            if numerics["mc_samples"]:
                for point in points:
                    if point.ok:
                        _check_oracle(point, p, numerics["mc_samples"], numerics["seed"])
        else:
            eps_grid = expand_grid(sweep_block["eps_grid"]) if "eps_grid" in sweep_block else [p.eps]
            N_list = [1] if model == "cavity" else sweep_block.get("N_list")
            collect = _Collector(outcome, ResultRowSerializer, context, log)
            sweep(
                p, N_list, eps_grid, threads=threads, n_max=numerics["n_max"],
                points_per_axis=numerics["points_per_axis"], balance_tol=numerics["balance_tol"],
                on_record=collect,
            )
    finally:
        if log is not None:
            log.close()

    outcome.metadata = provenance(raw_config, model, **extra)
    return outcome


def finish(outcome, output, keep_going=False):
    """Write the final table when the run may stand; drop the journal afterwards."""
    if outcome.failures and not keep_going:
        return None
    frame = write_results(output, outcome.rows, outcome.model, outcome.metadata)
    Journal.discard(output)
    return frame
