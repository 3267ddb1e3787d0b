from django.core.management.base import BaseCommand, CommandError

from fluxlab.exceptions import InsufficientPointsError
from fluxlab.kerr_model import collapse_transform, estimate_eps_c

from ._common import CONFIG_ERROR, NUMERICAL_ERROR, load_results


class Command(BaseCommand):
    help = "Print x = N(eps/eps_c - 1) against Pi_u and Pi_d/N with the collapse metric."

    def add_arguments(self, parser):
        parser.add_argument("results", help="results CSV of a kerr sweep")
        parser.add_argument("--eps-c", type=float, dest="eps_c", default=None,
                            help="critical drive (default: gap minimum at the largest N)")
        parser.add_argument("--min-N", type=int, dest="min_N", default=None,
                            help="ignore sweeps with smaller N")

    def handle(self, *args, **options):
        metadata, frame = load_results(options["results"])
        if metadata["model"] == "dicke":
            raise CommandError("collapse needs a kerr sweep, got a dicke scan.", returncode=CONFIG_ERROR)
        if options["min_N"] is not None:
            frame = frame[frame["N"] >= options["min_N"]]
        if frame.empty:
            raise CommandError("No rows left to collapse.", returncode=NUMERICAL_ERROR)

        eps_c = options["eps_c"]
        if eps_c is None:
            try:
                eps_c = estimate_eps_c(frame)
            except InsufficientPointsError as exc:
                raise CommandError(str(exc), returncode=NUMERICAL_ERROR) from exc
        try:
            result = collapse_transform(frame, eps_c)
        except ValueError as exc:
            raise CommandError(str(exc), returncode=CONFIG_ERROR) from exc

        self.stdout.write(f"# eps_c: {eps_c:.17g}")
        metric = "undefined" if result.metric is None else f"{result.metric:.6g}"
        self.stdout.write(f"# collapse_metric: {metric}")
        for (small, large), spread in result.pair_spreads.items():
            value = "undefined" if spread is None else f"{spread:.6g}"
            self.stdout.write(f"# spread N={small}..{large}: {value}")
        self.stdout.write(
            result.table[["x", "Pi_u", "Pi_d_over_N", "N"]].to_csv(
                index=False, float_format="%.17g", lineterminator="\n"
            ),
            ending="",
        )
