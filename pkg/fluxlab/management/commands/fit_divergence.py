import argparse

from django.core.management.base import BaseCommand, CommandError

from fluxlab.dicke_gaussian import fit_divergence
from fluxlab.exceptions import InsufficientPointsError

from ._common import CONFIG_ERROR, NUMERICAL_ERROR, load_results

QUANTITIES = ("Pi_d", "Phi_q", "Pi_d_b", "Phi_q_b")


def window(value):
    try:
        lo, hi = (float(part) for part in value.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {value!r}") from exc
    return lo, hi


class Command(BaseCommand):
    help = "Fit log10 Pi_d against log10|lambda_c - lambda| on each side of lambda_c."

    def add_arguments(self, parser):
        parser.add_argument("results", help="results CSV of a dicke scan")
        parser.add_argument("--window", type=window, default=None,
                            help="relative distance |lambda/lambda_c - 1| as lo,hi (default 0.03,0.15)")
        parser.add_argument("--quantity", choices=QUANTITIES, default="Pi_d")

    def handle(self, *args, **options):
        metadata, frame = load_results(options["results"], model="dicke")
        try:
            lambda_c = float(metadata["lambda_c"])
        except (KeyError, ValueError) as exc:
            raise CommandError("Results header carries no lambda_c.", returncode=CONFIG_ERROR) from exc
        core = float(metadata["gamma_core"]) if "gamma_core" in metadata else None

        try:
            fit = fit_divergence(frame["lambda"], frame[options["quantity"]], lambda_c,
                                 window=options["window"], core=core)
        except InsufficientPointsError as exc:
            raise CommandError(str(exc), returncode=NUMERICAL_ERROR) from exc
        except ValueError as exc:
            raise CommandError(str(exc), returncode=CONFIG_ERROR) from exc

        for note in fit.warnings:
            self.stderr.write(self.style.WARNING(f"warning: {note}"))
        lo, hi = fit.window
        self.stdout.write(f"lambda_c: {lambda_c:.17g}")
        self.stdout.write(f"window: {lo:g},{hi:g}")
        for side in ("left", "right"):
            result = getattr(fit, side)
            self.stdout.write(
                f"{side}: slope={result.slope:.6f} stderr={result.stderr:.2e} points={result.n_points}"
            )
