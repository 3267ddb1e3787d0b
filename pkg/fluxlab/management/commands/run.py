from django.core.management.base import BaseCommand, CommandError

from fluxlab.exceptions import FluxlabError
from fluxlab.runner import execute, finish
from fluxlab.serializers import RunConfigSerializer

from ._common import CONFIG_ERROR, IO_ERROR, NUMERICAL_ERROR, flatten_errors, load_config, resolve_threads

SUMMARY_COLUMNS = {
    "dicke": ["lambda", "Pi_ext", "Pi_u", "Pi_d", "Phi_q"],
    "kerr": ["N", "eps", "Pi_ext", "Pi_u", "Pi_d", "Phi_q", "gap"],
    "cavity": ["eps", "Pi_ext", "Pi_u", "Pi_d", "Phi_q"],
}


class Command(BaseCommand):
    help = "Run a kerr, cavity or dicke configuration and write its results table."

    def add_arguments(self, parser):
        parser.add_argument("config", help="JSON run configuration")
        parser.add_argument("--keep-going", action="store_true",
                            help="write the successful rows even when some points fail")
        parser.add_argument("--threads", type=int, default=None,
                            help="worker threads (default: WEHRLFLUX_THREADS or 1)")

    def handle(self, *args, **options):
        path = options["config"]
        raw = load_config(path)
        serializer = RunConfigSerializer(data=raw)
        if not serializer.is_valid():
            details = "\n  ".join(flatten_errors(serializer.errors))
            raise CommandError(f"{path}: invalid configuration\n  {details}", returncode=CONFIG_ERROR)
        config = serializer.validated_data
        threads = resolve_threads(options["threads"])

        try:
            outcome = execute(config, raw, threads=threads)
            frame = finish(outcome, config["output"], keep_going=options["keep_going"])
        except OSError as exc:
            raise CommandError(f"Cannot write results: {exc}", returncode=IO_ERROR) from exc
        except FluxlabError as exc:
            raise CommandError(f"Numerical failure: {exc}", returncode=NUMERICAL_ERROR) from exc

        for label, error in outcome.failures:
            self.stderr.write(f"{label}: {error}")
        if frame is None:
            raise CommandError(
                f"{len(outcome.failures)} point(s) failed; partial rows kept in "
                f"{config['output']}.partial (use --keep-going to write them).",
                returncode=NUMERICAL_ERROR,
            )
        if len(frame):
            self.stdout.write(frame[SUMMARY_COLUMNS[outcome.model]].to_string(index=False))
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(frame)} {outcome.model} rows to {config['output']}"
            + (f" ({len(outcome.failures)} failed)" if outcome.failures else "")
        ))
