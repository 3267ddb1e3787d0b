"""``wehrlflux`` console script: the batch commands without ``manage.py``."""
import os
import sys

ALIASES = {"fit-divergence": "fit_divergence"}


def main(argv=None):
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "wehrlproject.settings")
    from django.core.management import execute_from_command_line

    argv = list(sys.argv if argv is None else argv)
    argv[0] = "wehrlflux"
    if len(argv) > 1:
        argv[1] = ALIASES.get(argv[1], argv[1])
    execute_from_command_line(argv)


if __name__ == "__main__":
    main()
