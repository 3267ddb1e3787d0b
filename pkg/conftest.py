"""Pytest wiring: configure Django before test modules are imported."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "wehrlproject.settings")
django.setup()
