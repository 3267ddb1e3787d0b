"""
Django settings for the wehrlflux project.

The project has no web surface and no database: Django provides the
settings layer, management commands, signals and the test runner.
Numerical defaults for every module live in ``WEHRLFLUX`` below.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing here is served.
SECRET_KEY = os.environ.get('WEHRLFLUX_SECRET_KEY', 'wehrlflux-batch-only-not-served')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'fluxlab',
]

DATABASES = {}


REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'UNAUTHENTICATED_USER': None,
}


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'fluxlab': {
            'handlers': ['console'],
            'level': os.environ.get('WEHRLFLUX_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Numerical defaults, grouped by module.

WEHRLFLUX = {
    'FOCK': {
        'CUTOFF_C1': 1.5,
        'CUTOFF_C2': 5.0,
        'DENSE_LIMIT': 64,
        'COHERENT_OCCUPATION_RATIO': 0.5,
        'LEAKAGE_BOUND': 1e-10,
        'HERMITIAN_TOL': 1e-10,
        'TRACE_TOL': 1e-10,
        'EXPECTATION_IMAG_TOL': 1e-10,
        'POSITIVITY_TOL': 1e-8,
    },
    'LIOUVILLIAN': {
        'SHIFT': 1e-8,
        'RESIDUAL_TOL': 1e-10,
        'DEGENERACY_TOL': 1e-12,
        'CONVERGENCE_STEP': 10,
        'CONVERGENCE_TOL': 1e-8,
        'MAX_CUTOFF': 400,
        'DENSE_EIG_LIMIT': 400,
        'GAP_EIGENVALUES': 12,
        'RK4_SAFETY': 0.1,
        'TRACE_DRIFT_TOL': 1e-9,
    },
    'PHASE_SPACE': {
        'POINTS_PER_AXIS': 128,
        'MIN_POINTS_PER_AXIS': 64,
        'HALF_WIDTH_FACTOR': 6.0,
        'GRID_GROWTH': 1.5,
        'GRID_ATTEMPTS': 4,
        'MASS_TOL': 1e-6,
        'Q_FLOOR': 1e-14,
        'BALANCE_TOL': 1e-2,
        'IMAG_WARN_TOL': 1e-8,
        'IMAG_FAIL_TOL': 1e-6,
    },
    'KERR': {
        'N_LIST': [10, 15, 20, 25, 30],
    },
    'DICKE': {
        'LYAPUNOV_TOL': 1e-10,
        'PHYSICALITY_TOL': 1e-9,
        'HURWITZ_MARGIN': 1e-12,
        'GAMMA_WARN_RATIO': 0.01,
        'CORE_FACTOR': 10.0,
        'MIN_FIT_POINTS': 5,
        'DIVERGENCE_WINDOW': (0.03, 0.15),
        'MC_CHUNK': 2 ** 16,
    },
    'RUN': {
        'SCHEMA_VERSION': 1,
        'THREADS': int(os.environ.get('WEHRLFLUX_THREADS', '1')),
    },
}
