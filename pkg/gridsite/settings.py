"""
Django settings for the gridsite project.

The project hosts no web views; Django provides configuration, management
commands, forms, templates, the run ledger and the test runner.
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('GRIDSITE_SECRET_KEY', 'gridsite-local-only-key')

DEBUG = os.environ.get('GRIDSITE_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'forecastattack.apps.ForecastattackConfig',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [],
        },
    },
]


# Database (run ledger only)

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

TIME_ZONE = 'UTC'

USE_TZ = True


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'timestamped': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'timestamped',
        },
    },
    'loggers': {
        'forecastattack': {
            'handlers': ['console'],
            'level': os.environ.get('FORECASTATTACK_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Experiment settings. Only overrides go here; the defaults live in
# forecastattack.conf.DEFAULTS and are merged key by key.

FORECASTATTACK = {}
