"""
Django settings for the md_aux project.

Only the admin (for the FitRun archive) and the two project apps are
installed; the numerical library itself needs nothing beyond the ``MD_AUX``
dict below.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('MD_AUX_SECRET_KEY', 'django-insecure-md-aux-local-development-key')

# Also enables ``verify --fault-inject``.
DEBUG = os.environ.get('MD_AUX_DEBUG', '').lower() in ('1', 'true', 'yes', 'on')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',         # Admin panel (FitRun archive)
    'django.contrib.auth',          # Admin login
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'priors.apps.PriorsConfig',     # Multi-Dirichlet numerical library
    'fitting.apps.FittingConfig',   # Hierarchical inference and the commands
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'md_aux.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.2/howto/static-files/

STATIC_URL = 'static/'

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging: diagnostics go to stderr, stdout stays free for command output.
# https://docs.djangoproject.com/en/5.2/topics/logging/

MD_AUX_LOG_LEVEL = os.environ.get('MD_AUX_LOG_LEVEL', 'WARNING').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'priors': {
            'handlers': ['console'],
            'level': MD_AUX_LOG_LEVEL,
            'propagate': False,
        },
        'fitting': {
            'handlers': ['console'],
            'level': MD_AUX_LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Library tunables, see priors/conf.py for the defaults.

MD_AUX = {
    'STIRLING_CAP': 10_000,
    'ENUMERATION_MAX_TOTAL_COUNT': 8,
    'ENUMERATION_MAX_PARENTS': 3,
    'ENUMERATION_MAX_CATEGORIES': 3,
    'ENUMERATION_CEILING': 10_000_000,
    'VERIFY_SEED': 20240501,
    'VERIFY_CASES': 50,
    'VERIFY_URN_REPS': 100_000,
}
