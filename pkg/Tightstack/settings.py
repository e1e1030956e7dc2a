"""
Django settings for Tightstack project.

The computational defaults of the deformation app live in DEFORMATION; job
options come from command flags and job files, never from the environment.
"""

import os
from pathlib import Path
import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-tightstack-local-development-key')

DEBUG = os.environ.get('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = [
    'localhost',
    '127.0.0.1',
]

# Application definition
INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',

    # Your apps
    'deformation',
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

ROOT_URLCONF = 'Tightstack.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

# Database (only the verification-run ledger is stored)
DATABASES = {
    'default': dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
        conn_max_age=600,
    )
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

STATIC_URL = '/static/'
STATIC_ROOT = BASE_DIR / 'staticfiles'

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Deformation settings
DEFORMATION = {
    'TRUNCATION_ORDER': 2,
    'MAX_TRUNCATION_ORDER': 4,
    'STAR_ORDER': 2,
    'TEST_MONOMIAL_DEGREE': 4,
    'ASSOCIATIVITY_SOLVE_DEGREE': 2,
    'ASSOCIATIVITY_CHECK_DEGREE': 3,
    'ANSATZ_COEFFICIENT_DEGREE': 2,
    'ANSATZ_OPERATOR_ORDER': 3,
    'TILE_REFINEMENT': 1,
    'FINENESS_RADIUS': None,
    'SCHEMA_VERSION': '1.0',
    'EXPORT_SCHEMA_ID': 'tightstack.descent-data/1',
    'LOG_LEVEL': 'WARNING',
}

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'deformation': {
            'handlers': ['console'],
            'level': DEFORMATION['LOG_LEVEL'],
            'propagate': False,
        },
    },
}
