"""
WSGI entry point for the stabilization API (gunicorn config.wsgi).

The API is read-only; experiments are run with the management commands.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")

application = get_wsgi_application()
