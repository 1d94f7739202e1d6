from django.apps import AppConfig


class StabilizationConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'stabilization'
    verbose_name = 'Data-driven stabilization'
