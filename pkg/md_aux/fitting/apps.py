from django.apps import AppConfig


class FittingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'fitting'
    verbose_name = 'Hierarchical fitting'
