from django.apps import AppConfig


class ForecastattackConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'forecastattack'
    verbose_name = 'Load forecast attacks'
