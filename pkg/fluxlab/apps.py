from django.apps import AppConfig

class FluxlabConfig(AppConfig):
    name = "fluxlab"
    verbose_name = "Phase-space entropy production"

    def ready(self):
        import fluxlab.signals
