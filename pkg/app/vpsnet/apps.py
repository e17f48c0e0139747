from django.apps import AppConfig
from django.conf import settings


class VpsnetConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "vpsnet"

    def ready(self):
        # Reproducible runs: same (seed, config) -> same outputs on one platform.
        if getattr(settings, "VPS_DETERMINISTIC", True):
            import torch

            torch.use_deterministic_algorithms(True, warn_only=True)
