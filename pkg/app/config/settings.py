from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "dev-insecure-secret")
DEBUG = os.getenv("DJANGO_DEBUG", "0") == "1"

INSTALLED_APPS = [
    "vpsnet",
]

# No database: the app only runs management commands.
DATABASES = {}

USE_TZ = True
TIME_ZONE = os.getenv("TIME_ZONE", "UTC")

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


def _env_int(name, default):
    return int(os.getenv(name, str(default)))


def _env_float(name, default):
    return float(os.getenv(name, str(default)))


# Run defaults. Overridden by --config files and command-line flags.
VPS_IMAGE_SIZE = _env_int("VPS_IMAGE_SIZE", 352)
VPS_CHANNELS = _env_int("VPS_CHANNELS", 32)
VPS_HEADS = _env_int("VPS_HEADS", 4)
VPS_CLIP_LENGTH = _env_int("VPS_CLIP_LENGTH", 6)
VPS_NUM_REFERENCES = _env_int("VPS_NUM_REFERENCES", 2)
VPS_TARGET_STAGE = _env_int("VPS_TARGET_STAGE", 3)
VPS_COOLDOWN_SEM = _env_int("VPS_COOLDOWN_SEM", 5)
VPS_COOLDOWN_CONF = _env_int("VPS_COOLDOWN_CONF", 1)
VPS_LR = _env_float("VPS_LR", 1e-4)
VPS_WEIGHT_DECAY = _env_float("VPS_WEIGHT_DECAY", 1e-4)
VPS_EPOCHS = _env_int("VPS_EPOCHS", 30)
VPS_BATCH_SIZE = _env_int("VPS_BATCH_SIZE", 4)
VPS_SEED = _env_int("VPS_SEED", 0)
VPS_TRAIN_CLIPS = _env_int("VPS_TRAIN_CLIPS", 16)

VPS_DEVICE = os.getenv("VPS_DEVICE", "cpu")
VPS_NUM_WORKERS = _env_int("VPS_NUM_WORKERS", 0)
VPS_DETERMINISTIC = os.getenv("VPS_DETERMINISTIC", "1") == "1"
VPS_RUNS_DIR = Path(os.getenv("VPS_RUNS_DIR", str(BASE_DIR / "runs")))

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "vpsnet": {
            "handlers": ["console"],
            "level": os.getenv("VPS_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}
