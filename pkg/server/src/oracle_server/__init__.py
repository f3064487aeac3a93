"""Hard-label HTTP prediction server for black-box attack experiments."""

from .app import create_app
from .models import BuiltinNpzModel, FixtureScript, load_fixture, load_model

__all__ = ["BuiltinNpzModel", "FixtureScript", "create_app", "load_fixture", "load_model"]

__version__ = "0.1.0"
