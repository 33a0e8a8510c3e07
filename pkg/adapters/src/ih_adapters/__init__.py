from .common import AdapterError, AdapterSpec, MissingAssetError, default_spec  # noqa: F401

__version__ = "0.1.0"
