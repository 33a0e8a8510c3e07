from .app import create_app  # noqa: F401
from .store import AnnotationStore  # noqa: F401
