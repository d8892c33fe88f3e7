from .app import ROUTES, app, create_app

__all__ = ["ROUTES", "app", "create_app"]
