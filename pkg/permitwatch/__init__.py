# __init__.py
import os

from flask import Flask

from .extensions import db
from .settings import DATA_DIR, DB_PATH, REPORTS_DIR


def create_app(config: dict | None = None):
    """Job and report API over the permitwatch CLI."""
    app = Flask(__name__)
    app.config["SQLALCHEMY_DATABASE_URI"] = f"sqlite:///{DB_PATH}"
    app.config["SQLALCHEMY_TRACK_MODIFICATIONS"] = False
    app.config["REPORTS_DIR"] = REPORTS_DIR
    app.config["JSON_SORT_KEYS"] = False
    if config:
        app.config.update(config)

    uri = app.config["SQLALCHEMY_DATABASE_URI"]
    if uri.startswith("sqlite:///") and uri != "sqlite:///:memory:":
        os.makedirs(os.path.dirname(os.path.abspath(uri[len("sqlite:///"):])), exist_ok=True)
    os.makedirs(app.config["REPORTS_DIR"], exist_ok=True)

    db.init_app(app)

    from . import models  # noqa: F401  registers RunRecord
    with app.app_context():
        db.create_all()

    from .web import jobs, reports
    app.register_blueprint(jobs.bp)
    app.register_blueprint(reports.bp)

    app.logger.info("[app] data dir %s, %d routes", DATA_DIR, len(list(app.url_map.iter_rules())))
    return app
