# wsgi.py (project root)
from permitwatch import create_app
from permitwatch.cli import configure_logging

configure_logging()
app = create_app()

if __name__ == "__main__":
    app.run(debug=True)
