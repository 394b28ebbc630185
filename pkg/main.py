import os
import sys
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

from dotenv import load_dotenv
from lib.cli import SindygCLI, verbosity_level

load_dotenv()

COMMAND_FOLDER = "commands"
LOG_FILE = os.getenv("SINDYG_LOG_FILE", "").strip()
LOG_LEVEL = os.getenv("SINDYG_LOG_LEVEL", "INFO").strip().upper()


class _CollapseNewlinesFilter(logging.Filter):
    """Keep each record on one physical line by escaping newlines in the
    message, so log files stay one-entry-per-line and parse cleanly. Tracebacks
    (exc_info) are left as-is. Added to the handlers so it also covers records
    propagated up from child loggers."""

    def filter(self, record):
        if record.args:
            record.msg = record.getMessage()
            record.args = None
        if isinstance(record.msg, str) and ("\n" in record.msg or "\r" in record.msg):
            record.msg = record.msg.replace("\r", "\\r").replace("\n", "\\n")
        return True


def setup_logging(level: Optional[int] = None):
    """Console logging, plus a rotating file when SINDYG_LOG_FILE is set.
    ``level`` (from -v/-q) overrides SINDYG_LOG_LEVEL."""
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    newline_filter = _CollapseNewlinesFilter()

    root_logger = logging.getLogger()
    if level is None:
        level = logging.getLevelName(LOG_LEVEL)
        if not isinstance(level, int):
            print(f"warning: unknown SINDYG_LOG_LEVEL={LOG_LEVEL!r}, using INFO", file=sys.stderr)
            level = logging.INFO
    root_logger.setLevel(level)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.addFilter(newline_filter)
    root_logger.addHandler(console_handler)

    if LOG_FILE:
        # Rotate at 5MB, keep 3 backups
        file_handler = RotatingFileHandler(
            LOG_FILE,
            maxBytes=5*1024*1024,
            backupCount=3,
            encoding='utf-8'
        )
        file_handler.setFormatter(formatter)
        file_handler.addFilter(newline_filter)
        root_logger.addHandler(file_handler)

    # PIL logs every PNG chunk at DEBUG
    logging.getLogger("PIL").setLevel(max(level, logging.INFO))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    setup_logging(verbosity_level(argv))
    cli = SindygCLI(command_folder=COMMAND_FOLDER)
    cli.load_commands()
    return cli.run(argv)


if __name__ == "__main__":
    sys.exit(main())
