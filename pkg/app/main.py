import logging
import sys
from typing import List, Optional

from app.api.commands import parse_spec
from app.core.config import settings
from app.core.errors import AuctionError

logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point: parse the command, run it and map failures to exit codes."""
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    spec = parse_spec(argv)

    # Import here so --help stays fast
    from app.core.dependencies import get_experiment_service

    try:
        artifacts = get_experiment_service().run(spec)
    except AuctionError as e:
        context = {k: v for k, v in e.context.items() if k != "trace"}
        logger.error(f"{spec.command} failed: {e} {context if context else ''}".rstrip())
        return e.exit_code
    for name, path in artifacts.items():
        logger.info(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
