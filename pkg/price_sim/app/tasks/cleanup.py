import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def cleanup_outputs(paths: list[Path], directory: Path | None = None) -> dict:
    """
    Remove the files a failed run managed to write, then the output directory
    itself when the run created it and it is left empty.
    """
    removed, failed = 0, 0
    for path in paths:
        try:
            Path(path).unlink(missing_ok=True)
            removed += 1
            logger.info(f"✓ Cleaned up: {path}")
        except OSError as e:
            failed += 1
            logger.error(f"Cleanup failed for {path}: {e}")

    if directory is not None:
        try:
            directory.rmdir()
            logger.info(f"✓ Removed empty output directory: {directory}")
        except OSError:
            pass

    return {"status": "failed" if failed else "success", "removed": removed}
