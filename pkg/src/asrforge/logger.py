import logging

logger = logging.getLogger("asrforge")
