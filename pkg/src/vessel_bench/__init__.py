"""Classical benchmark suite for four-class overhead vessel chip classification."""

__version__ = "0.1.0"

CLASS_NAMES = ("barge", "cargo", "container", "tanker")
