"""Priority-weighted bandwidth allocation and circuit orchestration for bulk data transfers."""

__version__ = "0.1.0"
