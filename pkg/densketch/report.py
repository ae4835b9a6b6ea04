"""Line-delimited JSON reports."""

import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import IO, Any, Optional, Union

logger = logging.getLogger(__name__)


def _encode(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if hasattr(value, "item"):
        # numpy scalars
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__} in a report")


def format_record(record: dict[str, Any]) -> str:
    """One record as a single JSON line with sorted keys."""
    return json.dumps(record, sort_keys=True, default=_encode, separators=(",", ":"))


class ReportWriter:
    """The single writer every report line goes through.

    Writes to ``path`` when given, stdout otherwise.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None, stream: Optional[IO[str]] = None):
        self.path = Path(path).expanduser() if path else None
        self._stream = stream
        self._owned: Optional[IO[str]] = None
        self.count = 0

    def __enter__(self) -> "ReportWriter":
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._owned = open(self.path, "w")
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    @property
    def _out(self) -> IO[str]:
        if self._owned is not None:
            return self._owned
        return self._stream if self._stream is not None else sys.stdout

    def write(self, record: dict[str, Any]) -> None:
        self._out.write(format_record(record) + "\n")
        self.count += 1

    def close(self) -> None:
        if self._owned is not None:
            self._owned.close()
            self._owned = None
            logger.info("Wrote %d records to %s", self.count, self.path)
        else:
            self._out.flush()


def read_records(path: Union[str, Path]) -> list[dict[str, Any]]:
    """Parse a report file back into records."""
    with open(Path(path).expanduser()) as f:
        return [json.loads(line) for line in f if line.strip()]
