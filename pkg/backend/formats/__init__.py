"""
Dataset exchange formats: ARFF text, the MLD1 binary container and CSV export.

``read_dataset``/``write_dataset`` dispatch on a format id the same way for
every caller (registry uploads, downloads and the offline CLI).
"""

from typing import Literal

from backend.errors import UnsupportedConversion
from backend.formats.arff import parse_arff, write_arff
from backend.formats.container import decode_container, encode_container, read_array
from backend.formats.csv_export import write_csv
from backend.formats.model import MISSING, AttributeSpec, Cell, Dataset

FormatId = Literal["arff", "mld", "csv"]

READABLE = ("arff", "mld")
WRITABLE = ("arff", "mld", "csv")

MEDIA_TYPES = {
    "arff": "text/plain; charset=utf-8",
    "mld": "application/octet-stream",
    "csv": "text/csv; charset=utf-8",
}


def read_dataset(blob: bytes, fmt: str) -> Dataset:
    if fmt == "arff":
        return parse_arff(bytes(blob))
    if fmt == "mld":
        return decode_container(blob)
    raise UnsupportedConversion(fmt, "dataset")


def write_dataset(ds: Dataset, fmt: str) -> bytes:
    if fmt == "arff":
        return write_arff(ds).encode("utf-8")
    if fmt == "mld":
        return encode_container(ds)
    if fmt == "csv":
        return write_csv(ds).encode("utf-8")
    raise UnsupportedConversion("dataset", fmt)


def convert(blob: bytes, source: str, target: str) -> bytes:
    """Parse ``blob`` with the ``source`` codec and serialize it with the ``target`` codec."""
    if source not in READABLE or target not in WRITABLE:
        raise UnsupportedConversion(source, target)
    return write_dataset(read_dataset(blob, source), target)


def format_from_path(path: str) -> str:
    suffix = path.rsplit(".", 1)[-1].lower() if "." in path else ""
    if suffix in WRITABLE:
        return suffix
    raise UnsupportedConversion(suffix or path, "dataset")


__all__ = [
    "MISSING",
    "MEDIA_TYPES",
    "AttributeSpec",
    "Cell",
    "Dataset",
    "FormatId",
    "convert",
    "decode_container",
    "encode_container",
    "format_from_path",
    "parse_arff",
    "read_array",
    "read_dataset",
    "write_arff",
    "write_csv",
    "write_dataset",
]
