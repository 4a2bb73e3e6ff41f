import csv

import pandas as pd

from backend.formats.model import MISSING, NOMINAL, NUMERIC, Dataset, format_number


def _render(attribute, cell) -> str:
    if cell is MISSING:
        return ""
    if attribute.kind == NUMERIC:
        return format_number(cell)
    if attribute.kind == NOMINAL:
        return attribute.categories[cell]
    return cell


def write_csv(ds: Dataset) -> str:
    """Header row of attribute names, then one line per row; missing cells are empty fields."""
    names = [a.name for a in ds.attributes]
    frame = pd.DataFrame(
        [[_render(a, c) for a, c in zip(ds.attributes, row)] for row in ds.rows],
        columns=names,
        dtype=object,
    )
    return frame.to_csv(index=False, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
