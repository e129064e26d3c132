"""Table schemas shared by both sides of every remote function.

Sales records travel as a RECORDS table plus a LINES table keyed by
record_id; product change events flatten to one CHANGES row per event.
Parsers raise PayloadError on semantically malformed rows (the codec
already guarantees cell kinds and row arity).
"""

from __future__ import annotations

from .model import (
    ChangeEvent,
    ChangeKind,
    CategoryTag,
    Money,
    ProblemLabel,
    Product,
    SalesLine,
    SalesRecord,
    VatRate,
)
from .rfc import CellKind, Column, PayloadError, Table

RECORDS_COLUMNS = (
    Column("record_id", CellKind.STRING),
    Column("customer_id", CellKind.STRING),
    Column("created_at", CellKind.INT),
    Column("labels", CellKind.STRING),  # comma-joined ProblemLabel names
)
LINES_COLUMNS = (
    Column("record_id", CellKind.STRING),
    Column("sku", CellKind.STRING),
    Column("qty", CellKind.INT),
    Column("unit_net_price", CellKind.MONEY),
)
CHANGES_COLUMNS = (
    Column("seq", CellKind.INT),
    Column("kind", CellKind.STRING),
    Column("sku", CellKind.STRING),
    Column("name", CellKind.STRING),
    Column("category", CellKind.STRING),
    Column("net_price", CellKind.MONEY),
    Column("vat_numerator", CellKind.INT),
    Column("vat_denominator", CellKind.INT),
    Column("active", CellKind.BOOL),
    Column("version", CellKind.INT),
    Column("stock_qty", CellKind.INT),
)
REPORT_COLUMNS = (
    Column("record_id", CellKind.STRING),
    Column("status", CellKind.STRING),  # ACCEPTED | REJECTED | DUPLICATE
    Column("code", CellKind.STRING),
    Column("message", CellKind.STRING),
    Column("order_id", CellKind.STRING),
    Column("delivery_id", CellKind.STRING),
    Column("invoice_id", CellKind.STRING),
    Column("acc_id", CellKind.STRING),
)
ACKS_COLUMNS = (
    Column("record_id", CellKind.STRING),
    Column("status", CellKind.STRING),  # STAGED | DUPLICATE
)
STOCK_COLUMNS = (
    Column("sku", CellKind.STRING),
    Column("qty", CellKind.INT),
)
STATE_COUNTS_COLUMNS = (
    Column("state", CellKind.STRING),
    Column("count", CellKind.INT),
)


def records_to_tables(records: list[SalesRecord]) -> list[Table]:
    records_table = Table("RECORDS", RECORDS_COLUMNS)
    lines_table = Table("LINES", LINES_COLUMNS)
    for r in records:
        labels = ",".join(sorted(label.value for label in r.problem_labels))
        records_table.append(r.record_id, r.customer_id, r.created_at, labels)
        for line in r.lines:
            lines_table.append(r.record_id, line.sku, line.qty, line.unit_net_price)
    return [records_table, lines_table]


def _find_table(tables: list[Table], name: str) -> Table:
    for t in tables:
        if t.name == name:
            return t
    raise PayloadError(f"missing table {name}")


def tables_to_records(tables: list[Table]) -> list[SalesRecord]:
    records_table = _find_table(tables, "RECORDS")
    lines_table = _find_table(tables, "LINES")
    lines_by_record: dict[str, list[SalesLine]] = {}
    for row in lines_table.rows:
        record_id, sku, qty, price = row
        if not isinstance(price, Money):
            raise PayloadError(f"line for {record_id}: price is not money")
        lines_by_record.setdefault(record_id, []).append(SalesLine(sku, qty, price))
    records: list[SalesRecord] = []
    for row in records_table.rows:
        record_id, customer_id, created_at, labels_csv = row
        try:
            labels = frozenset(
                ProblemLabel(name) for name in labels_csv.split(",") if name
            )
        except ValueError as exc:
            raise PayloadError(f"record {record_id}: {exc}")
        try:
            records.append(
                SalesRecord(
                    record_id=record_id,
                    customer_id=customer_id,
                    lines=tuple(lines_by_record.get(record_id, ())),
                    created_at=created_at,
                    problem_labels=labels,
                )
            )
        except ValueError as exc:
            raise PayloadError(f"record {record_id}: {exc}")
    return records


def changes_to_table(events: list[ChangeEvent]) -> Table:
    table = Table("CHANGES", CHANGES_COLUMNS)
    for e in events:
        p = e.product
        table.append(
            e.seq,
            e.kind.value,
            p.sku,
            p.name,
            p.category.value,
            p.net_price,
            p.vat.numerator,
            p.vat.denominator,
            p.active,
            p.version,
            p.stock_qty,
        )
    return table


def table_to_changes(table: Table) -> list[ChangeEvent]:
    events: list[ChangeEvent] = []
    for row in table.rows:
        (seq, kind, sku, name, category, net_price, vat_num, vat_den, active, version, stock) = row
        try:
            events.append(
                ChangeEvent(
                    seq=seq,
                    kind=ChangeKind(kind),
                    product=Product(
                        sku=sku,
                        name=name,
                        category=CategoryTag(category),
                        net_price=net_price,
                        vat=VatRate(vat_num, vat_den),
                        active=active,
                        version=version,
                        stock_qty=stock,
                    ),
                )
            )
        except ValueError as exc:
            raise PayloadError(f"change row seq={seq}: {exc}")
    return events


def new_report_table() -> Table:
    return Table("REPORT", REPORT_COLUMNS)


def new_acks_table() -> Table:
    return Table("ACKS", ACKS_COLUMNS)


def new_stock_table() -> Table:
    return Table("STOCK", STOCK_COLUMNS)


def new_state_counts_table() -> Table:
    return Table("STATE_COUNTS", STATE_COUNTS_COLUMNS)
