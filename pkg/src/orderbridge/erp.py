"""Mock ERP core: product master, change log, order-to-cash documents.

Mutations are serialized through one lock (single-writer state machine)
and every committed mutation lands in an append-only journal before the
call returns, so a crash-restart replays to exactly the acknowledged
state. External processes reach this state only through the registered
remote functions; there is no other mutation path.

Sales import is idempotent per record_id: a record either produces the
full order -> delivery -> invoice -> accounting chain atomically, or
nothing at all, and replays of already-processed records are reported
as duplicates without touching state.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .jsonl import Journal, read_jsonl, read_json_snapshot, write_json_snapshot
from .model import (
    AccountingDocument,
    ChangeEvent,
    ChangeKind,
    CounterSet,
    Delivery,
    DocTotals,
    Invoice,
    JournalLine,
    JournalSide,
    LogicalClock,
    Money,
    ProblemLabel,
    Product,
    SalesOrder,
    SalesRecord,
    acc_doc_from_json,
    acc_doc_to_json,
    change_event_from_json,
    change_event_to_json,
    doc_number,
    price_lines,
    product_from_json,
    product_to_json,
    sales_record_from_json,
    sales_record_to_json,
    trade_doc_from_json,
    trade_doc_to_json,
    validate_sku,
)
from .rfc import AppError, FunctionRegistry, PayloadError, Table
from .wire import (
    changes_to_table,
    new_report_table,
    new_stock_table,
    records_to_tables,
    tables_to_records,
)

MAX_CHANGES_PAGE = 10_000


@dataclass(frozen=True)
class AccountCodes:
    """Ledger accounts for the sales posting pattern (configurable)."""

    receivable: str = "120"
    revenue: str = "600"
    vat: str = "391"


class ErpError(Exception):
    """Validation or sequencing failure of a single ERP operation."""

    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.detail = message


@dataclass(frozen=True)
class ChainIds:
    order_id: str
    delivery_id: str
    invoice_id: str
    acc_id: str


@dataclass
class ImportReport:
    """Per-record outcome of a sales batch; the three lists partition it.

    rows preserves the input order with one entry per input record, so
    repeated record_ids inside one batch report each occurrence.
    """

    accepted: list[dict] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)


class ErpCore:
    def __init__(
        self,
        data_dir: Path | str,
        accounts: AccountCodes | None = None,
        clock: LogicalClock | None = None,
        fsync: bool = False,
        on_event: Callable[[str, dict], None] | None = None,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.accounts = accounts or AccountCodes()
        self.clock = clock or LogicalClock()
        self.on_event = on_event
        self._lock = threading.RLock()

        self.products: dict[str, Product] = {}
        self.change_log: list[ChangeEvent] = []
        self.orders: dict[str, SalesOrder] = {}
        self.deliveries: dict[str, Delivery] = {}
        self.invoices: dict[str, Invoice] = {}
        self.acc_docs: dict[str, AccountingDocument] = {}
        self.chain_index: dict[str, ChainIds] = {}
        self.processed_keys: set[str] = set()
        self.delivery_of_order: dict[str, str] = {}
        self.invoice_of_delivery: dict[str, str] = {}
        self.acc_of_invoice: dict[str, str] = {}
        self.return_of_invoice: dict[str, str] = {}
        self.counters = CounterSet()
        self._mseq = 0

        self._products_journal = Journal(self.data_dir / "products.jsonl", fsync)
        self._changes_journal = Journal(self.data_dir / "changes.jsonl", fsync)
        self._docs_journal = Journal(self.data_dir / "docs.jsonl", fsync)
        self._counters_path = self.data_dir / "counters.json"
        self._replay()

    # --- durability ---------------------------------------------------------

    def _replay(self) -> None:
        for entry in read_jsonl(self.data_dir / "changes.jsonl"):
            self.change_log.append(change_event_from_json(entry))

        merged = [
            (entry["mseq"], "product", entry)
            for entry in read_jsonl(self.data_dir / "products.jsonl")
        ] + [
            (entry["mseq"], "doc", entry)
            for entry in read_jsonl(self.data_dir / "docs.jsonl")
        ]
        merged.sort(key=lambda item: item[0])
        for mseq, kind, entry in merged:
            self._mseq = max(self._mseq, mseq)
            if kind == "product":
                product = product_from_json(entry["product"])
                self.products[product.sku] = product
                continue
            self._apply_doc_entry(entry)

        snapshot = read_json_snapshot(self._counters_path)
        if snapshot:
            self.counters.load(snapshot)
        for doc_id in self.orders:
            self.counters.observe_doc_id(doc_id)
        for doc_id in self.deliveries:
            self.counters.observe_doc_id(doc_id)
        for doc_id in self.invoices:
            self.counters.observe_doc_id(doc_id)
        for doc_id in self.acc_docs:
            self.counters.observe_doc_id(doc_id)

    def _apply_doc_entry(self, entry: dict) -> None:
        doc_type = entry["doc_type"]
        if doc_type == "order":
            order = trade_doc_from_json(SalesOrder, entry["doc"])
            self.orders[order.doc_id] = order
            self.processed_keys.add(order.predecessor)
        elif doc_type == "delivery":
            delivery = trade_doc_from_json(Delivery, entry["doc"])
            self.deliveries[delivery.doc_id] = delivery
            self.delivery_of_order[delivery.predecessor] = delivery.doc_id
            for line in delivery.lines:
                product = self.products[line.sku]
                self.products[line.sku] = replace(product, stock_qty=product.stock_qty - line.qty)
        elif doc_type == "invoice":
            invoice = trade_doc_from_json(Invoice, entry["doc"])
            self.invoices[invoice.doc_id] = invoice
            self.invoice_of_delivery[invoice.predecessor] = invoice.doc_id
        elif doc_type == "accounting":
            doc = acc_doc_from_json(entry["doc"])
            self.acc_docs[doc.doc_id] = doc
            self.acc_of_invoice[doc.source] = doc.doc_id
            self._index_chain(doc.source)
        elif doc_type == "return":
            doc = acc_doc_from_json(entry["doc"])
            self.acc_docs[doc.doc_id] = doc
            self.return_of_invoice[doc.source] = doc.doc_id
            for line in self.invoices[doc.source].lines:
                product = self.products[line.sku]
                self.products[line.sku] = replace(product, stock_qty=product.stock_qty + line.qty)
        else:
            raise ValueError(f"unknown doc_type in journal: {doc_type!r}")

    def _index_chain(self, invoice_id: str) -> None:
        invoice = self.invoices[invoice_id]
        delivery = self.deliveries[invoice.predecessor]
        order = self.orders[delivery.predecessor]
        self.chain_index[order.predecessor] = ChainIds(
            order_id=order.doc_id,
            delivery_id=delivery.doc_id,
            invoice_id=invoice.doc_id,
            acc_id=self.acc_of_invoice[invoice.doc_id],
        )

    def _journal_product(self, product: Product) -> None:
        self._mseq += 1
        self._products_journal.append({"mseq": self._mseq, "product": product_to_json(product)})

    def _journal_doc(self, doc_type: str, doc_json: dict) -> None:
        self._mseq += 1
        self._docs_journal.append({"mseq": self._mseq, "doc_type": doc_type, "doc": doc_json})

    def save_counters(self) -> None:
        write_json_snapshot(self._counters_path, self.counters.snapshot())

    def close(self) -> None:
        self.save_counters()
        self._products_journal.close()
        self._changes_journal.close()
        self._docs_journal.close()

    def _emit(self, kind: str, detail: dict) -> None:
        if self.on_event:
            self.on_event(kind, detail)

    # --- product master -----------------------------------------------------

    def upsert_product(self, product: Product) -> ChangeEvent:
        """Create or update a master row; emits a dense change event.

        The stored version always continues from the current row, and an
        upsert over a tombstone re-activates the sku (downstream applies
        it like a create). Identical payloads still bump the version: the
        shop's idempotent apply absorbs no-op updates, so no dedupe here.
        """
        with self._lock:
            validate_sku(product.sku)
            current = self.products.get(product.sku)
            if current is None:
                version = 1
                kind = ChangeKind.CREATE
            else:
                version = current.version + 1
                kind = ChangeKind.CREATE if not current.active else ChangeKind.UPDATE
            stored = replace(product, active=True, version=version)
            event = ChangeEvent(seq=len(self.change_log) + 1, kind=kind, product=stored)
            self.products[stored.sku] = stored
            self.change_log.append(event)
            self._changes_journal.append(change_event_to_json(event))
            self._journal_product(stored)
            self._emit("product_upserted", {"sku": stored.sku, "seq": event.seq, "version": version})
            return event

    def delete_product(self, sku: str) -> ChangeEvent:
        with self._lock:
            current = self.products.get(sku)
            if current is None:
                raise ErpError("UNKNOWN_SKU", sku)
            if not current.active:
                raise ErpError("INACTIVE_SKU", f"{sku} already deleted")
            stored = current.tombstone()
            event = ChangeEvent(seq=len(self.change_log) + 1, kind=ChangeKind.DELETE, product=stored)
            self.products[sku] = stored
            self.change_log.append(event)
            self._changes_journal.append(change_event_to_json(event))
            self._journal_product(stored)
            self._emit("product_deleted", {"sku": sku, "seq": event.seq})
            return event

    # --- document chain -----------------------------------------------------

    def _validate_record(self, record: SalesRecord) -> None:
        if record.record_id in self.processed_keys:
            raise ErpError("DUPLICATE", record.record_id)
        if not record.lines or any(line.qty < 1 for line in record.lines):
            raise ErpError("EMPTY_LINES", "no lines or non-positive qty")
        if ProblemLabel.ORDER_OR_PAYMENT in record.problem_labels:
            raise ErpError("PAYMENT_PROBLEM", "order or payment problem reported")
        demand: dict[str, int] = {}
        for line in record.lines:
            product = self.products.get(line.sku)
            if product is None:
                raise ErpError("UNKNOWN_SKU", line.sku)
            if not product.active:
                raise ErpError("INACTIVE_SKU", line.sku)
            if line.unit_net_price != product.net_price:
                raise ErpError(
                    "PRICE_MISMATCH",
                    f"{line.sku}: shop {line.unit_net_price.amount_minor} vs "
                    f"master {product.net_price.amount_minor}",
                )
            demand[line.sku] = demand.get(line.sku, 0) + line.qty
        for sku, qty in demand.items():
            if self.products[sku].stock_qty < qty:
                raise ErpError("INSUFFICIENT_STOCK", f"{sku}: need {qty}")

    def create_sales_order(self, record: SalesRecord) -> SalesOrder:
        """Price the record against the master and open the chain.

        The master price is authoritative: a mismatched shop price is a
        PRICE_MISMATCH rejection, never silently accepted.
        """
        with self._lock:
            if not record.lines or any(line.qty < 1 for line in record.lines):
                raise ErpError("EMPTY_LINES", "no lines or non-positive qty")
            vat_of = {}
            for line in record.lines:
                product = self.products.get(line.sku)
                if product is None:
                    raise ErpError("UNKNOWN_SKU", line.sku)
                if not product.active:
                    raise ErpError("INACTIVE_SKU", line.sku)
                if line.unit_net_price != product.net_price:
                    raise ErpError("PRICE_MISMATCH", line.sku)
                vat_of[line.sku] = product.vat
            lines, totals = price_lines(record.lines, vat_of)
            order = SalesOrder(
                doc_id=self.counters.next_doc_id("ORD"),
                predecessor=record.record_id,
                lines=lines,
                totals=totals,
            )
            self.orders[order.doc_id] = order
            self.processed_keys.add(record.record_id)
            self._journal_doc("order", trade_doc_to_json(order))
            return order

    def create_delivery(self, order_id: str) -> Delivery:
        with self._lock:
            order = self.orders.get(order_id)
            if order is None:
                raise ErpError("UNKNOWN_ORDER", order_id)
            if order_id in self.delivery_of_order:
                raise ErpError("DUPLICATE_SUCCESSOR", f"{order_id} already delivered")
            demand: dict[str, int] = {}
            for line in order.lines:
                demand[line.sku] = demand.get(line.sku, 0) + line.qty
            for sku, qty in demand.items():
                if self.products[sku].stock_qty < qty:
                    raise ErpError("INSUFFICIENT_STOCK", f"{sku}: need {qty}")
            delivery = Delivery(
                doc_id=self.counters.next_doc_id("DLV"),
                predecessor=order_id,
                lines=order.lines,
                totals=order.totals,
            )
            for sku, qty in demand.items():
                product = self.products[sku]
                self.products[sku] = replace(product, stock_qty=product.stock_qty - qty)
            self.deliveries[delivery.doc_id] = delivery
            self.delivery_of_order[order_id] = delivery.doc_id
            self._journal_doc("delivery", trade_doc_to_json(delivery))
            return delivery

    def create_invoice(self, delivery_id: str) -> Invoice:
        with self._lock:
            delivery = self.deliveries.get(delivery_id)
            if delivery is None:
                raise ErpError("UNKNOWN_DELIVERY", delivery_id)
            if delivery_id in self.invoice_of_delivery:
                raise ErpError("DUPLICATE_SUCCESSOR", f"{delivery_id} already invoiced")
            order = self.orders[delivery.predecessor]
            invoice = Invoice(
                doc_id=self.counters.next_doc_id("INV"),
                predecessor=delivery_id,
                lines=order.lines,
                totals=order.totals,
            )
            self.invoices[invoice.doc_id] = invoice
            self.invoice_of_delivery[delivery_id] = invoice.doc_id
            self._journal_doc("invoice", trade_doc_to_json(invoice))
            return invoice

    def _posting_lines(self, totals: DocTotals, flip: bool = False) -> tuple[JournalLine, ...]:
        """Receivable against revenue plus tax; zero lines are omitted so
        every posted amount is strictly positive."""
        debit = JournalSide.CREDIT if flip else JournalSide.DEBIT
        credit = JournalSide.DEBIT if flip else JournalSide.CREDIT
        lines = []
        if totals.gross.amount_minor > 0:
            lines.append(JournalLine(self.accounts.receivable, debit, totals.gross))
        if totals.net.amount_minor > 0:
            lines.append(JournalLine(self.accounts.revenue, credit, totals.net))
        if totals.vat.amount_minor > 0:
            lines.append(JournalLine(self.accounts.vat, credit, totals.vat))
        return tuple(lines)

    def post_accounting_document(self, invoice_id: str) -> AccountingDocument:
        with self._lock:
            invoice = self.invoices.get(invoice_id)
            if invoice is None:
                raise ErpError("UNKNOWN_INVOICE", invoice_id)
            if invoice_id in self.acc_of_invoice:
                raise ErpError("DUPLICATE_SUCCESSOR", f"{invoice_id} already posted")
            doc = AccountingDocument(
                doc_id=self.counters.next_doc_id("ACC"),
                source=invoice_id,
                lines=self._posting_lines(invoice.totals),
            )
            assert doc.balances(), f"unbalanced posting for {invoice_id}"
            self.acc_docs[doc.doc_id] = doc
            self.acc_of_invoice[invoice_id] = doc.doc_id
            self._journal_doc("accounting", acc_doc_to_json(doc))
            self._index_chain(invoice_id)
            return doc

    def post_return(self, invoice_id: str, reason: ProblemLabel) -> AccountingDocument:
        """Reverse a posted invoice: flipped sides, same amounts, stock back."""
        with self._lock:
            invoice = self.invoices.get(invoice_id)
            if invoice is None:
                raise ErpError("UNKNOWN_INVOICE", invoice_id)
            if invoice_id not in self.acc_of_invoice:
                raise ErpError("NOT_POSTED", invoice_id)
            if invoice_id in self.return_of_invoice:
                raise ErpError("DUPLICATE_RETURN", invoice_id)
            doc = AccountingDocument(
                doc_id=self.counters.next_doc_id("RET"),
                source=invoice_id,
                lines=self._posting_lines(invoice.totals, flip=True),
            )
            assert doc.balances(), f"unbalanced reversal for {invoice_id}"
            self.acc_docs[doc.doc_id] = doc
            self.return_of_invoice[invoice_id] = doc.doc_id
            for line in invoice.lines:
                product = self.products[line.sku]
                self.products[line.sku] = replace(product, stock_qty=product.stock_qty + line.qty)
            self._journal_doc("return", acc_doc_to_json(doc))
            self._emit("return_posted", {"invoice_id": invoice_id, "ret_id": doc.doc_id, "reason": reason.value})
            return doc

    # --- batch import -------------------------------------------------------

    def import_sales_batch(self, records: list[SalesRecord]) -> ImportReport:
        """Process records one by one, each atomically.

        Validation runs up front per record (the full chain is checked,
        including stock), so the four document creations that follow
        cannot fail and partial chains never exist.
        """
        report = ImportReport()
        with self._lock:
            for record in records:
                if record.record_id in self.processed_keys:
                    report.duplicates.append(record.record_id)
                    continue
                try:
                    self._validate_record(record)
                except ErpError as exc:
                    report.rejected.append(
                        {"record_id": record.record_id, "code": exc.code, "message": exc.detail}
                    )
                    continue
                order = self.create_sales_order(record)
                delivery = self.create_delivery(order.doc_id)
                invoice = self.create_invoice(delivery.doc_id)
                acc = self.post_accounting_document(invoice.doc_id)
                chain = self.chain_index[record.record_id]
                report.accepted.append(
                    {
                        "record_id": record.record_id,
                        "order_id": chain.order_id,
                        "delivery_id": chain.delivery_id,
                        "invoice_id": chain.invoice_id,
                        "acc_id": chain.acc_id,
                    }
                )
                self._emit(
                    "chain_created",
                    {"record_id": record.record_id, "order_id": order.doc_id, "acc_id": acc.doc_id},
                )
            self.save_counters()
        return report

    # --- reads ---------------------------------------------------------------

    def changes_since(self, since_seq: int, limit: int) -> tuple[list[ChangeEvent], int, bool]:
        with self._lock:
            max_seq = len(self.change_log)
            page = self.change_log[since_seq : since_seq + limit]
            has_more = bool(page) and page[-1].seq < max_seq
            if not page:
                has_more = False
            return list(page), max_seq, has_more

    def stock_of(self, skus: list[str]) -> list[tuple[str, int]]:
        with self._lock:
            out = []
            for sku in skus:
                product = self.products.get(sku)
                if product is not None:
                    out.append((sku, product.stock_qty))
            return out


# --- remote functions ---------------------------------------------------------

ERP_FUNCTIONS = ("GET_PRODUCT_CHANGES", "GET_STOCK", "IMPORT_SALES", "PING")
ERP_ADMIN_FUNCTIONS = ("ADMIN_UPSERT_PRODUCT", "ADMIN_DELETE_PRODUCT", "ADMIN_POST_RETURN")


def build_erp_registry(core: ErpCore) -> FunctionRegistry:
    """Register the ERP's externally callable functions."""

    registry = FunctionRegistry()

    def ping(params: dict, tables: list[Table]):
        return {"pong": True}, []

    def get_product_changes(params: dict, tables: list[Table]):
        since_seq = params.get("since_seq")
        limit = params.get("limit", MAX_CHANGES_PAGE)
        if not isinstance(since_seq, int) or isinstance(since_seq, bool) or since_seq < 0:
            raise AppError(f"since_seq must be a non-negative integer, got {since_seq!r}")
        if not isinstance(limit, int) or isinstance(limit, bool) or not 1 <= limit <= MAX_CHANGES_PAGE:
            raise AppError(f"limit must be in 1..{MAX_CHANGES_PAGE}, got {limit!r}")
        events, max_seq, has_more = core.changes_since(since_seq, limit)
        return {"max_seq": max_seq, "has_more": has_more}, [changes_to_table(events)]

    def get_stock(params: dict, tables: list[Table]):
        skus_csv = params.get("skus")
        if not isinstance(skus_csv, str):
            raise AppError("skus must be a csv string")
        table = new_stock_table()
        for sku, qty in core.stock_of([s for s in skus_csv.split(",") if s]):
            table.append(sku, qty)
        return {}, [table]

    def import_sales(params: dict, tables: list[Table]):
        records = tables_to_records(tables)
        report = core.import_sales_batch(records)
        table = new_report_table()
        by_id: dict[str, tuple] = {}
        for entry in report.accepted:
            by_id[entry["record_id"]] = (
                "ACCEPTED", "", "",
                entry["order_id"], entry["delivery_id"], entry["invoice_id"], entry["acc_id"],
            )
        for entry in report.rejected:
            by_id[entry["record_id"]] = ("REJECTED", entry["code"], entry["message"], "", "", "", "")
        for record_id in report.duplicates:
            by_id[record_id] = ("DUPLICATE", "", "", "", "", "", "")
        for record in records:
            if record.record_id in by_id:
                table.append(record.record_id, *by_id.pop(record.record_id))
        return {}, [table]

    def admin_upsert_product(params: dict, tables: list[Table]):
        records = _products_from_table(tables)
        results = []
        for product in records:
            event = core.upsert_product(product)
            results.append(event.seq)
        return {"applied": len(results), "max_seq": results[-1] if results else 0}, []

    def admin_delete_product(params: dict, tables: list[Table]):
        sku = params.get("sku")
        if not isinstance(sku, str):
            raise AppError("sku must be a string")
        try:
            event = core.delete_product(sku)
        except ErpError as exc:
            raise AppError(str(exc))
        return {"seq": event.seq}, []

    def admin_post_return(params: dict, tables: list[Table]):
        record_id = params.get("record_id")
        reason_name = params.get("reason", ProblemLabel.OTHER.value)
        if not isinstance(record_id, str) or not isinstance(reason_name, str):
            raise AppError("record_id and reason must be strings")
        try:
            reason = ProblemLabel(reason_name)
        except ValueError:
            raise AppError(f"unknown reason {reason_name!r}")
        chain = core.chain_index.get(record_id)
        if chain is None:
            return {"status": "NO_CHAIN", "ret_id": ""}, []
        try:
            doc = core.post_return(chain.invoice_id, reason)
        except ErpError as exc:
            if exc.code == "DUPLICATE_RETURN":
                return {"status": "ALREADY_RETURNED", "ret_id": core.return_of_invoice[chain.invoice_id]}, []
            raise AppError(str(exc))
        return {"status": "RETURNED", "ret_id": doc.doc_id}, []

    registry.register("PING", ping)
    registry.register("GET_PRODUCT_CHANGES", get_product_changes)
    registry.register("GET_STOCK", get_stock)
    registry.register("IMPORT_SALES", import_sales)
    registry.register("ADMIN_UPSERT_PRODUCT", admin_upsert_product)
    registry.register("ADMIN_DELETE_PRODUCT", admin_delete_product)
    registry.register("ADMIN_POST_RETURN", admin_post_return)
    return registry


def _products_from_table(tables: list[Table]) -> list[Product]:
    from .wire import table_to_changes, _find_table

    changes = _find_table(tables, "CHANGES")
    return [event.product for event in table_to_changes(changes)]


def products_to_admin_tables(products: list[Product]) -> list[Table]:
    """Products ride the CHANGES schema with placeholder seq/kind."""
    events = [
        ChangeEvent(seq=i + 1, kind=ChangeKind.CREATE, product=p) for i, p in enumerate(products)
    ]
    return [changes_to_table(events)]
