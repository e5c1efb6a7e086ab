"""Operator command line.

Every subcommand works directly against a data_dir (embedded mode), the
same code paths the HTTP API uses. Exit codes: 0 success, 1 operation
failure, 2 usage error. --format json switches the human text for one
JSON document on stdout.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

import click

from . import api, simulation, survey
from .errors import ConfigInvalid, SugarChainError
from .ledger import build_transaction, verify_chain
from .node import NodeConfig, SugarNode, init_node, load_key, load_node_config
from .payloads import (
    DeliveryConfirmed,
    LotRegistered,
    PaymentSettled,
    QualityReport,
    QualityUpdate,
    Role,
    Transfer,
)
from .supplychain import payment_latency, trace_lot


class Ctx:
    def __init__(self, config_path: str | None, data_dir: str | None, fmt: str) -> None:
        self.config_path = config_path
        self.data_dir = data_dir
        self.fmt = fmt
        self._node: SugarNode | None = None

    def node_config(self) -> NodeConfig:
        base = NodeConfig(data_dir=Path(self.data_dir)) if self.data_dir else None
        if self.config_path:
            return load_node_config(self.config_path, base=base)
        if base is None:
            raise ConfigInvalid("pass --config or --data-dir (or set SUGARCHAIN_CONFIG)")
        return base

    def node(self) -> SugarNode:
        if self._node is None:
            self._node = SugarNode(self.node_config())
            if self._node.load_warning:
                click.echo(f"warning: {self._node.load_warning}", err=True)
        return self._node

    def emit(self, data: Any, text: str) -> None:
        if self.fmt == "json":
            click.echo(json.dumps(data, indent=2, sort_keys=True))
        else:
            click.echo(text)


pass_ctx = click.make_pass_decorator(Ctx)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="node config file (SUGARCHAIN_CONFIG overrides this)")
@click.option("--data-dir", type=click.Path(), default=None, help="chain data directory")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, data_dir: str | None, fmt: str) -> None:
    """Permissioned sugarcane provenance ledger."""
    import os

    env_config = os.environ.get("SUGARCHAIN_CONFIG")
    if env_config:
        config_path = env_config
    ctx.obj = Ctx(config_path, data_dir, fmt)


def run(ctx: Ctx, body) -> None:
    try:
        body()
    except SugarChainError as exc:
        click.echo(f"error: {exc.code}: {exc}", err=True)
        sys.exit(1)


@main.command()
@pass_ctx
def init(ctx: Ctx) -> None:
    """Create the data directory: validator key plus a genesis-only chain."""

    def body() -> None:
        config = ctx.node_config()
        chain = init_node(config)
        validator = load_key(config.validator_key_path)
        ctx.emit(
            {"data_dir": str(config.data_dir), "validator": validator.user_id,
             "genesis": chain.tip.block_hash.hex()},
            f"initialized {config.data_dir}\nvalidator {validator.user_id}\n"
            f"genesis {chain.tip.block_hash.hex()}",
        )

    run(ctx, body)


@main.command()
@pass_ctx
def serve(ctx: Ctx) -> None:
    """Run the HTTP node until interrupted."""

    def body() -> None:
        node = ctx.node()
        click.echo(f"serving on {node.config.listen_address} height={node.chain.height}", err=True)
        api.serve(node)

    run(ctx, body)


@main.command()
@click.option("--name", required=True)
@click.option("--email", required=True)
@click.option("--phone", required=True)
@click.option("--password", prompt=True, hide_input=True)
@click.option("--role", required=True)
@click.option("--recovery", "recovery", multiple=True,
              help="question:answer, exactly three times")
@click.option("--keyfile", type=click.Path(), default=None,
              help="write the private key seed here instead of stdout")
@pass_ctx
def register(ctx: Ctx, name: str, email: str, phone: str, password: str, role: str,
             recovery: tuple[str, ...], keyfile: str | None) -> None:
    """Register a user on-chain; the private key never leaves this machine."""

    def body() -> None:
        pairs = []
        for item in recovery:
            question, sep, answer = item.partition(":")
            if not sep or not question or not answer:
                raise ConfigInvalid(f"--recovery needs question:answer, got {item!r}")
            pairs.append((question, answer))
        key, tx = ctx.node().register_user(
            name, email, phone, password, Role.from_name(role), pairs
        )
        seed = key.seed_bytes().hex()
        if keyfile:
            path = Path(keyfile)
            path.write_text(seed + "\n")
            path.chmod(0o600)
            seed_line = f"seed written to {keyfile}"
        else:
            seed_line = f"seed {seed}"
        ctx.emit(
            {"user_id": key.user_id, "tx_id": tx.tx_id_hex,
             "seed": None if keyfile else seed, "keyfile": keyfile},
            f"user_id {key.user_id}\n{seed_line}\ntx {tx.tx_id_hex}",
        )

    run(ctx, body)


@main.command()
@click.option("--user-id", required=True)
@click.option("--password", prompt=True, hide_input=True)
@pass_ctx
def login(ctx: Ctx, user_id: str, password: str) -> None:
    """Check credentials and issue a session (valid for this process only)."""

    def body() -> None:
        session = ctx.node().login(user_id, password)
        ctx.emit(
            {"user_id": session.user_id.hex(), "token": session.token,
             "expires_at": session.expires_at},
            f"login ok for {session.user_id.hex()}\ntoken {session.token}",
        )

    run(ctx, body)


@main.group()
def submit() -> None:
    """Sign and commit a supply-chain transaction."""


def _signed_submit(ctx: Ctx, keyfile: str, payload) -> None:
    key = load_key(keyfile)
    node = ctx.node()
    tx = build_transaction(key, payload, node.now_ms())
    block, settlements = node.submit(tx)
    settled = [b.height for b in settlements]
    ctx.emit(
        {"tx_id": tx.tx_id_hex, "height": block.height, "settlement_heights": settled},
        f"tx {tx.tx_id_hex}\nheight {block.height}"
        + (f"\nsettled in blocks {settled}" if settled else ""),
    )


_keyfile = click.option("--keyfile", required=True, type=click.Path(exists=True),
                        help="file holding the signer's private key seed")


@submit.command()
@_keyfile
@click.option("--quantity-kg", type=int, required=True)
@click.option("--price", "price_paise_per_kg", type=int, required=True,
              help="paise per kg")
@click.option("--location", required=True)
@click.option("--seed-ref", default=None)
@click.option("--grade", default=None)
@click.option("--moisture", type=int, default=None, help="tenths of a percent")
@click.option("--worms/--no-worms", default=False)
@pass_ctx
def lot(ctx: Ctx, keyfile: str, quantity_kg: int, price_paise_per_kg: int, location: str,
        seed_ref: str | None, grade: str | None, moisture: int | None, worms: bool) -> None:
    """Register a harvested lot (farmer only)."""

    def body() -> None:
        quality = None
        if grade is not None or moisture is not None:
            if grade is None or moisture is None:
                raise ConfigInvalid("--grade and --moisture go together")
            quality = QualityReport(grade=grade, moisture_tenths_pct=moisture,
                                    affected_by_worms=worms)
        _signed_submit(ctx, keyfile, LotRegistered(
            quantity_kg=quantity_kg, farm_location=location,
            price_paise_per_kg=price_paise_per_kg, seed_supplier_ref=seed_ref,
            quality=quality,
        ))

    run(ctx, body)


@submit.command()
@_keyfile
@click.option("--lot", "lot_id", required=True)
@click.option("--grade", required=True)
@click.option("--moisture", type=int, required=True)
@click.option("--worms/--no-worms", default=False)
@click.option("--mill-info", default=None)
@pass_ctx
def quality(ctx: Ctx, keyfile: str, lot_id: str, grade: str, moisture: int,
            worms: bool, mill_info: str | None) -> None:
    """Record a quality reading against a lot."""

    def body() -> None:
        _signed_submit(ctx, keyfile, QualityUpdate(
            lot_id=_hex32(lot_id),
            quality=QualityReport(grade=grade, moisture_tenths_pct=moisture,
                                  affected_by_worms=worms),
            mill_info=mill_info,
        ))

    run(ctx, body)


@submit.command()
@_keyfile
@click.option("--lot", "lot_id", required=True)
@click.option("--to", "actor_to", required=True, help="receiving user id (hex)")
@click.option("--price", "price_paise_per_kg", type=int, required=True)
@pass_ctx
def transfer(ctx: Ctx, keyfile: str, lot_id: str, actor_to: str,
             price_paise_per_kg: int) -> None:
    """Hand custody to the next actor in the chain."""

    def body() -> None:
        key = load_key(keyfile)
        _signed_submit(ctx, keyfile, Transfer(
            lot_id=_hex32(lot_id), actor_from=key.public_bytes,
            actor_to=_hex32(actor_to), price_paise_per_kg=price_paise_per_kg,
        ))

    run(ctx, body)


@submit.command()
@_keyfile
@click.option("--lot", "lot_id", required=True)
@click.option("--transfer", "transfer_tx_id", required=True, help="transfer tx id (hex)")
@pass_ctx
def deliver(ctx: Ctx, keyfile: str, lot_id: str, transfer_tx_id: str) -> None:
    """Confirm receipt of a transferred lot."""

    def body() -> None:
        _signed_submit(ctx, keyfile, DeliveryConfirmed(
            lot_id=_hex32(lot_id), transfer_tx_id=_hex32(transfer_tx_id),
        ))

    run(ctx, body)


@submit.command()
@_keyfile
@click.option("--lot", "lot_id", required=True)
@click.option("--delivery", "delivery_tx_id", required=True, help="delivery tx id (hex)")
@pass_ctx
def settle(ctx: Ctx, keyfile: str, lot_id: str, delivery_tx_id: str) -> None:
    """Pay for a delivered leg (manual settlement mode)."""

    def body() -> None:
        node = ctx.node()
        state = node.state.lots.get(_hex32(lot_id))
        leg = None
        if state is not None:
            for candidate in state.legs:
                if candidate.delivery_tx_id == _hex32(delivery_tx_id):
                    leg = candidate
        if state is None or leg is None:
            raise ConfigInvalid(f"no delivered leg {delivery_tx_id} on lot {lot_id}")
        _signed_submit(ctx, keyfile, PaymentSettled(
            lot_id=_hex32(lot_id), delivery_tx_id=_hex32(delivery_tx_id),
            payer=leg.actor_to, payee=leg.actor_from,
            amount_paise=state.quantity_kg * leg.price_paise_per_kg,
        ))

    run(ctx, body)


@main.command()
@click.argument("lot_id")
@pass_ctx
def trace(ctx: Ctx, lot_id: str) -> None:
    """Print the provenance of a lot, leg by leg."""

    def body() -> None:
        node = ctx.node()
        prov = trace_lot(node.chain, _hex32(lot_id))
        legs = payment_latency(node.chain, _hex32(lot_id))
        text = prov.describe()
        if legs:
            lat = ", ".join(
                f"leg {entry.leg_index}: "
                + ("outstanding" if entry.blocks_to_settle is None
                   else f"{entry.blocks_to_settle} block(s)")
                for entry in legs
            )
            text += f"\n  settlement latency: {lat}"
        ctx.emit(_trace_json(node, lot_id), text.rstrip("\n"))

    run(ctx, body)


def _trace_json(node: SugarNode, lot_id: str) -> dict[str, Any]:
    prov = trace_lot(node.chain, _hex32(lot_id))
    legs = payment_latency(node.chain, _hex32(lot_id))
    return {
        "lot_id": prov.lot_id.hex(),
        "quantity_kg": prov.quantity_kg,
        "farm_location": prov.farm_location,
        "registered_height": prov.registered_height,
        "legs": [
            {
                "role_from": leg.role_from.name.lower(),
                "role_to": leg.role_to.name.lower(),
                "tx_id": leg.tx_id.hex(),
                "delivered": leg.delivered,
                "settled": leg.settled,
            }
            for leg in prov.legs
        ],
        "latency": [
            {"leg_index": entry.leg_index, "blocks_to_settle": entry.blocks_to_settle}
            for entry in legs
        ],
    }


@main.command()
@pass_ctx
def verify(ctx: Ctx) -> None:
    """Re-verify every block hash, link, and signature in the store."""

    def body() -> None:
        node = ctx.node()
        report = verify_chain(node.chain)
        if report.ok:
            ctx.emit({"ok": True, "height": node.chain.height},
                     f"chain ok height={node.chain.height}")
        else:
            click.echo(f"chain failed at height {report.bad_height}: {report.reason}",
                       err=True)
            sys.exit(1)

    run(ctx, body)


@main.group(name="survey")
def survey_group() -> None:
    """Survey analytics."""


@survey_group.command()
@click.argument("csv_path", required=False, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="also write the report here")
@pass_ctx
def report(ctx: Ctx, csv_path: str | None, out: str | None) -> None:
    """Tabulate a survey CSV (bundled 40-farmer fixture when no path given)."""

    def body() -> None:
        path = csv_path or survey.bundled_fixture_path()
        records = survey.load_survey(path)
        entries = survey.tabulate_all(records)
        delay = survey.payment_delay_summary(records)
        text = survey.export_report(entries, path=out, delay=delay)
        data: dict[str, Any] = {"records": len(records), "report": text}
        ctx.emit(data, text.rstrip("\n"))

    run(ctx, body)


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
@click.argument("workload_path", required=False, type=click.Path(exists=True))
@pass_ctx
def simulate(ctx: Ctx, config_path: str, workload_path: str | None) -> None:
    """Run the replicated-network simulation for a config (and workload) file."""

    def body() -> None:
        config = simulation.parse_config(Path(config_path).read_text())
        workload = []
        if workload_path:
            workload = simulation.parse_workload(config, Path(workload_path).read_text())
        result = simulation.run_simulation(config, workload)
        text = result.render()
        ctx.emit(
            {
                "final_tick": result.final_tick,
                "quiescent": result.quiescent,
                "tips": [
                    {"node": n, "tip": d, "height": h} for n, d, h in result.tips
                ],
                "rejections": [
                    {"height": r.height, "reason": r.reason, "nodes": r.nodes}
                    for r in result.rejections
                ],
                "forks": result.fork_heights,
            },
            text.rstrip("\n"),
        )

    run(ctx, body)


def _hex32(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ConfigInvalid(f"{text!r} is not hex") from None
    if len(raw) != 32:
        raise ConfigInvalid("ids are 32 bytes of hex")
    return raw


if __name__ == "__main__":
    main()
