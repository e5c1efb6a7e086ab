/**
 * Supply-chain event payloads the wallet can author, encoded to the node's
 * canonical form. Identity events (registration, rotation) are built by the
 * node itself, so only the lot lifecycle lives here.
 */

import { Writer, hexToBytes } from "./codec.js";

const TAG_LOT_REGISTERED = 0x10;
const TAG_QUALITY_UPDATE = 0x11;
const TAG_TRANSFER = 0x12;
const TAG_DELIVERY_CONFIRMED = 0x13;
const TAG_PAYMENT_SETTLED = 0x14;

export interface QualityReport {
  grade: string;
  moistureTenthsPct: number;
  affectedByWorms: boolean;
}

function writeQuality(w: Writer, q: QualityReport): void {
  w.text(q.grade).u32(q.moistureTenthsPct).boolean(q.affectedByWorms);
}

export function lotRegistered(
  quantityKg: number,
  farmLocation: string,
  pricePaisePerKg: number,
  seedSupplierRef?: string,
  quality?: QualityReport,
): Uint8Array {
  const w = new Writer().u8(TAG_LOT_REGISTERED);
  w.u64(quantityKg).text(farmLocation).u64(pricePaisePerKg);
  w.optional(seedSupplierRef, (ww, v) => ww.text(v));
  w.optional(quality, writeQuality);
  return w.getValue();
}

export function qualityUpdate(
  lotIdHex: string,
  quality: QualityReport,
  millInfo?: string,
): Uint8Array {
  const w = new Writer().u8(TAG_QUALITY_UPDATE);
  w.bytes(hexToBytes(lotIdHex));
  writeQuality(w, quality);
  w.optional(millInfo, (ww, v) => ww.text(v));
  return w.getValue();
}

export function transfer(
  lotIdHex: string,
  actorFromHex: string,
  actorToHex: string,
  pricePaisePerKg: number,
): Uint8Array {
  return new Writer()
    .u8(TAG_TRANSFER)
    .bytes(hexToBytes(lotIdHex))
    .bytes(hexToBytes(actorFromHex))
    .bytes(hexToBytes(actorToHex))
    .u64(pricePaisePerKg)
    .getValue();
}

export function deliveryConfirmed(lotIdHex: string, transferTxIdHex: string): Uint8Array {
  return new Writer()
    .u8(TAG_DELIVERY_CONFIRMED)
    .bytes(hexToBytes(lotIdHex))
    .bytes(hexToBytes(transferTxIdHex))
    .getValue();
}

export function paymentSettled(
  lotIdHex: string,
  deliveryTxIdHex: string,
  payerHex: string,
  payeeHex: string,
  amountPaise: number,
): Uint8Array {
  return new Writer()
    .u8(TAG_PAYMENT_SETTLED)
    .bytes(hexToBytes(lotIdHex))
    .bytes(hexToBytes(deliveryTxIdHex))
    .bytes(hexToBytes(payerHex))
    .bytes(hexToBytes(payeeHex))
    .u64(amountPaise)
    .getValue();
}
