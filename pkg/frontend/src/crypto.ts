/**
 * Ed25519 signing and SHA-256 digests over WebCrypto.
 *
 * The node hands a 32-byte seed to the registering user exactly once; the
 * wallet keeps it in session storage and never sends it anywhere. WebCrypto
 * only imports PKCS#8, so the fixed DER prefix for an Ed25519 private key
 * is prepended to the raw seed on import.
 */

import { Writer, bytesToHex, hexToBytes } from "./codec.js";

// SEQUENCE { version 0, OID 1.3.101.112, OCTET STRING { OCTET STRING seed } }
const PKCS8_PREFIX = hexToBytes("302e020100300506032b657004220420");

function subtle(): SubtleCrypto {
  const s = globalThis.crypto?.subtle;
  if (!s) throw new Error("WebCrypto unavailable; the wallet cannot sign");
  return s;
}

export interface WalletKey {
  readonly publicKeyHex: string;
  sign(message: Uint8Array): Promise<Uint8Array>;
}

export async function importSeed(seedHex: string): Promise<WalletKey> {
  const seed = hexToBytes(seedHex);
  if (seed.length !== 32) throw new Error("private key seed must be 32 bytes");
  const pkcs8 = new Uint8Array(PKCS8_PREFIX.length + 32);
  pkcs8.set(PKCS8_PREFIX, 0);
  pkcs8.set(seed, PKCS8_PREFIX.length);
  const privateKey = await subtle().importKey("pkcs8", pkcs8, { name: "Ed25519" }, true, ["sign"]);

  // the public half comes back as SPKI; the raw key is its last 32 bytes
  const jwk = await subtle().exportKey("jwk", privateKey);
  if (!jwk.x) throw new Error("could not derive the public key from the seed");
  const publicRaw = base64UrlToBytes(jwk.x);

  return {
    publicKeyHex: bytesToHex(publicRaw),
    async sign(message: Uint8Array): Promise<Uint8Array> {
      const sig = await subtle().sign({ name: "Ed25519" }, privateKey, message as BufferSource);
      return new Uint8Array(sig);
    },
  };
}

export async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await subtle().digest("SHA-256", data as BufferSource));
}

/** Canonical signed transaction: body || signature, plus its id. */
export async function buildTransaction(
  key: WalletKey,
  payload: Uint8Array,
  timestampMs: number,
): Promise<{ raw: Uint8Array; txIdHex: string }> {
  const body = new Writer()
    .bytes(hexToBytes(key.publicKeyHex))
    .raw(payload)
    .u64(timestampMs)
    .getValue();
  const signature = await key.sign(body);
  const raw = new Writer().raw(body).bytes(signature).getValue();
  return { raw, txIdHex: bytesToHex(await sha256(body)) };
}

function base64UrlToBytes(value: string): Uint8Array {
  const b64 = value.replace(/-/g, "+").replace(/_/g, "/");
  const padded = b64 + "=".repeat((4 - (b64.length % 4)) % 4);
  const binary = atob(padded);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
