import { describe, expect, it } from "vitest";
import { ApiError, NetworkError, NodeClient } from "../src/api.js";
import { Wallet, describeError } from "../src/wallet.js";
import type { LotSummary, NextAction, Session } from "../src/model.js";

const SEED = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";
const PUB = "03a107bff3ce10be1d70dd18e74bc09967e4d6309ba50d5f1ddc8664125531b8";
const NOW = 1_700_000_000_000;

function session(userId: string = PUB, expiresAt = NOW / 1000 + 3600): Session {
  return { token: "tok-1", user_id: userId, issued_at: NOW / 1000, expires_at: expiresAt };
}

class FakeStorage {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
  get size(): number {
    return this.map.size;
  }
}

function okEnvelope(result: unknown): Response {
  return {
    status: 200,
    json: async () => ({ request_id: "r", ok: true, result }),
  } as unknown as Response;
}

interface Recorded {
  url: string;
  init: RequestInit;
}

function makeClient(
  respond: (url: string, init: RequestInit) => Response | Promise<Response>,
  calls: Recorded[] = [],
): NodeClient {
  return new NodeClient("", async (input, init) => {
    calls.push({ url: String(input), init: init ?? {} });
    return respond(String(input), init ?? {});
  });
}

function makeLot(overrides: Partial<LotSummary> = {}): LotSummary {
  return {
    lot_id: "aa".repeat(32),
    quantity_kg: 1200,
    farm_location: "warana",
    custodian: PUB,
    custodian_role: "farmer",
    registered_height: 1,
    seed_supplier_ref: null,
    consumed: false,
    pending_transfer: null,
    outstanding_payment: null,
    next_actions: [],
    ...overrides,
  };
}

async function loggedInWallet(
  respond: (url: string, init: RequestInit) => Response | Promise<Response>,
  calls: Recorded[] = [],
): Promise<Wallet> {
  const wallet = new Wallet(makeClient(respond, calls), new FakeStorage() as unknown as Storage, () => NOW);
  await wallet.adopt(session(), SEED);
  return wallet;
}

describe("adopt and restore", () => {
  it("refuses a seed that does not belong to the session user", async () => {
    const wallet = new Wallet(makeClient(() => okEnvelope(null)), new FakeStorage() as unknown as Storage, () => NOW);
    await expect(wallet.adopt(session("ff".repeat(32)), SEED)).rejects.toThrow(
      "does not belong",
    );
    expect(wallet.authenticated).toBe(false);
  });

  it("persists credentials and restores them into a fresh wallet", async () => {
    const storage = new FakeStorage();
    const client = makeClient(() => okEnvelope(null));
    const first = new Wallet(client, storage as unknown as Storage, () => NOW);
    await first.adopt(session(), SEED);
    expect(client.token).toBe("tok-1");

    const again = new Wallet(client, storage as unknown as Storage, () => NOW);
    expect(await again.restore()).toBe(true);
    expect(again.userId).toBe(PUB);
    expect(again.authenticated).toBe(true);
  });

  it("treats an expired stored session as absent and clears it", async () => {
    const storage = new FakeStorage();
    const early = new Wallet(makeClient(() => okEnvelope(null)), storage as unknown as Storage, () => NOW);
    await early.adopt(session(PUB, NOW / 1000 + 10), SEED);

    const later = new Wallet(makeClient(() => okEnvelope(null)), storage as unknown as Storage, () => NOW + 60_000);
    expect(await later.restore()).toBe(false);
    expect(later.authenticated).toBe(false);
    expect(storage.size).toBe(0);
  });

  it("forget drops the session, the token, and the stored copy", async () => {
    const storage = new FakeStorage();
    const client = makeClient(() => okEnvelope(null));
    const wallet = new Wallet(client, storage as unknown as Storage, () => NOW);
    await wallet.adopt(session(), SEED);
    wallet.forget();
    expect(wallet.authenticated).toBe(false);
    expect(client.token).toBeNull();
    expect(storage.size).toBe(0);
  });
});

describe("lot filters", () => {
  it("myLots keeps only lots in my custody", async () => {
    const wallet = await loggedInWallet(() => okEnvelope(null));
    const mine = makeLot();
    const other = makeLot({ lot_id: "bb".repeat(32), custodian: "cc".repeat(32) });
    expect(wallet.myLots([mine, other])).toEqual([mine]);
  });

  it("offeredToMe keeps only actions addressed to me", async () => {
    const wallet = await loggedInWallet(() => okEnvelope(null));
    const forMe: NextAction = { action: "quality_update", actor: PUB };
    const forOther: NextAction = { action: "deliver", actor: "cc".repeat(32), transfer_tx_id: "dd".repeat(32) };
    const lot = makeLot({ next_actions: [forMe, forOther] });
    expect(wallet.offeredToMe(lot)).toEqual([forMe]);
  });
});

describe("perform", () => {
  it("submits a signed deliver transaction built from the offer", async () => {
    const calls: Recorded[] = [];
    const wallet = await loggedInWallet(
      () => okEnvelope({ tx_id: "00".repeat(32), height: 7, settlement_blocks: [] }),
      calls,
    );
    const lot = makeLot();
    const offer: NextAction = { action: "deliver", actor: PUB, transfer_tx_id: "dd".repeat(32) };
    const result = await wallet.perform(lot, offer);
    expect(result.height).toBe(7);

    const submit = calls.find((c) => c.url.endsWith("/v1/tx"));
    expect(submit).toBeDefined();
    expect((submit?.init.headers as Record<string, string>)["authorization"]).toBe("Bearer tok-1");
    const body = JSON.parse(String(submit?.init.body)) as { tx: string };
    const raw = Uint8Array.from(atob(body.tx), (c) => c.charCodeAt(0));
    // submitter(4+32) then the payload tag
    expect(raw[36]).toBe(0x13);
  });

  it("refuses a second action while one is in flight for the same lot", async () => {
    let release: (() => void) | undefined;
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const wallet = await loggedInWallet(async (url) => {
      if (url.endsWith("/v1/tx")) await gate;
      return okEnvelope({ tx_id: "00".repeat(32), height: 1, settlement_blocks: [] });
    });
    const lot = makeLot();
    const offer: NextAction = { action: "quality_update", actor: PUB };

    const first = wallet.perform(lot, offer);
    // wait until the first submission reaches the network layer
    await new Promise((r) => setTimeout(r, 10));
    expect(wallet.busy(lot.lot_id)).toBe(true);
    await expect(wallet.perform(lot, offer)).rejects.toThrow("already in flight");

    release?.();
    await first;
    expect(wallet.busy(lot.lot_id)).toBe(false);
  });

  it("rejects a transfer without a receiver or price instead of guessing", async () => {
    const wallet = await loggedInWallet(() => okEnvelope(null));
    const lot = makeLot();
    const offer: NextAction = { action: "transfer", actor: PUB, to_role: "sugar_mill" };
    await expect(wallet.perform(lot, offer)).rejects.toThrow("receiving user");
    await expect(
      wallet.perform(lot, offer, { actorToHex: "cc".repeat(32), pricePaisePerKg: 0 }),
    ).rejects.toThrow("positive price");
  });

  it("rejects malformed offers rather than sending a bad transaction", async () => {
    const wallet = await loggedInWallet(() => okEnvelope(null));
    const lot = makeLot();
    await expect(
      wallet.perform(lot, { action: "settle", actor: PUB } as NextAction),
    ).rejects.toThrow("malformed settle offer");
  });
});

describe("describeError", () => {
  it("marks network failures retryable and keeps node errors verbatim", () => {
    expect(describeError(new NetworkError(new Error("refused")))).toEqual({
      message: "node unreachable: refused",
      retryable: true,
    });
    expect(describeError(new ApiError("StaleCustody", "custodian moved on", 409))).toEqual({
      message: "StaleCustody: custodian moved on",
      retryable: false,
    });
    expect(describeError(new Error("boom")).retryable).toBe(false);
  });
});
