/**
 * Wallet state: the session, the signing key, and the one rule that keeps
 * the UI honest: an action button exists if and only if the node listed
 * that action under the lot's next_actions for this user. The wallet never
 * derives its own idea of what is legal.
 */

import { ApiError, NetworkError, NodeClient } from "./api.js";
import { buildTransaction, importSeed, type WalletKey } from "./crypto.js";
import * as payloads from "./payloads.js";
import type { LotSummary, NextAction, Session, SubmitResult } from "./model.js";

const STORAGE_KEY = "sugarchain-wallet";

export interface StoredCredentials {
  session: Session;
  seedHex: string;
}

export interface ActionParams {
  grade?: string;
  moistureTenthsPct?: number;
  affectedByWorms?: boolean;
  millInfo?: string;
  actorToHex?: string;
  pricePaisePerKg?: number;
}

export class Wallet {
  session: Session | null = null;
  private key: WalletKey | null = null;
  private seedHex: string | null = null;
  private inFlight = new Set<string>();

  constructor(
    public readonly client: NodeClient,
    private readonly storage: Storage | null = defaultStorage(),
    private readonly now: () => number = Date.now,
  ) {}

  get userId(): string | null {
    return this.session?.user_id ?? null;
  }

  get authenticated(): boolean {
    return this.session !== null && this.session.expires_at * 1000 > this.now();
  }

  async adopt(session: Session, seedHex: string): Promise<void> {
    const key = await importSeed(seedHex);
    if (key.publicKeyHex !== session.user_id) {
      throw new Error("this key does not belong to the logged-in user");
    }
    this.session = session;
    this.key = key;
    this.seedHex = seedHex;
    this.client.token = session.token;
    this.persist();
  }

  /** Bring back a session from storage; false when absent or expired. */
  async restore(): Promise<boolean> {
    const raw = safeGet(this.storage, STORAGE_KEY);
    if (!raw) return false;
    try {
      const stored = JSON.parse(raw) as StoredCredentials;
      if (stored.session.expires_at * 1000 <= this.now()) {
        this.forget();
        return false;
      }
      await this.adopt(stored.session, stored.seedHex);
      return true;
    } catch {
      this.forget();
      return false;
    }
  }

  forget(): void {
    this.session = null;
    this.key = null;
    this.seedHex = null;
    this.client.token = null;
    if (this.storage) {
      try {
        this.storage.removeItem(STORAGE_KEY);
      } catch {
        // storage may be unavailable; the in-memory session already went
      }
    }
  }

  private persist(): void {
    if (!this.storage || !this.session || !this.seedHex) return;
    try {
      this.storage.setItem(
        STORAGE_KEY,
        JSON.stringify({ session: this.session, seedHex: this.seedHex } satisfies StoredCredentials),
      );
    } catch {
      // private-mode quota errors just mean the session won't survive reload
    }
  }

  myLots(lots: LotSummary[]): LotSummary[] {
    const me = this.userId;
    return me ? lots.filter((lot) => lot.custodian === me) : [];
  }

  /** Actions on this lot the logged-in user may take, per the node. */
  offeredToMe(lot: LotSummary): NextAction[] {
    const me = this.userId;
    return me ? lot.next_actions.filter((a) => a.actor === me) : [];
  }

  busy(lotId: string): boolean {
    return this.inFlight.has(lotId);
  }

  /**
   * Sign and submit one offered action. At most one mutating request per
   * lot is in flight; concurrent calls for the same lot are refused.
   */
  async perform(lot: LotSummary, action: NextAction, params: ActionParams = {}): Promise<SubmitResult> {
    if (!this.key || !this.session) throw new Error("not logged in");
    if (this.inFlight.has(lot.lot_id)) {
      throw new Error("an action for this lot is already in flight");
    }
    const payload = this.encodeAction(lot, action, params);
    this.inFlight.add(lot.lot_id);
    try {
      const tx = await buildTransaction(this.key, payload, this.now());
      return await this.client.submitTx(tx.raw);
    } finally {
      this.inFlight.delete(lot.lot_id);
    }
  }

  async registerLot(
    quantityKg: number,
    farmLocation: string,
    pricePaisePerKg: number,
    seedSupplierRef?: string,
    quality?: payloads.QualityReport,
  ): Promise<SubmitResult> {
    if (!this.key) throw new Error("not logged in");
    const payload = payloads.lotRegistered(
      quantityKg,
      farmLocation,
      pricePaisePerKg,
      seedSupplierRef,
      quality,
    );
    const tx = await buildTransaction(this.key, payload, this.now());
    return this.client.submitTx(tx.raw);
  }

  private encodeAction(lot: LotSummary, action: NextAction, params: ActionParams): Uint8Array {
    switch (action.action) {
      case "quality_update":
        return payloads.qualityUpdate(
          lot.lot_id,
          {
            grade: params.grade ?? "A",
            moistureTenthsPct: params.moistureTenthsPct ?? 0,
            affectedByWorms: params.affectedByWorms ?? false,
          },
          params.millInfo,
        );
      case "transfer": {
        if (!params.actorToHex) throw new Error("transfer needs a receiving user");
        if (!params.pricePaisePerKg || params.pricePaisePerKg <= 0) {
          throw new Error("transfer needs a positive price");
        }
        return payloads.transfer(lot.lot_id, action.actor, params.actorToHex, params.pricePaisePerKg);
      }
      case "deliver": {
        if (!action.transfer_tx_id) throw new Error("malformed deliver offer");
        return payloads.deliveryConfirmed(lot.lot_id, action.transfer_tx_id);
      }
      case "settle": {
        if (!action.delivery_tx_id || !action.payee || action.amount_paise === undefined) {
          throw new Error("malformed settle offer");
        }
        return payloads.paymentSettled(
          lot.lot_id,
          action.delivery_tx_id,
          action.actor,
          action.payee,
          action.amount_paise,
        );
      }
    }
  }
}

export function describeError(err: unknown): { message: string; retryable: boolean } {
  if (err instanceof NetworkError) return { message: err.message, retryable: true };
  if (err instanceof ApiError) return { message: `${err.code}: ${err.message}`, retryable: false };
  return { message: err instanceof Error ? err.message : String(err), retryable: false };
}

function defaultStorage(): Storage | null {
  try {
    return globalThis.sessionStorage ?? null;
  } catch {
    return null;
  }
}

function safeGet(storage: Storage | null, key: string): string | null {
  if (!storage) return null;
  try {
    return storage.getItem(key);
  } catch {
    return null;
  }
}
