/** JSON shapes of the node's /v1 API, as the wallet consumes them. */

export type RoleName =
  | "seed_supplier"
  | "farmer"
  | "sugar_mill"
  | "distributor"
  | "retailer"
  | "consumer"
  | "validator";

export interface Session {
  token: string;
  user_id: string;
  issued_at: number;
  expires_at: number;
}

export interface RegisterResult {
  user_id: string;
  private_key_seed: string;
  tx_id: string;
}

export interface PendingTransfer {
  transfer_tx_id: string;
  actor_from: string;
  actor_to: string;
  price_paise_per_kg: number;
}

export interface OutstandingPayment {
  payer: string;
  payee: string;
  amount_paise: number;
}

/**
 * One submission the node is willing to accept for a lot right now.
 * The dashboard renders exactly these; it never invents an action.
 */
export interface NextAction {
  action: "quality_update" | "transfer" | "deliver" | "settle";
  actor: string;
  to_role?: RoleName;
  transfer_tx_id?: string;
  payee?: string;
  amount_paise?: number;
  delivery_tx_id?: string;
}

export interface LotSummary {
  lot_id: string;
  quantity_kg: number;
  farm_location: string;
  custodian: string;
  custodian_role: RoleName;
  registered_height: number;
  seed_supplier_ref: string | null;
  consumed: boolean;
  pending_transfer: PendingTransfer | null;
  outstanding_payment: OutstandingPayment | null;
  next_actions: NextAction[];
}

export interface TraceLeg {
  role_from: RoleName;
  role_to: RoleName;
  tx_id: string;
  timestamp: number;
  price_paise_per_kg: number;
  delivered: boolean;
  settled: boolean;
}

export interface QualityEntry {
  tx_id: string;
  height: number;
  grade: string;
  moisture_tenths_pct: number;
  affected_by_worms: boolean;
}

export interface Trace {
  lot_id: string;
  quantity_kg: number;
  farm_location: string;
  registered_by: string;
  registered_height: number;
  seed_supplier_ref: string | null;
  legs: TraceLeg[];
  quality_timeline: QualityEntry[];
}

export interface LatencyLeg {
  leg_index: number;
  role_from: RoleName;
  role_to: RoleName;
  delivery_height: number;
  settle_height: number | null;
  blocks_to_settle: number | null;
}

export interface UserEntry {
  user_id: string;
  role: RoleName;
  created_at: number;
}

export interface TxInfo {
  tx_id: string;
  submitter: string;
  timestamp: number;
  height: number | null;
  payload: { type: string } & Record<string, unknown>;
}

export interface ChainHealth {
  ok: boolean;
  height: number;
  bad_height: number | null;
  reason: string | null;
}

export interface SubmitResult {
  tx_id: string;
  height: number;
  settlement_blocks: { height: number; tx_ids: string[] }[];
}

export interface SurveyOptionRow {
  option: string;
  count: number;
  percent: string;
}

export interface SurveyQuestion {
  question: string;
  title: string;
  n: number;
  options?: SurveyOptionRow[];
  min?: number;
  max?: number;
  mean?: string;
}

export interface SurveyReport {
  report: string;
  questions: SurveyQuestion[];
  delay: {
    fraction_delayed: string;
    min_days: number | null;
    max_days: number | null;
  };
}

export const ROLE_LABELS: Record<RoleName, string> = {
  seed_supplier: "Seed supplier",
  farmer: "Farmer",
  sugar_mill: "Sugar mill",
  distributor: "Distributor",
  retailer: "Retailer",
  consumer: "Consumer",
  validator: "Validator",
};

export function roleLabel(role: RoleName): string {
  return ROLE_LABELS[role] ?? role;
}

export function formatPaise(amount: number): string {
  const rupees = Math.floor(amount / 100);
  const paise = Math.abs(amount % 100);
  return `₹${rupees.toLocaleString("en-IN")}.${paise.toString().padStart(2, "0")}`;
}
