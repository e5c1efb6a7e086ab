/**
 * DOM rendering, no framework. Every screen is a function from data and
 * callbacks to an element; main.ts swaps them into #view. Forms keep their
 * state across failed submissions because the elements are only replaced
 * on success or navigation.
 */

import type {
  LatencyLeg,
  LotSummary,
  NextAction,
  SurveyReport,
  Trace,
} from "./model.js";
import { formatPaise, roleLabel } from "./model.js";

type Child = Node | string | null | undefined;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    node.append(child);
  }
  return node;
}

export function shortId(hex: string): string {
  return hex.length > 16 ? `${hex.slice(0, 8)}…${hex.slice(-8)}` : hex;
}

export function notice(kind: "error" | "info" | "success", text: string, retry?: () => void): HTMLElement {
  const box = el("div", { class: `notice notice-${kind}`, role: "status" }, text);
  if (retry) {
    const button = el("button", { class: "retry", type: "button" }, "Retry");
    button.addEventListener("click", retry);
    box.append(" ", button);
  }
  return box;
}

// -- forms -----------------------------------------------------------------

export interface FieldSpec {
  name: string;
  label: string;
  type?: string;
  required?: boolean;
  placeholder?: string;
  options?: { value: string; label: string }[];
}

export function form(
  legend: string,
  fields: FieldSpec[],
  submitLabel: string,
  onSubmit: (values: Record<string, string>, setStatus: (node: HTMLElement | null) => void) => void,
): HTMLElement {
  const statusSlot = el("div", { class: "status-slot" });
  const setStatus = (node: HTMLElement | null): void => {
    statusSlot.replaceChildren(...(node ? [node] : []));
  };
  const formEl = el("form", { class: "card" }, legend ? el("h2", {}, legend) : null);
  for (const field of fields) {
    const id = `f-${field.name}`;
    let input: HTMLElement;
    if (field.options) {
      input = el(
        "select",
        { id, name: field.name },
        ...field.options.map((o) => el("option", { value: o.value }, o.label)),
      );
    } else {
      input = el("input", {
        id,
        name: field.name,
        type: field.type ?? "text",
        ...(field.required ? { required: "" } : {}),
        ...(field.placeholder ? { placeholder: field.placeholder } : {}),
      });
    }
    formEl.append(el("label", { for: id }, field.label), input);
  }
  const submit = el("button", { type: "submit" }, submitLabel);
  formEl.append(submit, statusSlot);
  formEl.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(formEl);
    const values: Record<string, string> = {};
    for (const [key, value] of data.entries()) values[key] = String(value);
    onSubmit(values, setStatus);
  });
  return formEl;
}

// -- dashboard -------------------------------------------------------------

export interface LotHandlers {
  /** Called with the chosen action and its filled-in parameters. */
  onAction(lot: LotSummary, action: NextAction, values: Record<string, string>): void;
  onTrace(lot: LotSummary): void;
}

function actionLabel(action: NextAction): string {
  switch (action.action) {
    case "quality_update":
      return "Quality update";
    case "transfer":
      return action.to_role ? `Transfer to ${roleLabel(action.to_role).toLowerCase()}` : "Transfer";
    case "deliver":
      return "Confirm delivery";
    case "settle":
      return action.amount_paise !== undefined
        ? `Settle ${formatPaise(action.amount_paise)}`
        : "Settle payment";
  }
}

/** Parameter inputs an action needs beyond what the node already pinned. */
function actionFields(action: NextAction): FieldSpec[] {
  switch (action.action) {
    case "quality_update":
      return [
        { name: "grade", label: "Grade", placeholder: "A", required: true },
        { name: "moisture", label: "Moisture %", type: "number", placeholder: "12.5", required: true },
        { name: "worms", label: "Worm damage", options: [
          { value: "no", label: "none seen" },
          { value: "yes", label: "affected" },
        ] },
      ];
    case "transfer":
      return [
        { name: "to", label: "Receiver", options: [] },  // options filled by caller
        { name: "price", label: "Price (paise/kg)", type: "number", required: true },
      ];
    default:
      return [];
  }
}

export function lotCard(
  lot: LotSummary,
  offered: NextAction[],
  busy: boolean,
  receivers: { value: string; label: string }[],
  handlers: LotHandlers,
): HTMLElement {
  const head = el(
    "div",
    { class: "lot-head" },
    el("strong", {}, shortId(lot.lot_id)),
    el("span", { class: "role-chip" }, roleLabel(lot.custodian_role)),
    lot.consumed ? el("span", { class: "chip chip-done" }, "consumed") : null,
  );
  const facts = el(
    "dl",
    { class: "facts" },
    el("dt", {}, "Quantity"),
    el("dd", {}, `${lot.quantity_kg} kg`),
    el("dt", {}, "From"),
    el("dd", {}, lot.farm_location),
    el("dt", {}, "Custodian"),
    el("dd", { class: "mono" }, shortId(lot.custodian)),
  );
  if (lot.pending_transfer) {
    facts.append(
      el("dt", {}, "In transit"),
      el("dd", {}, `to ${shortId(lot.pending_transfer.actor_to)} at ${lot.pending_transfer.price_paise_per_kg} paise/kg`),
    );
  }
  if (lot.outstanding_payment) {
    facts.append(
      el("dt", {}, "Owed"),
      el("dd", {}, `${formatPaise(lot.outstanding_payment.amount_paise)} to ${shortId(lot.outstanding_payment.payee)}`),
    );
  }

  const actions = el("div", { class: "actions" });
  for (const action of offered) {
    const fields = actionFields(action);
    if (action.action === "transfer") {
      const receiverField = fields[0];
      if (receiverField) receiverField.options = receivers;
    }
    const button = el("button", { type: "button", ...(busy ? { disabled: "" } : {}) }, actionLabel(action));
    if (fields.length === 0) {
      button.addEventListener("click", () => handlers.onAction(lot, action, {}));
      actions.append(button);
    } else {
      // parameterized actions expand into a small inline form
      const details = el("details", {}, el("summary", {}, actionLabel(action)));
      const inner = form("", fields, "Submit", (values) => handlers.onAction(lot, action, values));
      inner.classList.add("inline-form");
      if (busy) inner.querySelector("button[type=submit]")?.setAttribute("disabled", "");
      details.append(inner);
      actions.append(details);
    }
  }
  const traceButton = el("button", { type: "button", class: "ghost" }, "Trace");
  traceButton.addEventListener("click", () => handlers.onTrace(lot));
  actions.append(traceButton);

  return el("article", { class: "card lot-card", "data-lot": lot.lot_id }, head, facts, actions);
}

export function dashboard(
  mine: LotSummary[],
  others: LotSummary[],
  renderCard: (lot: LotSummary) => HTMLElement,
): HTMLElement {
  const root = el("section", {});
  root.append(el("h2", {}, "My lots"));
  root.append(
    mine.length
      ? el("div", { class: "lot-grid" }, ...mine.map(renderCard))
      : el("p", { class: "empty" }, "No lots in your custody."),
  );
  if (others.length) {
    root.append(el("h2", {}, "Everything on the ledger"), el("div", { class: "lot-grid" }, ...others.map(renderCard)));
  }
  return root;
}

// -- trace -----------------------------------------------------------------

export function traceView(trace: Trace, latency: LatencyLeg[]): HTMLElement {
  const root = el("section", { class: "trace" });
  root.append(
    el("h2", {}, `Lot ${shortId(trace.lot_id)}`),
    el(
      "p",
      { class: "trace-origin" },
      `${trace.quantity_kg} kg from ${trace.farm_location}, registered at height ${trace.registered_height}`,
      trace.seed_supplier_ref ? ` (seed: ${trace.seed_supplier_ref})` : "",
    ),
  );

  const timeline = el("ol", { class: "timeline" });
  for (const leg of trace.legs) {
    const state = leg.settled ? "settled" : leg.delivered ? "delivered" : "in transit";
    timeline.append(
      el(
        "li",
        { class: `leg leg-${state.replace(" ", "-")}` },
        el("span", { class: "leg-route" }, `${roleLabel(leg.role_from)} → ${roleLabel(leg.role_to)}`),
        el("span", { class: "leg-price" }, `${leg.price_paise_per_kg} paise/kg`),
        el("span", { class: `chip chip-${state.replace(" ", "-")}` }, state),
        el("span", { class: "mono leg-tx" }, shortId(leg.tx_id)),
      ),
    );
  }
  root.append(el("h3", {}, "Custody"), timeline);

  if (trace.quality_timeline.length) {
    const list = el("ul", { class: "quality-list" });
    for (const q of trace.quality_timeline) {
      list.append(
        el(
          "li",
          {},
          `height ${q.height}: grade ${q.grade}, moisture ${(q.moisture_tenths_pct / 10).toFixed(1)}%, ` +
            (q.affected_by_worms ? "worm damage" : "no worm damage"),
        ),
      );
    }
    root.append(el("h3", {}, "Quality"), list);
  }

  if (latency.length) {
    const table = el(
      "table",
      { class: "latency" },
      el(
        "tr",
        {},
        el("th", {}, "Leg"),
        el("th", {}, "Delivered"),
        el("th", {}, "Settled"),
        el("th", {}, "Blocks to payment"),
      ),
    );
    for (const leg of latency) {
      table.append(
        el(
          "tr",
          {},
          el("td", {}, `${roleLabel(leg.role_from)} → ${roleLabel(leg.role_to)}`),
          el("td", {}, String(leg.delivery_height)),
          el("td", {}, leg.settle_height === null ? "-" : String(leg.settle_height)),
          el("td", {}, leg.blocks_to_settle === null ? "waiting" : String(leg.blocks_to_settle)),
        ),
      );
    }
    root.append(el("h3", {}, "Payment"), table);
  }
  return root;
}

// -- survey ----------------------------------------------------------------

export function surveyView(report: SurveyReport): HTMLElement {
  const root = el("section", { class: "survey" }, el("h2", {}, "Farmer survey"));
  root.append(
    el(
      "p",
      {},
      `Paid late: ${report.delay.fraction_delayed}` +
        (report.delay.min_days !== null ? ` (${report.delay.min_days} to ${report.delay.max_days} days)` : ""),
    ),
  );
  for (const question of report.questions) {
    const block = el("div", { class: "card survey-q" }, el("h3", {}, `${question.question}: ${question.title}`));
    if (question.options) {
      for (const row of question.options) {
        const pct = parseFloat(row.percent) || 0;
        block.append(
          el(
            "div",
            { class: "bar-row" },
            el("span", { class: "bar-label" }, row.option),
            el("div", { class: "bar-track" }, el("div", { class: "bar-fill", style: `width:${pct}%` })),
            el("span", { class: "bar-value" }, `${row.count} (${row.percent})`),
          ),
        );
      }
    } else {
      block.append(el("p", {}, `${question.min} to ${question.max}, mean ${question.mean}`));
    }
    root.append(block);
  }
  return root;
}
