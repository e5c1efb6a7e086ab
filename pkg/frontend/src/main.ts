/** App shell: hash routing, the top bar, and the screen wiring. */

import { NodeClient } from "./api.js";
import { Wallet, describeError } from "./wallet.js";
import type { LotSummary, NextAction, RoleName, UserEntry } from "./model.js";
import { roleLabel } from "./model.js";
import {
  dashboard,
  el,
  form,
  lotCard,
  notice,
  shortId,
  surveyView,
  traceView,
  type FieldSpec,
} from "./render.js";

let client = new NodeClient();
let wallet = new Wallet(client);

/** Point the app at a node; the e2e harness uses an absolute base URL. */
export function configureApp(baseUrl: string): { client: NodeClient; wallet: Wallet } {
  client = new NodeClient(baseUrl);
  wallet = new Wallet(client);
  return { client, wallet };
}

const REGISTERABLE_ROLES: RoleName[] = [
  "farmer",
  "sugar_mill",
  "distributor",
  "retailer",
  "consumer",
  "seed_supplier",
];

function viewRoot(): HTMLElement {
  const root = document.getElementById("view");
  if (!root) throw new Error("missing #view container");
  return root;
}

function show(...nodes: (Node | null)[]): void {
  viewRoot().replaceChildren(...nodes.filter((n): n is Node => n !== null));
}

function go(hash: string): void {
  if (location.hash === hash) void route();
  else location.hash = hash;
}

// -- top bar ---------------------------------------------------------------

async function renderTopBar(): Promise<void> {
  const bar = document.getElementById("topbar");
  if (!bar) return;
  const links = el(
    "nav",
    {},
    navLink("#/lots", "Lots"),
    navLink("#/survey", "Survey"),
  );
  const session = el("div", { class: "session" });
  if (wallet.authenticated && wallet.userId) {
    const out = el("button", { type: "button", class: "ghost" }, "Log out");
    out.addEventListener("click", () => {
      wallet.forget();
      go("#/login");
    });
    session.append(el("span", { class: "mono" }, shortId(wallet.userId)), out);
  } else {
    session.append(navLink("#/login", "Log in"), navLink("#/register", "Register"));
  }
  const health = el("span", { class: "health health-unknown" }, "…");
  bar.replaceChildren(el("strong", { class: "brand" }, "sugarchain"), links, health, session);
  try {
    const report = await client.chainVerify();
    health.textContent = report.ok ? `chain ok · height ${report.height}` : `chain BROKEN at ${report.bad_height}`;
    health.className = report.ok ? "health health-ok" : "health health-bad";
  } catch {
    health.textContent = "node unreachable";
    health.className = "health health-bad";
  }
}

function navLink(hash: string, label: string): HTMLElement {
  const a = el("a", { href: hash }, label);
  if (location.hash.startsWith(hash)) a.classList.add("active");
  return a;
}

// -- auth screens ----------------------------------------------------------

function loginScreen(): HTMLElement {
  return form(
    "Log in",
    [
      { name: "user_id", label: "User id (public key, hex)", required: true },
      { name: "password", label: "Password", type: "password", required: true },
      { name: "seed", label: "Key seed (hex, from registration)", type: "password", required: true },
    ],
    "Log in",
    (values, setStatus) => {
      void (async () => {
        try {
          const session = await client.login(values["user_id"] ?? "", values["password"] ?? "");
          await wallet.adopt(session, (values["seed"] ?? "").trim());
          go("#/lots");
        } catch (err) {
          const { message, retryable } = describeError(err);
          setStatus(notice("error", message, retryable ? () => setStatus(null) : undefined));
        }
      })();
    },
  );
}

function registerScreen(): HTMLElement {
  const fields: FieldSpec[] = [
    { name: "name", label: "Name", required: true },
    { name: "email", label: "Email", type: "email", required: true },
    { name: "phone", label: "Phone", required: true },
    { name: "password", label: "Password (8+ characters)", type: "password", required: true },
    {
      name: "role",
      label: "Role",
      options: REGISTERABLE_ROLES.map((r) => ({ value: r, label: roleLabel(r) })),
    },
  ];
  for (let i = 1; i <= 3; i++) {
    fields.push(
      { name: `q${i}`, label: `Recovery question ${i}`, required: true },
      { name: `a${i}`, label: `Answer ${i}`, required: true },
    );
  }
  return form("Register", fields, "Create account", (values, setStatus) => {
    void (async () => {
      try {
        const result = await client.register({
          name: values["name"] ?? "",
          email: values["email"] ?? "",
          phone: values["phone"] ?? "",
          password: values["password"] ?? "",
          role: values["role"] ?? "farmer",
          recovery: [1, 2, 3].map((i) => ({
            question: values[`q${i}`] ?? "",
            answer: values[`a${i}`] ?? "",
          })),
        });
        const session = await client.login(result.user_id, values["password"] ?? "");
        await wallet.adopt(session, result.private_key_seed);
        show(
          notice("success", "Account created. Store this key seed somewhere safe; the node does not keep it."),
          el("div", { class: "card" },
            el("h3", {}, "Your signing key seed"),
            el("p", { class: "mono seed" }, result.private_key_seed),
            el("p", { class: "mono" }, `user id: ${result.user_id}`),
            (() => {
              const b = el("button", { type: "button" }, "Continue to lots");
              b.addEventListener("click", () => go("#/lots"));
              return b;
            })(),
          ),
        );
        void renderTopBar();
      } catch (err) {
        const { message, retryable } = describeError(err);
        setStatus(notice("error", message, retryable ? () => setStatus(null) : undefined));
      }
    })();
  });
}

function recoverScreen(): HTMLElement {
  return form(
    "Recover access",
    [
      { name: "user_id", label: "User id (hex)", required: true },
      { name: "a1", label: "Answer 1", required: true },
      { name: "a2", label: "Answer 2", required: true },
      { name: "a3", label: "Answer 3", required: true },
      { name: "new_password", label: "New password", type: "password", required: true },
    ],
    "Rotate credentials",
    (values, setStatus) => {
      void (async () => {
        try {
          await client.recover(
            values["user_id"] ?? "",
            [values["a1"] ?? "", values["a2"] ?? "", values["a3"] ?? ""],
            values["new_password"] ?? "",
          );
          setStatus(notice("success", "Credentials rotated; log in with the new password."));
        } catch (err) {
          setStatus(notice("error", describeError(err).message));
        }
      })();
    },
  );
}

// -- lots ------------------------------------------------------------------

function receiversFor(users: UserEntry[], action: NextAction): { value: string; label: string }[] {
  return users
    .filter((u) => u.role === action.to_role)
    .map((u) => ({ value: u.user_id, label: `${roleLabel(u.role)} ${shortId(u.user_id)}` }));
}

// survives one lotsScreen() re-render so a success message outlives the refresh
let flashMessage: HTMLElement | null = null;

async function lotsScreen(): Promise<void> {
  let lots: LotSummary[];
  let users: UserEntry[];
  try {
    [lots, users] = await Promise.all([client.lots(), client.users()]);
  } catch (err) {
    show(notice("error", describeError(err).message, () => void lotsScreen()));
    return;
  }

  const flash = el("div", { class: "flash-slot" });
  if (flashMessage) {
    flash.append(flashMessage);
    flashMessage = null;
  }
  const handlers = {
    onTrace: (lot: LotSummary) => go(`#/trace/${lot.lot_id}`),
    onAction: (lot: LotSummary, action: NextAction, values: Record<string, string>) => {
      void (async () => {
        try {
          const result = await wallet.perform(lot, action, {
            grade: values["grade"],
            moistureTenthsPct: values["moisture"] ? Math.round(parseFloat(values["moisture"]) * 10) : undefined,
            affectedByWorms: values["worms"] === "yes",
            actorToHex: values["to"],
            pricePaisePerKg: values["price"] ? parseInt(values["price"], 10) : undefined,
          });
          const settled = result.settlement_blocks.length
            ? `; payment settled in block ${result.settlement_blocks.map((b) => b.height).join(", ")}`
            : "";
          flashMessage = notice(
            "success",
            `Accepted in block ${result.height} (tx ${shortId(result.tx_id)})${settled}`,
          );
          await lotsScreen();
        } catch (err) {
          const { message, retryable } = describeError(err);
          flash.replaceChildren(notice("error", message, retryable ? () => flash.replaceChildren() : undefined));
        }
      })();
    },
  };

  const renderCard = (lot: LotSummary): HTMLElement =>
    lotCard(lot, wallet.offeredToMe(lot), wallet.busy(lot.lot_id), receiversForLot(users, lot), handlers);

  const mine = wallet.myLots(lots);
  const mineIds = new Set(mine.map((l) => l.lot_id));
  // lots someone is offering me an action on (deliver, settle) count as mine for display
  const offered = lots.filter((l) => !mineIds.has(l.lot_id) && wallet.offeredToMe(l).length > 0);
  const rest = lots.filter((l) => !mineIds.has(l.lot_id) && !offered.includes(l));

  const body = dashboard([...mine, ...offered], rest, renderCard);
  const top: Node[] = [flash];
  if (wallet.authenticated) top.push(registerLotForm());
  else top.push(notice("info", "Log in to act on lots; browsing is open to everyone."));
  show(...top, body);
}

function receiversForLot(users: UserEntry[], lot: LotSummary): { value: string; label: string }[] {
  const transfer = lot.next_actions.find((a) => a.action === "transfer");
  return transfer ? receiversFor(users, transfer) : [];
}

function registerLotForm(): HTMLElement {
  const details = el("details", { class: "register-lot" }, el("summary", {}, "Register a new lot"));
  const inner = form(
    "",
    [
      { name: "qty", label: "Quantity (kg)", type: "number", required: true },
      { name: "location", label: "Farm location", required: true },
      { name: "price", label: "Floor price (paise/kg)", type: "number", required: true },
      { name: "seed_ref", label: "Seed supplier ref (optional)" },
    ],
    "Register lot",
    (values, setStatus) => {
      void (async () => {
        try {
          const result = await wallet.registerLot(
            parseInt(values["qty"] ?? "0", 10),
            values["location"] ?? "",
            parseInt(values["price"] ?? "0", 10),
            values["seed_ref"] || undefined,
          );
          flashMessage = notice(
            "success",
            `Lot registered in block ${result.height} (tx ${shortId(result.tx_id)})`,
          );
          await lotsScreen();
        } catch (err) {
          const { message, retryable } = describeError(err);
          setStatus(notice("error", message, retryable ? () => setStatus(null) : undefined));
        }
      })();
    },
  );
  details.append(inner);
  return details;
}

// -- trace -----------------------------------------------------------------

async function traceScreen(lotId: string): Promise<void> {
  try {
    const [trace, latency] = await Promise.all([client.trace(lotId), client.latency(lotId)]);
    const back = el("a", { href: "#/lots", class: "back" }, "← lots");
    show(back, traceView(trace, latency));
  } catch (err) {
    show(notice("error", describeError(err).message, () => void traceScreen(lotId)));
  }
}

// -- routing ---------------------------------------------------------------

export async function route(): Promise<void> {
  const hash = location.hash || (wallet.authenticated ? "#/lots" : "#/login");
  void renderTopBar();
  if (hash.startsWith("#/trace/")) {
    await traceScreen(hash.slice("#/trace/".length));
  } else if (hash === "#/register") {
    show(registerScreen());
  } else if (hash === "#/recover") {
    show(
      recoverScreen(),
      el("p", { class: "hint" }, "Answer all three recovery questions to set a new password."),
    );
  } else if (hash === "#/survey") {
    try {
      show(surveyView(await client.surveyReport()));
    } catch (err) {
      show(notice("error", describeError(err).message, () => void route()));
    }
  } else if (hash === "#/login") {
    show(
      loginScreen(),
      el("p", { class: "hint" }, "No account yet? ", navLink("#/register", "Register"), " · Forgot the password? ", navLink("#/recover", "Recover")),
    );
  } else {
    await lotsScreen();
  }
}

export async function boot(): Promise<void> {
  await wallet.restore();
  window.addEventListener("hashchange", () => void route());
  await route();
}

// in a real browser there is no `process`; under vitest the harness boots
const underTestRunner = typeof process !== "undefined" && !!process.versions?.node;
if (!underTestRunner) void boot();
