/** Console wiring: poll loops, DOM regions, form handling.
 *
 * One second of wall time per dashboard refresh, mirroring the rooms'
 * own reporting cadence.  Events ride a separate long-poll so alarms
 * land between dashboard ticks.  The admin form is static markup and
 * never re-rendered, so typing survives refreshes; only the table,
 * grid, banners, and feed regions are replaced.
 */

import * as api from "./api.js";
import {
  applyEvents,
  applyMiss,
  applyNoData,
  applyOffline,
  applyOnline,
  applyRegistry,
  applyStatus,
  beginCommand,
  dismissAlarm,
  newState,
  settleCommand,
  type ConsoleState,
} from "./state.js";
import {
  renderAdminTable,
  renderAlarmBanner,
  renderDashboard,
  renderFeed,
  renderOfflineBanner,
  renderSweepReport,
} from "./render.js";
import type { OpcodeName, RegistryRow, SweepReportDoc } from "./types.js";
import { OPCODES } from "./types.js";

const POLL_MS = 1000;
const EVENT_POLL_MS = 25_000;

interface AdminFormState {
  mode: "add" | "update";
  roomId: number | null;
}

export class Console {
  readonly state: ConsoleState = newState();
  private readonly doc: Document;
  private form: AdminFormState = { mode: "add", roomId: null };
  private sweepReport: SweepReportDoc | null = null;
  private sweepError = "";
  private adminError = "";
  private pollTimer: number | undefined;
  private pollBusy = false;
  private stopped = false;

  constructor(doc: Document) {
    this.doc = doc;
  }

  start(): void {
    this.bind();
    void this.pollOnce();
    this.pollTimer = setInterval(() => void this.pollOnce(), POLL_MS) as unknown as number;
    void this.eventLoop();
  }

  stop(): void {
    this.stopped = true;
    if (this.pollTimer !== undefined) clearInterval(this.pollTimer);
  }

  // -- polling --------------------------------------------------------------

  private async pollOnce(): Promise<void> {
    if (this.pollBusy) return; // a slow poll must not stack another
    this.pollBusy = true;
    try {
      let rows;
      try {
        rows = await api.fetchRooms();
      } catch {
        applyOffline(this.state);
        this.render();
        return;
      }
      applyOnline(this.state);
      applyRegistry(this.state, rows);
      await Promise.all(
        rows.map(async (row) => {
          try {
            const result = await api.fetchStatus(row.room_id);
            if (result.kind === "ok") applyStatus(this.state, row.room_id, result.status);
            else if (result.kind === "no_data") applyNoData(this.state, row.room_id);
            else applyMiss(this.state, row.room_id); // gone mid-poll
          } catch {
            applyMiss(this.state, row.room_id);
          }
        }),
      );
      this.render();
    } finally {
      this.pollBusy = false;
    }
  }

  private async eventLoop(): Promise<void> {
    while (!this.stopped) {
      try {
        const events = await api.pollEvents(this.state.eventsCursor, EVENT_POLL_MS);
        if (events.length > 0) {
          applyEvents(this.state, events);
          this.render();
        }
      } catch {
        await sleep(POLL_MS); // server away; the dashboard poll owns the banner
      }
    }
  }

  // -- DOM ------------------------------------------------------------------

  private region(id: string): HTMLElement {
    const el = this.doc.getElementById(id);
    if (!el) throw new Error(`missing region #${id}`);
    return el;
  }

  render(): void {
    this.region("banners").innerHTML =
      renderOfflineBanner(this.state.online) + renderAlarmBanner(this.state.alarm);
    this.region("grid").innerHTML = renderDashboard(this.state);
    this.region("admin-table").innerHTML = renderAdminTable(this.state.registry);
    this.region("sweep-report").innerHTML = renderSweepReport(this.sweepReport, this.sweepError);
    this.region("feed").innerHTML = renderFeed(this.state.feed);
    this.region("stat-rooms").textContent = String(this.state.registry.length);
    this.region("stat-seq").textContent = String(this.state.eventsCursor);
    const dot = this.region("conn-dot");
    dot.className = this.state.online ? "dot live" : "dot dead";
    const err = this.region("admin-error");
    err.textContent = this.adminError;
    err.hidden = this.adminError === "";
  }

  private bind(): void {
    this.region("grid").addEventListener("click", (ev) => {
      const btn = (ev.target as HTMLElement).closest<HTMLButtonElement>("button.cmd");
      if (btn) void this.onCommand(btn);
    });
    this.region("banners").addEventListener("click", (ev) => {
      const btn = (ev.target as HTMLElement).closest<HTMLButtonElement>("[data-act='dismiss-alarm']");
      if (btn) {
        dismissAlarm(this.state);
        this.render();
      }
    });
    this.region("admin-table").addEventListener("click", (ev) => {
      const btn = (ev.target as HTMLElement).closest<HTMLButtonElement>("button[data-act]");
      if (!btn) return;
      const roomId = Number(btn.dataset.room);
      if (btn.dataset.act === "delete") void this.onDelete(roomId);
      if (btn.dataset.act === "edit") this.enterEditMode(roomId);
    });
    this.region("admin-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.onAdminSubmit();
    });
    this.region("admin-cancel").addEventListener("click", (ev) => {
      ev.preventDefault();
      this.leaveEditMode();
    });
    this.region("sweep-btn").addEventListener("click", () => void this.onSweep());
    this.region("jump-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      this.onJump();
    });
  }

  // -- commands ---------------------------------------------------------------

  private async onCommand(btn: HTMLButtonElement): Promise<void> {
    const roomId = Number(btn.dataset.room);
    const op = btn.dataset.op as OpcodeName;
    if (!OPCODES.includes(op)) return;
    if (!beginCommand(this.state, roomId, op)) return;
    this.render();
    let outcome;
    try {
      outcome = await api.postCommand(roomId, op);
    } catch {
      outcome = { status: "UNREACHABLE", note: "network error, command state unknown" };
    }
    settleCommand(this.state, roomId, op, outcome);
    this.render();
  }

  // -- admin ------------------------------------------------------------------

  private field(name: string): HTMLInputElement {
    return this.region(`f-${name}`) as HTMLInputElement;
  }

  private readForm(): { row: RegistryRow | null; error: string } {
    const roomId = this.form.mode === "update" ? this.form.roomId! : Number(this.field("room").value);
    const node = this.field("node").value.trim();
    const port = Number(this.field("port").value);
    const session = Number(this.field("session").value);
    const devicePort = Number(this.field("device-port").value);
    if (!Number.isInteger(roomId) || roomId < 1) {
      return { row: null, error: "room id must be a positive integer" };
    }
    if (node === "") return { row: null, error: "node name is required" };
    for (const [label, value] of [["port", port], ["device port", devicePort]] as const) {
      if (!Number.isInteger(value) || value < 0 || value > 65535) {
        return { row: null, error: `${label} must be an integer in 0..65535` };
      }
    }
    if (!Number.isInteger(session) || session < 1) {
      return { row: null, error: "session id must be a positive integer" };
    }
    return {
      row: { room_id: roomId, node, port, session_id: session, device_port: devicePort },
      error: "",
    };
  }

  private async onAdminSubmit(): Promise<void> {
    const { row, error } = this.readForm();
    if (!row) {
      this.adminError = error;
      this.render();
      return;
    }
    const result =
      this.form.mode === "add"
        ? await api.addRoom(row).catch(() => ({ ok: false as const, error: "network error" }))
        : await api
            .updateRoom(row.room_id, {
              node: row.node,
              port: row.port,
              session_id: row.session_id,
              device_port: row.device_port,
            })
            .catch(() => ({ ok: false as const, error: "network error" }));
    if (!result.ok) {
      this.adminError = result.error;
      this.render();
      return;
    }
    this.adminError = "";
    this.leaveEditMode();
    await this.pollOnce(); // reflect the change without waiting a tick
  }

  private async onDelete(roomId: number): Promise<void> {
    const result = await api.deleteRoom(roomId).catch(() => ({ ok: false, error: "network error" }));
    this.adminError = result.ok ? "" : result.error;
    await this.pollOnce();
  }

  private enterEditMode(roomId: number): void {
    const row = this.state.registry.find((r) => r.room_id === roomId);
    if (!row) return;
    this.form = { mode: "update", roomId };
    this.field("room").value = String(row.room_id);
    this.field("room").disabled = true; // identity is fixed, only wiring changes
    this.field("node").value = row.node;
    this.field("port").value = String(row.port);
    this.field("session").value = String(row.session_id);
    this.field("device-port").value = String(row.device_port);
    this.region("admin-submit").textContent = "update room";
    this.region("admin-cancel").hidden = false;
  }

  private leaveEditMode(): void {
    this.form = { mode: "add", roomId: null };
    (this.region("admin-form") as HTMLFormElement).reset();
    this.field("room").disabled = false;
    this.region("admin-submit").textContent = "add room";
    this.region("admin-cancel").hidden = true;
  }

  private async onSweep(): Promise<void> {
    const btn = this.region("sweep-btn") as HTMLButtonElement;
    btn.disabled = true;
    try {
      const result = await api.runSweep().catch(() => ({ ok: false as const, error: "network error" }));
      if (result.ok) {
        this.sweepReport = result.report;
        this.sweepError = "";
      } else {
        this.sweepError = result.error;
      }
      this.render();
    } finally {
      btn.disabled = false;
    }
  }

  // -- quick jump ---------------------------------------------------------------

  private onJump(): void {
    const input = this.region("jump-input") as HTMLInputElement;
    const card = this.doc.getElementById(`card-${Number(input.value)}`);
    if (!card) {
      input.classList.add("unknown");
      setTimeout(() => input.classList.remove("unknown"), 900);
      return;
    }
    card.scrollIntoView({ behavior: "smooth", block: "center" });
    card.classList.add("flash");
    setTimeout(() => card.classList.remove("flash"), 1600);
    input.value = "";
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export function startConsole(doc: Document): Console {
  const console_ = new Console(doc);
  console_.start();
  return console_;
}
