import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  REFUSED_NOTE,
  renderAdminTable,
  renderAlarmBanner,
  renderDashboard,
  renderFeed,
  renderOfflineBanner,
  renderRoomCard,
  renderSweepReport,
} from "../src/render.js";
import { applyEvents, applyRegistry, applyStatus, newState, type RoomCell } from "../src/state.js";
import type { RegistryRow, RoomStatus, ServerEvent, SweepReportDoc } from "../src/types.js";

function status(overrides: Partial<RoomStatus> = {}): RoomStatus {
  return {
    room_id: 101,
    occupied: true,
    locked: true,
    appliance_on: true,
    temperature: 26.04,
    humidity: 40,
    last_seen: 5000,
    staleness_ms: 995,
    ...overrides,
  };
}

function cell(overrides: Partial<RoomCell> = {}): RoomCell {
  return { roomId: 101, status: status(), missedPolls: 0, noDataYet: false, ...overrides };
}

function row(roomId: number, overrides: Partial<RegistryRow> = {}): RegistryRow {
  return {
    room_id: roomId,
    node: "router_a",
    port: 1701,
    session_id: roomId,
    device_port: 8000 + roomId,
    ...overrides,
  };
}

describe("room card", () => {
  it("shows every status field the server reported", () => {
    const html = renderRoomCard(cell(), undefined, undefined);
    expect(html).toContain("Room 101");
    expect(html).toContain("LOCKED");
    expect(html).toContain("OCCUPIED");
    expect(html).toContain("APPL ON");
    expect(html).toContain("26.0&deg;C");
    expect(html).toContain("40%");
    expect(html).toContain("1.0s old");
    expect(html).toContain('id="card-101"');
  });

  it("renders the vacant unlocked face of the same fields", () => {
    const html = renderRoomCard(
      cell({ status: status({ locked: false, occupied: false, appliance_on: false }) }),
      undefined,
      undefined,
    );
    expect(html).toContain("UNLOCKED");
    expect(html).toContain("VACANT");
    expect(html).toContain("APPL OFF");
    expect(html).not.toContain('class="card locked"');
  });

  it("prints n/a for a four-field emitter without humidity", () => {
    const html = renderRoomCard(cell({ status: status({ humidity: null }) }), undefined, undefined);
    expect(html).toContain("n/a");
    expect(html).not.toContain("null");
  });

  it("greys out after three missed polls and shows the count", () => {
    expect(renderRoomCard(cell({ missedPolls: 2 }), undefined, undefined)).not.toContain("stale");
    const html = renderRoomCard(cell({ missedPolls: 3 }), undefined, undefined);
    expect(html).toContain("stale");
    expect(html).toContain("3 missed");
  });

  it("disables every button and shows an indicator while a command is pending", () => {
    const html = renderRoomCard(cell(), { opcode: "LOCK" }, undefined);
    const buttons = html.match(/<button class="cmd"/g) ?? [];
    const disabled = html.match(/<button class="cmd"[^>]* disabled>/g) ?? [];
    expect(buttons).toHaveLength(6);
    expect(disabled).toHaveLength(6);
    expect(html).toContain("sending LOCK");
  });

  it("renders the registered-but-silent and first-poll placeholders", () => {
    expect(renderRoomCard(cell({ status: null, noDataYet: true }), undefined, undefined)).toContain(
      "no telemetry yet",
    );
    expect(renderRoomCard(cell({ status: null }), undefined, undefined)).toContain(
      "waiting for first poll",
    );
  });
});

describe("command outcomes", () => {
  it("shows OK verbatim", () => {
    const html = renderRoomCard(cell(), undefined, { opcode: "LOCK", status: "OK", note: "" });
    expect(html).toContain("LOCK: <b>OK</b>");
    expect(html).toContain('class="outcome ok"');
  });

  it("shows REFUSED_OCCUPIED verbatim plus the security note", () => {
    const html = renderRoomCard(cell(), undefined, {
      opcode: "LOCK",
      status: "REFUSED_OCCUPIED",
      note: "",
    });
    expect(html).toContain("REFUSED_OCCUPIED");
    expect(html).toContain(escapeHtml(REFUSED_NOTE));
    expect(html).toContain('class="outcome refused"');
  });

  it("keeps TIMEOUT and SESSION_DOWN distinct error outcomes", () => {
    const a = renderRoomCard(cell(), undefined, { opcode: "LOCK", status: "TIMEOUT", note: "" });
    const b = renderRoomCard(cell(), undefined, { opcode: "LOCK", status: "SESSION_DOWN", note: "" });
    expect(a).toContain("TIMEOUT");
    expect(b).toContain("SESSION_DOWN");
    expect(a).toContain('class="outcome error"');
    expect(b).toContain('class="outcome error"');
  });

  it("carries server error text through the note", () => {
    const html = renderRoomCard(cell(), undefined, {
      opcode: "LOCK",
      status: "ERROR",
      note: "room 999 not registered",
    });
    expect(html).toContain("room 999 not registered");
  });
});

describe("banners", () => {
  it("offline banner only when offline", () => {
    expect(renderOfflineBanner(true)).toBe("");
    expect(renderOfflineBanner(false)).toContain("server unreachable");
  });

  it("alarm banner names the room", () => {
    const html = renderAlarmBanner({
      seq: 9,
      roomId: 103,
      kind: "FIRE_ALARM",
      detail: "temp=55.0",
      t: 40000,
    });
    expect(html).toContain("FIRE_ALARM");
    expect(html).toContain("room 103");
    expect(html).toContain("temp=55.0");
    expect(html).toContain("dismiss");
  });

  it("estate-wide alarms render without a room number", () => {
    const html = renderAlarmBanner({ seq: 1, roomId: null, kind: "SWEEP_SKIPPED", detail: "", t: 0 });
    expect(html).toContain("estate");
    expect(renderAlarmBanner(null)).toBe("");
  });
});

describe("dashboard grid", () => {
  it("renders one card per registered room in id order", () => {
    const s = newState();
    applyRegistry(s, [row(202), row(101)]);
    applyStatus(s, 101, status());
    const html = renderDashboard(s);
    expect(html.indexOf("card-101")).toBeGreaterThan(-1);
    expect(html.indexOf("card-101")).toBeLessThan(html.indexOf("card-202"));
  });

  it("renders the empty estate", () => {
    expect(renderDashboard(newState())).toContain("no rooms registered");
  });
});

describe("admin table", () => {
  it("lists rows with edit and delete actions", () => {
    const html = renderAdminTable([row(101), row(102, { node: "router_b" })]);
    expect(html).toContain("<td>101</td>");
    expect(html).toContain("router_b");
    expect(html).toContain('data-act="edit" data-room="101"');
    expect(html).toContain('data-act="delete" data-room="102"');
  });

  it("escapes server-fed text", () => {
    const html = renderAdminTable([row(1, { node: '<img src=x onerror="x">' })]);
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img");
  });

  it("renders the empty registry", () => {
    expect(renderAdminTable([])).toContain("registry is empty");
  });
});

describe("sweep report", () => {
  const report: SweepReportDoc = {
    started_at: 50000,
    finished_at: 50010,
    reason: "manual",
    locked: [101, 105],
    notified: [102],
    failed: [{ room_id: 104, reason: "no_data" }],
  };

  it("labels the notified list occupied after hours", () => {
    const html = renderSweepReport(report, "");
    expect(html).toContain("occupied after hours");
    expect(html).toContain("101, 105");
    expect(html).toContain("102");
    expect(html).toContain("104 (no_data)");
    expect(html).toContain("manual");
  });

  it("renders empty partitions as none", () => {
    const html = renderSweepReport({ ...report, locked: [], notified: [], failed: [] }, "");
    expect(html.match(/none/g)?.length).toBe(3);
  });

  it("prefers an error over a stale report", () => {
    const html = renderSweepReport(report, "sweep already running");
    expect(html).toContain("sweep already running");
    expect(html).not.toContain("occupied after hours");
  });

  it("renders nothing before the first sweep", () => {
    expect(renderSweepReport(null, "")).toBe("");
  });
});

describe("event feed", () => {
  function ev(seq: number, overrides: Partial<ServerEvent> = {}): ServerEvent {
    return {
      seq,
      t: seq,
      category: "audit",
      kind: "COMMAND_SENT",
      room_id: 101,
      detail: `opcode=LOCK request_id=${seq} origin=api`,
      ...overrides,
    };
  }

  it("shows newest first and respects the display limit", () => {
    const html = renderFeed([ev(1), ev(2), ev(3)], 2);
    expect(html).not.toContain("request_id=1 ");
    expect(html.indexOf("request_id=3")).toBeLessThan(html.indexOf("request_id=2"));
  });

  it("renders estate-level events with a dash room", () => {
    const html = renderFeed([ev(1, { room_id: null, kind: "SWEEP_FINISHED" })]);
    expect(html).toContain('<span class="room">-</span>');
  });

  it("escapes detail text", () => {
    const html = renderFeed([ev(1, { detail: "<script>alert(1)</script>" })]);
    expect(html).not.toContain("<script>");
  });
});

describe("render purity", () => {
  it("identical inputs produce byte-identical markup", () => {
    const s = newState();
    applyRegistry(s, [row(101), row(102)]);
    applyStatus(s, 101, status());
    applyEvents(s, [
      {
        seq: 1,
        t: 1000,
        category: "alarm",
        kind: "FIRE_ALARM",
        room_id: 101,
        detail: "temp=55.0",
      },
    ]);
    expect(renderDashboard(s)).toBe(renderDashboard(s));
    expect(renderAlarmBanner(s.alarm)).toBe(renderAlarmBanner(s.alarm));
    expect(renderFeed(s.feed)).toBe(renderFeed(s.feed));
  });
});
