/** HTML renderers for the console.
 *
 * Every function here is a pure string builder over the view model; no
 * clocks, no globals, no DOM reads.  The app layer owns where the
 * strings land.  All server-originated text goes through escapeHtml.
 */

import type { RegistryRow, ServerEvent, SweepReportDoc } from "./types.js";
import type { AlarmNotice, ConsoleState, OutcomeRecord, PendingCommand, RoomCell } from "./state.js";
import { isStale } from "./state.js";

// Operator guidance mandated for refused locks.
export const REFUSED_NOTE = "refused: occupied — send security to check";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function chip(label: string, kind: string): string {
  return `<span class="chip ${kind}">${label}</span>`;
}

export function renderOfflineBanner(online: boolean): string {
  if (online) return "";
  return `<div class="banner offline">server unreachable, polling paused until it answers</div>`;
}

export function renderAlarmBanner(alarm: AlarmNotice | null): string {
  if (!alarm) return "";
  const room = alarm.roomId === null ? "estate" : `room ${alarm.roomId}`;
  return (
    `<div class="banner alarm">` +
    `<strong>${escapeHtml(alarm.kind)}</strong> ${escapeHtml(room)}` +
    `<span class="detail">${escapeHtml(alarm.detail)}</span>` +
    `<button class="dismiss" data-act="dismiss-alarm">dismiss</button>` +
    `</div>`
  );
}

function renderOutcome(outcome: OutcomeRecord | undefined): string {
  if (!outcome) return "";
  const cls =
    outcome.status === "OK" ? "ok" : outcome.status === "REFUSED_OCCUPIED" ? "refused" : "error";
  let line =
    `<div class="outcome ${cls}">` +
    `${escapeHtml(outcome.opcode)}: <b>${escapeHtml(outcome.status)}</b>`;
  if (outcome.status === "REFUSED_OCCUPIED") {
    line += `<span class="note">${escapeHtml(REFUSED_NOTE)}</span>`;
  } else if (outcome.note) {
    line += `<span class="note">${escapeHtml(outcome.note)}</span>`;
  }
  return line + `</div>`;
}

function commandButtons(roomId: number, pending: PendingCommand | undefined): string {
  const groups: [string, string][] = [
    ["LOCK", "Lock"],
    ["UNLOCK", "Unlock"],
    ["APPLIANCE_ON", "Appl on"],
    ["APPLIANCE_OFF", "Appl off"],
    ["BUZZER_ON", "Buzz on"],
    ["BUZZER_OFF", "Buzz off"],
  ];
  const disabled = pending ? " disabled" : "";
  const buttons = groups
    .map(
      ([op, label]) =>
        `<button class="cmd" data-room="${roomId}" data-op="${op}"${disabled}>${label}</button>`,
    )
    .join("");
  const spinner = pending
    ? `<span class="pending">sending ${escapeHtml(pending.opcode)}&hellip;</span>`
    : "";
  return `<div class="commands">${buttons}${spinner}</div>`;
}

export function renderRoomCard(
  cell: RoomCell,
  pending: PendingCommand | undefined,
  outcome: OutcomeRecord | undefined,
): string {
  const classes = ["card"];
  if (isStale(cell)) classes.push("stale");
  const s = cell.status;
  if (s?.locked) classes.push("locked");

  let body: string;
  if (s) {
    const humidity = s.humidity === null ? "n/a" : `${s.humidity}%`;
    body =
      `<div class="chips">` +
      chip(s.locked ? "LOCKED" : "UNLOCKED", s.locked ? "lock" : "unlock") +
      chip(s.occupied ? "OCCUPIED" : "VACANT", s.occupied ? "occ" : "vac") +
      chip(s.appliance_on ? "APPL ON" : "APPL OFF", s.appliance_on ? "on" : "off") +
      `</div>` +
      `<div class="readings">` +
      `<span class="temp">${s.temperature.toFixed(1)}&deg;C</span>` +
      `<span class="hum">${humidity}</span>` +
      `<span class="age">${(s.staleness_ms / 1000).toFixed(1)}s old</span>` +
      `</div>`;
  } else if (cell.noDataYet) {
    body = `<div class="nodata">registered, no telemetry yet</div>`;
  } else {
    body = `<div class="nodata">waiting for first poll</div>`;
  }

  const missed = cell.missedPolls > 0 ? `<span class="missed">${cell.missedPolls} missed</span>` : "";
  return (
    `<article class="${classes.join(" ")}" id="card-${cell.roomId}">` +
    `<header><h3>Room ${cell.roomId}</h3>${missed}</header>` +
    body +
    commandButtons(cell.roomId, pending) +
    renderOutcome(outcome) +
    `</article>`
  );
}

export function renderDashboard(state: ConsoleState): string {
  if (state.registry.length === 0) {
    return `<div class="empty">no rooms registered</div>`;
  }
  return state.registry
    .map((row) => {
      const cell = state.cells.get(row.room_id);
      if (!cell) return "";
      return renderRoomCard(cell, state.pending.get(row.room_id), state.outcomes.get(row.room_id));
    })
    .join("");
}

export function renderAdminTable(rows: RegistryRow[]): string {
  if (rows.length === 0) {
    return `<div class="empty">registry is empty</div>`;
  }
  const body = rows
    .map(
      (r) =>
        `<tr>` +
        `<td>${r.room_id}</td>` +
        `<td>${escapeHtml(r.node)}</td>` +
        `<td>${r.port}</td>` +
        `<td>${r.session_id}</td>` +
        `<td>${r.device_port}</td>` +
        `<td>` +
        `<button data-act="edit" data-room="${r.room_id}">edit</button>` +
        `<button data-act="delete" data-room="${r.room_id}">delete</button>` +
        `</td>` +
        `</tr>`,
    )
    .join("");
  return (
    `<table><thead><tr>` +
    `<th>room</th><th>node</th><th>port</th><th>session</th><th>device port</th><th></th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

function idList(ids: number[]): string {
  return ids.length ? ids.join(", ") : "none";
}

export function renderSweepReport(report: SweepReportDoc | null, error: string): string {
  if (error) return `<div class="sweep-error">${escapeHtml(error)}</div>`;
  if (!report) return "";
  const failed = report.failed.length
    ? report.failed.map((f) => `${f.room_id} (${escapeHtml(f.reason)})`).join(", ")
    : "none";
  return (
    `<dl class="sweep">` +
    `<dt>sweep</dt><dd>${escapeHtml(report.reason)}, t=${report.started_at}..${report.finished_at ?? "?"}</dd>` +
    `<dt>locked</dt><dd>${idList(report.locked)}</dd>` +
    `<dt>occupied after hours</dt><dd>${idList(report.notified)}</dd>` +
    `<dt>failed</dt><dd>${failed}</dd>` +
    `</dl>`
  );
}

export function renderFeed(events: ServerEvent[], limit = 12): string {
  if (events.length === 0) return `<div class="empty">no events yet</div>`;
  return events
    .slice(-limit)
    .reverse()
    .map(
      (e) =>
        `<div class="ev">` +
        `<span class="t">${e.t}</span>` +
        `<span class="cat ${e.category}">${e.category}</span>` +
        `<span class="kind">${escapeHtml(e.kind)}</span>` +
        `<span class="room">${e.room_id ?? "-"}</span>` +
        `<span class="detail">${escapeHtml(e.detail)}</span>` +
        `</div>`,
    )
    .join("");
}
