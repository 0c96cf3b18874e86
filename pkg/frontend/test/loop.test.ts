/** Console loop against a live server.
 *
 * Spawns `tunnelguard serve` on an ephemeral port and drives the same
 * api/state/render modules the browser runs, minus the DOM: dashboard
 * population, an occupied-room LOCK refusal, an admin add/delete round
 * trip, and the one-audit-line-per-action bookkeeping.  Needs the
 * Python package installed (`pip install -e .` at the repo root).
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import * as api from "../src/api.js";
import {
  applyNoData,
  applyRegistry,
  applyStatus,
  newState,
  type ConsoleState,
} from "../src/state.js";
import { renderDashboard } from "../src/render.js";

const SCENARIO = fileURLToPath(
  new URL("../../scenarios/replication_none_sniff.json", import.meta.url),
);

let proc: ChildProcess;
let base = "";
let scratch = "";
const realFetch = globalThis.fetch;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function startServer(): Promise<string> {
  scratch = mkdtempSync(join(tmpdir(), "console-loop-"));
  proc = spawn(
    "tunnelguard",
    ["serve", SCENARIO, "--bind", "127.0.0.1:0", "--fast", "--out", join(scratch, "logs")],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error(`server never came up:\n${buffer}`)), 20_000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const m = buffer.match(/serving .* on (http:\/\/[\d.]+:\d+)\//);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]!);
      }
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
    });
    proc.on("exit", (code) => reject(new Error(`server exited ${code}:\n${buffer}`)));
  });
}

/** One dashboard tick, exactly as the app layer does it. */
async function pollRound(state: ConsoleState): Promise<void> {
  const rows = await api.fetchRooms();
  applyRegistry(state, rows);
  await Promise.all(
    rows.map(async (row) => {
      const result = await api.fetchStatus(row.room_id);
      if (result.kind === "ok") applyStatus(state, row.room_id, result.status);
      else if (result.kind === "no_data") applyNoData(state, row.room_id);
    }),
  );
}

async function auditBaseline(): Promise<number> {
  const events = await api.pollEvents(0, 0);
  return events.reduce((highest, e) => Math.max(highest, e.seq), 0);
}

beforeAll(async () => {
  base = await startServer();
  // route the UI's relative fetches at the spawned server
  globalThis.fetch = ((input: RequestInfo | URL, init?: RequestInit) =>
    realFetch(new URL(String(input), base), init)) as typeof fetch;
  // let the scripted first minute (commands, sweep) race past in fast mode
  await sleep(2000);
}, 40_000);

afterAll(async () => {
  globalThis.fetch = realFetch;
  if (proc && proc.exitCode === null) {
    proc.kill("SIGTERM");
    await new Promise((resolve) => proc.on("exit", resolve));
  }
  if (scratch) rmSync(scratch, { recursive: true, force: true });
});

describe("console loop against a live server", () => {
  it("renders every registered room within two poll intervals", async () => {
    const state = newState();
    await pollRound(state);
    let html = renderDashboard(state);
    if (html.includes("waiting for first poll")) {
      await sleep(1000);
      await pollRound(state);
      html = renderDashboard(state);
    }
    expect(state.registry.length).toBeGreaterThanOrEqual(20);
    for (const row of state.registry) {
      expect(html).toContain(`id="card-${row.room_id}"`);
    }
    expect(html).not.toContain("waiting for first poll");
    expect(html).not.toContain("no rooms registered");
  }, 30_000);

  it("walks the UI loop: refused lock, admin round trip, one audit line per action", async () => {
    const state = newState();
    await pollRound(state);
    const baseline = await auditBaseline();

    // occupied room: the server must refuse and the card must say so
    const outcome = await api.postCommand(102, "LOCK");
    expect(outcome.status).toBe("REFUSED_OCCUPIED");

    // admin add: the new room appears on the dashboard as registered-but-silent
    const added = await api.addRoom({
      room_id: 999,
      node: "router_a",
      port: 0,
      session_id: 9999,
      device_port: 9999,
    });
    expect(added.ok).toBe(true);
    await pollRound(state);
    const withRoom = renderDashboard(state);
    expect(withRoom).toContain('id="card-999"');
    expect(withRoom).toContain("no telemetry yet");

    // admin delete: the card disappears again
    const removed = await api.deleteRoom(999);
    expect(removed.ok).toBe(true);
    await pollRound(state);
    expect(renderDashboard(state)).not.toContain('id="card-999"');

    // exactly one audit line per UI action, nothing else in the window
    const events = await api.pollEvents(baseline, 0);
    const audit = events.filter((e) => e.category === "audit");
    expect(audit.map((e) => [e.kind, e.room_id])).toEqual([
      ["COMMAND_SENT", 102],
      ["ROOM_ADDED", 999],
      ["ROOM_DELETED", 999],
    ]);
    expect(audit[0]?.detail).toContain("origin=api");
  }, 30_000);
});
