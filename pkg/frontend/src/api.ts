/** Fetch client for the estate server.
 *
 * HTTP statuses the UI must render come back as discriminated results,
 * never exceptions; only network-level failure throws, so callers can
 * flip the offline banner and skip further writes.
 */

import type {
  CommandOutcome,
  OpcodeName,
  RegistryRow,
  RoomStatus,
  ServerEvent,
  SweepReportDoc,
} from "./types.js";

export type StatusResult =
  | { kind: "ok"; status: RoomStatus }
  | { kind: "no_data" }
  | { kind: "gone" };

export type AdminResult =
  | { ok: true; row: RegistryRow }
  | { ok: false; error: string };

export type SweepResult =
  | { ok: true; report: SweepReportDoc }
  | { ok: false; error: string };

async function errorText(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") return body.error;
  } catch {
    /* non-JSON error body */
  }
  return `HTTP ${res.status}`;
}

export async function fetchRooms(): Promise<RegistryRow[]> {
  const res = await fetch("/rooms");
  if (!res.ok) throw new Error(`rooms listing failed: HTTP ${res.status}`);
  const body = await res.json();
  return body.rooms as RegistryRow[];
}

export async function fetchStatus(roomId: number): Promise<StatusResult> {
  const res = await fetch(`/rooms/${roomId}/status`);
  if (res.status === 204) return { kind: "no_data" };
  if (res.status === 404) return { kind: "gone" };
  if (!res.ok) throw new Error(`status failed: HTTP ${res.status}`);
  return { kind: "ok", status: (await res.json()) as RoomStatus };
}

export async function postCommand(
  roomId: number,
  opcode: OpcodeName,
): Promise<CommandOutcome> {
  const res = await fetch(`/rooms/${roomId}/command`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ opcode }),
  });
  let body: Record<string, unknown> = {};
  try {
    body = await res.json();
  } catch {
    /* empty or non-JSON body */
  }
  if (typeof body.status === "string") {
    return { status: body.status, note: "" };
  }
  // 400/404 replies carry {"error"} with no status field
  return { status: "ERROR", note: typeof body.error === "string" ? body.error : `HTTP ${res.status}` };
}

/** Long-poll for events with seq > since. Resolves [] on server timeout. */
export async function pollEvents(since: number, timeoutMs: number): Promise<ServerEvent[]> {
  const res = await fetch(`/events?since=${since}&timeout_ms=${timeoutMs}`, {
    signal: AbortSignal.timeout(timeoutMs + 10_000),
  });
  if (!res.ok) throw new Error(`events failed: HTTP ${res.status}`);
  const body = await res.json();
  return body.events as ServerEvent[];
}

export async function addRoom(row: RegistryRow): Promise<AdminResult> {
  const res = await fetch("/admin/rooms", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(row),
  });
  if (res.status === 201) return { ok: true, row: (await res.json()) as RegistryRow };
  return { ok: false, error: await errorText(res) };
}

export async function updateRoom(
  roomId: number,
  fields: Partial<Omit<RegistryRow, "room_id">>,
): Promise<AdminResult> {
  const res = await fetch(`/admin/rooms/${roomId}`, {
    method: "PUT",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(fields),
  });
  if (res.ok) return { ok: true, row: (await res.json()) as RegistryRow };
  return { ok: false, error: await errorText(res) };
}

export async function deleteRoom(roomId: number): Promise<{ ok: boolean; error: string }> {
  const res = await fetch(`/admin/rooms/${roomId}`, { method: "DELETE" });
  if (res.status === 204) return { ok: true, error: "" };
  return { ok: false, error: await errorText(res) };
}

export async function runSweep(): Promise<SweepResult> {
  const res = await fetch("/admin/sweep", { method: "POST" });
  if (res.ok) return { ok: true, report: (await res.json()) as SweepReportDoc };
  return { ok: false, error: await errorText(res) };
}
