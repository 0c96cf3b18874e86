/** Console view model and its transitions.
 *
 * Everything here is synchronous and DOM-free: the poll loops feed
 * fetched payloads in, the renderers read the result out.  No field is
 * ever invented client-side; a card can only show what the server last
 * answered.
 */

import type {
  CommandOutcome,
  OpcodeName,
  RegistryRow,
  RoomStatus,
  ServerEvent,
} from "./types.js";

/** Consecutive missed polls before a card greys out. */
export const STALE_AFTER_MISSES = 3;

/** How many events the feed keeps around for display. */
const FEED_CAP = 200;

export interface RoomCell {
  roomId: number;
  status: RoomStatus | null;
  missedPolls: number;
  noDataYet: boolean;
}

export interface PendingCommand {
  opcode: OpcodeName;
}

export interface AlarmNotice {
  seq: number;
  roomId: number | null;
  kind: string;
  detail: string;
  t: number;
}

export interface OutcomeRecord extends CommandOutcome {
  opcode: OpcodeName;
}

export interface ConsoleState {
  registry: RegistryRow[];
  cells: Map<number, RoomCell>;
  pending: Map<number, PendingCommand>;
  outcomes: Map<number, OutcomeRecord>;
  alarm: AlarmNotice | null;
  feed: ServerEvent[];
  eventsCursor: number;
  online: boolean;
}

export function newState(): ConsoleState {
  return {
    registry: [],
    cells: new Map(),
    pending: new Map(),
    outcomes: new Map(),
    alarm: null,
    feed: [],
    eventsCursor: 0,
    online: true,
  };
}

/** Reconcile with the served registry: new rooms get empty cells, and
 * rooms that vanished take their cell, pending mark, and outcome along. */
export function applyRegistry(state: ConsoleState, rows: RegistryRow[]): void {
  state.registry = [...rows].sort((a, b) => a.room_id - b.room_id);
  const live = new Set(state.registry.map((r) => r.room_id));
  for (const row of state.registry) {
    if (!state.cells.has(row.room_id)) {
      state.cells.set(row.room_id, {
        roomId: row.room_id,
        status: null,
        missedPolls: 0,
        noDataYet: false,
      });
    }
  }
  for (const id of [...state.cells.keys()]) {
    if (!live.has(id)) {
      state.cells.delete(id);
      state.pending.delete(id);
      state.outcomes.delete(id);
    }
  }
}

export function applyStatus(state: ConsoleState, roomId: number, status: RoomStatus): void {
  const cell = state.cells.get(roomId);
  if (!cell) return;
  cell.status = status;
  cell.missedPolls = 0;
  cell.noDataYet = false;
}

/** A 204: the room is registered but has not reported yet. The server
 * answered, so this is not a missed poll. */
export function applyNoData(state: ConsoleState, roomId: number): void {
  const cell = state.cells.get(roomId);
  if (!cell) return;
  cell.noDataYet = true;
  cell.missedPolls = 0;
}

export function applyMiss(state: ConsoleState, roomId: number): void {
  const cell = state.cells.get(roomId);
  if (!cell) return;
  cell.missedPolls += 1;
}

/** A whole-poll failure: the API is unreachable, every card takes a miss. */
export function applyOffline(state: ConsoleState): void {
  state.online = false;
  for (const cell of state.cells.values()) cell.missedPolls += 1;
}

export function applyOnline(state: ConsoleState): void {
  state.online = true;
}

export function isStale(cell: RoomCell): boolean {
  return cell.missedPolls >= STALE_AFTER_MISSES;
}

/** Start a command if the room has none in flight. At most one pending
 * command per room; a second request is refused, not queued. */
export function beginCommand(state: ConsoleState, roomId: number, opcode: OpcodeName): boolean {
  if (state.pending.has(roomId)) return false;
  state.pending.set(roomId, { opcode });
  state.outcomes.delete(roomId);
  return true;
}

export function settleCommand(
  state: ConsoleState,
  roomId: number,
  opcode: OpcodeName,
  outcome: CommandOutcome,
): void {
  state.pending.delete(roomId);
  state.outcomes.set(roomId, { opcode, ...outcome });
}

/** Fold a batch of events in: advance the cursor, append to the feed,
 * and surface the newest alarm-category event in the banner. */
export function applyEvents(state: ConsoleState, events: ServerEvent[]): void {
  for (const event of events) {
    if (event.seq > state.eventsCursor) state.eventsCursor = event.seq;
    state.feed.push(event);
    if (event.category === "alarm") {
      state.alarm = {
        seq: event.seq,
        roomId: event.room_id,
        kind: event.kind,
        detail: event.detail,
        t: event.t,
      };
    }
  }
  if (state.feed.length > FEED_CAP) {
    state.feed.splice(0, state.feed.length - FEED_CAP);
  }
}

export function dismissAlarm(state: ConsoleState): void {
  state.alarm = null;
}
