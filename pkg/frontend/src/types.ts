/** Payload shapes as the estate server emits them, field for field. */

export interface RegistryRow {
  room_id: number;
  node: string;
  port: number;
  session_id: number;
  device_port: number;
}

/** GET /rooms/{id}/status body. `humidity` is null for four-field emitters. */
export interface RoomStatus {
  room_id: number;
  occupied: boolean;
  locked: boolean;
  appliance_on: boolean;
  temperature: number;
  humidity: number | null;
  last_seen: number;
  staleness_ms: number;
}

export interface ServerEvent {
  seq: number;
  t: number;
  category: "audit" | "alarm" | "info";
  kind: string;
  room_id: number | null;
  detail: string;
}

export interface SweepReportDoc {
  started_at: number;
  finished_at: number | null;
  reason: string;
  locked: number[];
  notified: number[];
  failed: { room_id: number; reason: string }[];
}

export type OpcodeName =
  | "LOCK"
  | "UNLOCK"
  | "APPLIANCE_ON"
  | "APPLIANCE_OFF"
  | "BUZZER_ON"
  | "BUZZER_OFF";

export const OPCODES: readonly OpcodeName[] = [
  "LOCK",
  "UNLOCK",
  "APPLIANCE_ON",
  "APPLIANCE_OFF",
  "BUZZER_ON",
  "BUZZER_OFF",
];

/** Settled result of one command POST, status string kept verbatim. */
export interface CommandOutcome {
  status: string;
  note: string;
}
