/** Wire shapes exchanged with the session service.
 *
 * The UI never computes scheduling rules itself; everything here mirrors
 * the JSON documents the service already emits, and the view model in
 * store.ts is a pure projection of them.
 */

export interface CollageDoc {
  station: number;
  slot: number;
  loop_id: string;
  request_sample: number;
  announce_measure: number;
  start_measure: number;
  end_measure: number;
  remaining_measures: number;
  timbre: string;
}

/** GET /state — the authoritative snapshot. */
export interface StateDoc {
  current_sample: number;
  measure: number;
  lifetime_measures: number;
  fade_measures: number;
  bed_active: number[];
  collages: CollageDoc[];
}

/** One SSE payload: a boundary event, a tick heartbeat, or the opening snapshot. */
export interface EventMessage {
  kind: string;
  at_sample?: number;
  measure?: number;
  station?: number;
  slot?: number;
  loop_id?: string;
  bed?: number;
  fade_measures?: number;
  // snapshot messages carry the StateDoc fields inline
  current_sample?: number;
  bed_active?: number[];
  collages?: CollageDoc[];
  lifetime_measures?: number;
}

/** POST /launch response. */
export interface LaunchOutcome {
  accepted: boolean;
  station: number;
  reason?: string;
  slot?: number;
  loop_id?: string;
  announce_measure?: number;
  start_measure?: number;
  end_measure?: number;
  bell_note?: number;
}

export const BED_COUNT = 6;
export const STATION_COUNT = 6;

export function isStateDoc(x: unknown): x is StateDoc {
  const d = x as StateDoc;
  return (
    typeof d === "object" &&
    d !== null &&
    typeof d.current_sample === "number" &&
    Array.isArray(d.bed_active) &&
    Array.isArray(d.collages)
  );
}

export function isEventMessage(x: unknown): x is EventMessage {
  const d = x as EventMessage;
  return typeof d === "object" && d !== null && typeof d.kind === "string";
}
