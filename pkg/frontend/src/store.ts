/** Pure projection of service messages into what the wall renders.
 *
 * The store holds no rules of its own: tokens appear and disappear on the
 * service's boundary events, the bed meter follows fade events, and every
 * snapshot (connect, reconnect, or explicit poll) overwrites the lot.
 * Rejected launches surface as per-station operator messages and never
 * create a token.
 */

import {
  BED_COUNT,
  CollageDoc,
  EventMessage,
  LaunchOutcome,
  StateDoc,
  STATION_COUNT,
  isEventMessage,
  isStateDoc,
} from "./types.js";

export interface Token {
  station: number;
  slot: number;
  loopId: string;
  timbre: string | null;
  startMeasure: number;
  endMeasure: number;
  /** false between the bell announcement and the collage's first boundary. */
  active: boolean;
}

export interface WallViewModel {
  measure: number;
  /** index 0 = BED01 ... index 5 = BED06 */
  bedMeter: boolean[];
  tokens: Token[];
  /** latest operator message per station, index 0 = station 1 */
  stationMessages: (string | null)[];
  connected: boolean;
  droppedMessages: number;
}

function tokenKey(station: number, slot: number): string {
  return `${station}/${slot}`;
}

function tokenFromDoc(doc: CollageDoc): Token {
  return {
    station: doc.station,
    slot: doc.slot,
    loopId: doc.loop_id,
    timbre: doc.timbre ?? null,
    startMeasure: doc.start_measure,
    endMeasure: doc.end_measure,
    active: doc.start_measure <= 0, // fixed up by applySnapshot
  };
}

export class WallStore {
  private measure = 0;
  private bedActive: Set<number> = new Set([1, 2, 3, 4, 5, 6]);
  private tokens: Map<string, Token> = new Map();
  private messages: (string | null)[] = new Array(STATION_COUNT).fill(null);
  private connected = false;
  private dropped = 0;
  private listeners: Array<(vm: WallViewModel) => void> = [];

  subscribe(fn: (vm: WallViewModel) => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((f) => f !== fn);
    };
  }

  private notify(): void {
    const vm = this.view();
    for (const fn of this.listeners) fn(vm);
  }

  view(): WallViewModel {
    const meter: boolean[] = [];
    for (let bed = 1; bed <= BED_COUNT; bed++) {
      meter.push(this.bedActive.has(bed));
    }
    const tokens = [...this.tokens.values()].sort(
      (a, b) => a.station - b.station || a.slot - b.slot,
    );
    return {
      measure: this.measure,
      bedMeter: meter,
      tokens,
      stationMessages: [...this.messages],
      connected: this.connected,
      droppedMessages: this.dropped,
    };
  }

  setConnected(up: boolean): void {
    this.connected = up;
    this.notify();
  }

  /** Authoritative reconciliation: the snapshot wins over anything replayed. */
  applySnapshot(snap: StateDoc): void {
    if (!isStateDoc(snap)) {
      this.dropped += 1;
      return;
    }
    this.measure = snap.measure;
    this.bedActive = new Set(snap.bed_active);
    this.tokens = new Map();
    for (const doc of snap.collages) {
      const token = tokenFromDoc(doc);
      token.active = doc.start_measure <= snap.measure;
      this.tokens.set(tokenKey(doc.station, doc.slot), token);
    }
    this.notify();
  }

  /** One SSE payload; malformed input is counted and skipped, never thrown. */
  applyMessage(raw: unknown): void {
    if (!isEventMessage(raw)) {
      this.dropped += 1;
      return;
    }
    const msg = raw as EventMessage;
    switch (msg.kind) {
      case "snapshot":
        this.applySnapshot(msg as unknown as StateDoc);
        return;
      case "tick":
        if (typeof msg.measure === "number") {
          this.measure = msg.measure;
          this.notify();
        }
        return;
      case "BellStrike":
        this.onAnnounce(msg);
        return;
      case "TollStart":
        return; // audible only; the bell already placed the pending token
      case "CollageStart":
        this.onStart(msg);
        return;
      case "CollageEnd":
        this.onEnd(msg);
        return;
      case "BedFadeOut":
        if (typeof msg.bed === "number") {
          this.bedActive.delete(msg.bed);
          this.notify();
        }
        return;
      case "BedFadeIn":
        if (typeof msg.bed === "number") {
          this.bedActive.add(msg.bed);
          this.notify();
        }
        return;
      default:
        this.dropped += 1;
    }
  }

  /** POST /launch response for the station panel that asked. */
  applyOutcome(outcome: LaunchOutcome): void {
    const station = outcome.station;
    if (!Number.isInteger(station) || station < 1 || station > STATION_COUNT) {
      this.dropped += 1;
      return;
    }
    if (!outcome.accepted) {
      this.messages[station - 1] = outcome.reason ?? "Rejected";
      this.notify();
      return;
    }
    this.messages[station - 1] =
      `Launching at measure ${outcome.announce_measure}`;
    const key = tokenKey(station, outcome.slot!);
    if (!this.tokens.has(key)) {
      this.tokens.set(key, {
        station,
        slot: outcome.slot!,
        loopId: outcome.loop_id!,
        timbre: null,
        startMeasure: outcome.start_measure!,
        endMeasure: outcome.end_measure!,
        active: false,
      });
    }
    this.notify();
  }

  private onAnnounce(msg: EventMessage): void {
    if (typeof msg.station !== "number" || typeof msg.slot !== "number") {
      this.dropped += 1;
      return;
    }
    const key = tokenKey(msg.station, msg.slot);
    if (!this.tokens.has(key)) {
      this.tokens.set(key, {
        station: msg.station,
        slot: msg.slot,
        loopId: msg.loop_id ?? "",
        timbre: null,
        startMeasure: (msg.measure ?? 0) + 1,
        endMeasure: -1, // learned from the next snapshot
        active: false,
      });
    }
    this.notify();
  }

  private onStart(msg: EventMessage): void {
    if (typeof msg.station !== "number" || typeof msg.slot !== "number") {
      this.dropped += 1;
      return;
    }
    const token = this.tokens.get(tokenKey(msg.station, msg.slot));
    if (token) {
      token.active = true;
      if (msg.loop_id) token.loopId = msg.loop_id;
    }
    this.notify();
  }

  private onEnd(msg: EventMessage): void {
    if (typeof msg.station !== "number" || typeof msg.slot !== "number") {
      this.dropped += 1;
      return;
    }
    this.tokens.delete(tokenKey(msg.station, msg.slot));
    this.notify();
  }
}
