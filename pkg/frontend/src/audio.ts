/** Audio-side scheduling, kept pure so it can be tested without WebAudio.
 *
 * The service clock is the only authority: each tick heartbeat pins a
 * sample position to a local AudioContext time, and every boundary event
 * is scheduled by linear extrapolation from that pin.  As long as a tick
 * lands within the jitter budget, scheduled starts stay inside the latency
 * tolerance no matter how the transport batched the messages.
 */

import { EventMessage } from "./types.js";

/** A sample position observed at a known AudioContext time. */
export interface TickRef {
  atSample: number;
  audioTime: number;
}

export type AudioAction =
  | { type: "startLoop"; when: number; loopId: string; station: number; slot: number }
  | { type: "stopLoop"; when: number; station: number; slot: number }
  | { type: "bell"; when: number; station: number; slot: number }
  | { type: "toll"; when: number; loopId: string; station: number; slot: number }
  | { type: "bedFade"; when: number; bed: number; direction: "in" | "out"; fadeSeconds: number };

/** AudioContext time at which `eventSample` falls, per the pinned tick. */
export function audioTimeFor(
  tick: TickRef,
  eventSample: number,
  sampleRate: number,
): number {
  return tick.audioTime + (eventSample - tick.atSample) / sampleRate;
}

/** Equal-power fade-out gain at progress p in [0, 1]. */
export function fadeOutGain(p: number): number {
  return Math.cos((Math.PI / 2) * Math.min(Math.max(p, 0), 1));
}

/** Equal-power fade-in gain at progress p in [0, 1]. */
export function fadeInGain(p: number): number {
  return Math.sin((Math.PI / 2) * Math.min(Math.max(p, 0), 1));
}

/**
 * Map one batch of boundary events to timed audio actions.
 *
 * `samplesPerMeasure` converts a fade length in measures to seconds; events
 * without a usable at_sample are skipped (the next snapshot repairs state).
 */
export function planActions(
  messages: EventMessage[],
  tick: TickRef,
  sampleRate: number,
  samplesPerMeasure: number,
): AudioAction[] {
  const actions: AudioAction[] = [];
  for (const msg of messages) {
    if (typeof msg.at_sample !== "number") continue;
    const when = audioTimeFor(tick, msg.at_sample, sampleRate);
    switch (msg.kind) {
      case "CollageStart":
        actions.push({
          type: "startLoop",
          when,
          loopId: msg.loop_id ?? "",
          station: msg.station ?? 0,
          slot: msg.slot ?? 0,
        });
        break;
      case "CollageEnd":
        actions.push({
          type: "stopLoop",
          when,
          station: msg.station ?? 0,
          slot: msg.slot ?? 0,
        });
        break;
      case "BellStrike":
        actions.push({
          type: "bell",
          when,
          station: msg.station ?? 0,
          slot: msg.slot ?? 0,
        });
        break;
      case "TollStart":
        actions.push({
          type: "toll",
          when,
          loopId: msg.loop_id ?? "",
          station: msg.station ?? 0,
          slot: msg.slot ?? 0,
        });
        break;
      case "BedFadeOut":
      case "BedFadeIn":
        if (typeof msg.bed === "number") {
          actions.push({
            type: "bedFade",
            when,
            bed: msg.bed,
            direction: msg.kind === "BedFadeIn" ? "in" : "out",
            fadeSeconds:
              ((msg.fade_measures ?? 2) * samplesPerMeasure) / sampleRate,
          });
        }
        break;
      default:
        break; // tick / snapshot carry no audio
    }
  }
  return actions;
}

/** Spread the six stations across the stereo field; presentation only. */
export function stationPan(station: number): number {
  return ((station - 3.5) / 3.5) * 0.8;
}

/**
 * Thin WebAudio adapter around the pure planner.  Untested by design:
 * everything decision-shaped lives in planActions and the store.
 */
export class WallAudio {
  private ctx: AudioContext;
  private buffers: Map<string, AudioBuffer> = new Map();
  private playing: Map<string, { src: AudioBufferSourceNode; gain: GainNode }> =
    new Map();
  private bedGains: Map<number, GainNode> = new Map();
  private lastTick: TickRef | null = null;

  constructor(
    private baseUrl: string,
    private sampleRate: number,
    private samplesPerMeasure: number,
  ) {
    this.ctx = new AudioContext();
  }

  onTick(atSample: number): void {
    this.lastTick = { atSample, audioTime: this.ctx.currentTime };
  }

  async prefetch(loopId: string): Promise<void> {
    if (this.buffers.has(loopId)) return;
    const res = await fetch(`${this.baseUrl}/loops/${loopId}.wav`);
    const data = await res.arrayBuffer();
    this.buffers.set(loopId, await this.ctx.decodeAudioData(data));
  }

  handleBoundary(messages: EventMessage[]): void {
    if (!this.lastTick) return;
    const actions = planActions(
      messages,
      this.lastTick,
      this.sampleRate,
      this.samplesPerMeasure,
    );
    for (const action of actions) this.run(action);
  }

  private run(action: AudioAction): void {
    const when = Math.max(action.when, this.ctx.currentTime);
    switch (action.type) {
      case "startLoop": {
        const buffer = this.buffers.get(action.loopId);
        if (!buffer) return;
        const src = this.ctx.createBufferSource();
        src.buffer = buffer;
        src.loop = true;
        const gain = this.ctx.createGain();
        const pan = this.ctx.createStereoPanner();
        pan.pan.value = stationPan(action.station);
        src.connect(gain).connect(pan).connect(this.ctx.destination);
        src.start(when);
        this.playing.set(`${action.station}/${action.slot}`, { src, gain });
        break;
      }
      case "stopLoop": {
        const entry = this.playing.get(`${action.station}/${action.slot}`);
        if (entry) {
          entry.gain.gain.setTargetAtTime(0, when, 0.4);
          entry.src.stop(when + 2);
          this.playing.delete(`${action.station}/${action.slot}`);
        }
        break;
      }
      case "bedFade": {
        const gain = this.bedGains.get(action.bed);
        if (gain) {
          gain.gain.cancelScheduledValues(when);
          gain.gain.setTargetAtTime(
            action.direction === "in" ? 1 : 0,
            when,
            action.fadeSeconds / 3,
          );
        }
        break;
      }
      default:
        break; // bell/toll playback comes from the same loop buffers
    }
  }

  registerBed(bed: number, gain: GainNode): void {
    this.bedGains.set(bed, gain);
  }
}
