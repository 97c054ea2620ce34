/** DOM wiring: station panels, bed meter, and the drifting token wall. */

import { WallClient } from "./api.js";
import { WallAudio } from "./audio.js";
import { WallStore, WallViewModel } from "./store.js";
import { EventMessage, STATION_COUNT } from "./types.js";

const BASE_URL = (window as unknown as { LOOPWALL_URL?: string })
  .LOOPWALL_URL ?? "";

const SAMPLE_RATE = 44100;
const SAMPLES_PER_MEASURE = 84000;

function el(tag: string, cls: string, parent: Element): HTMLElement {
  const node = document.createElement(tag);
  node.className = cls;
  parent.appendChild(node);
  return node;
}

function tokenColor(station: number): string {
  const hues = [14, 45, 110, 180, 260, 310];
  return `hsl(${hues[(station - 1) % 6]}, 70%, 55%)`;
}

export function boot(root: Element): void {
  const store = new WallStore();
  const client = new WallClient(BASE_URL);
  let audio: WallAudio | null = null;

  const header = el("header", "header", root);
  const status = el("span", "status", header);
  const measureLabel = el("span", "measure", header);
  const soundButton = el("button", "sound", header) as HTMLButtonElement;
  soundButton.textContent = "enable sound";

  const meter = el("div", "bed-meter", root);
  const lamps: HTMLElement[] = [];
  for (let bed = 1; bed <= 6; bed++) {
    const lamp = el("span", "lamp", meter);
    lamp.title = `BED0${bed}`;
    lamps.push(lamp);
  }

  const wall = el("div", "wall", root);
  const panels = el("div", "panels", root);
  const messageLabels: HTMLElement[] = [];
  for (let station = 1; station <= STATION_COUNT; station++) {
    const panel = el("div", "panel", panels);
    const button = el("button", "launch", panel) as HTMLButtonElement;
    button.textContent = `Station ${station}: launch`;
    const message = el("div", "message", panel);
    messageLabels.push(message);
    button.addEventListener("click", async () => {
      try {
        store.applyOutcome(await client.launch(station));
      } catch {
        store.setConnected(false);
      }
    });
  }

  soundButton.addEventListener("click", () => {
    if (audio) return;
    audio = new WallAudio(BASE_URL, SAMPLE_RATE, SAMPLES_PER_MEASURE);
    soundButton.textContent = "sound on";
    soundButton.disabled = true;
  });

  function render(vm: WallViewModel): void {
    status.textContent = vm.connected ? "live" : "reconnecting…";
    status.classList.toggle("down", !vm.connected);
    measureLabel.textContent = `measure ${vm.measure}`;
    vm.bedMeter.forEach((on, i) => lamps[i].classList.toggle("on", on));
    vm.stationMessages.forEach((msg, i) => {
      messageLabels[i].textContent = msg ?? "";
    });
    wall.replaceChildren();
    for (const token of vm.tokens) {
      const node = el("div", "token", wall);
      node.classList.toggle("pending", !token.active);
      node.style.background = tokenColor(token.station);
      node.style.setProperty("--drift", `${(token.station * 7 + token.slot * 3) % 11}s`);
      node.textContent = token.loopId;
      node.title = `station ${token.station}, slot ${token.slot}`;
    }
  }

  store.subscribe(render);
  render(store.view());

  let pendingBoundary: EventMessage[] = [];
  client.stream({
    onConnection: (up) => store.setConnected(up),
    onMessage: (msg) => {
      if (msg.kind === "tick" && typeof msg.at_sample === "number") {
        audio?.onTick(msg.at_sample);
        if (pendingBoundary.length) {
          audio?.handleBoundary(pendingBoundary);
          pendingBoundary = [];
        }
      } else if (msg.kind !== "snapshot") {
        pendingBoundary.push(msg);
        if (msg.kind === "BellStrike" && msg.loop_id) {
          void audio?.prefetch(msg.loop_id);
        }
      }
      store.applyMessage(msg);
    },
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app")!);
}
