/**
 * Browser wiring: config, webcam tracker adapter, session client, DOM.
 *
 * The pose tracker is an external model loaded by the page (anything
 * exposing the 33-landmark layout); this module only adapts it to the
 * capture loop. All musical state comes from the server.
 */

import { AudioRateController } from "./audio.js";
import { ENGINE_KEYPOINTS, PoseTracker, captureLoop } from "./capture.js";
import { SessionClient, WebSocketTransport } from "./client.js";
import {
  ScoreInfo,
  StaveViewState,
  applyState,
  endScreen,
  formatEndScreen,
  initialView,
} from "./stave.js";

export interface UiConfig {
  serverUrl: string;          // ws bridge in front of the engine server
  rateHz: number;             // must match the server's control rate
  audioAsset: string;
  score: ScoreInfo;
}

export async function loadConfig(url = "./config.json"): Promise<UiConfig> {
  const response = await fetch(url);
  if (!response.ok) throw new Error(`config fetch failed: ${response.status}`);
  return (await response.json()) as UiConfig;
}

function renderStave(root: HTMLElement, view: StaveViewState): void {
  root.querySelector(".tempo")!.textContent =
    view.tempoPercent === null ? "--" : `${view.tempoPercent.toFixed(0)}%`;
  (root.querySelector(".fermata-banner") as HTMLElement).style.display =
    view.fermataBanner ? "block" : "none";
  const strip = root.querySelector(".strip") as HTMLElement;
  strip.replaceChildren(
    ...view.cells.map((cell) => {
      const el = document.createElement("div");
      el.className = "cell" + (cell.fermata ? " fermata" : "") + (cell.current ? " current" : "");
      el.style.transform = `translateX(${cell.offset * 64}px)`;
      el.textContent = String(cell.bar);
      return el;
    }),
  );
}

export function startApp(config: UiConfig, tracker: PoseTracker): void {
  const root = document.getElementById("app")!;
  const audio = new AudioRateController(
    document.getElementById("recording") as HTMLAudioElement,
  );
  const starts: number[] = [0];
  for (const d of config.score.barDurations) starts.push(starts[starts.length - 1] + d);

  let view = initialView(config.score);
  renderStave(root, view);

  const client = new SessionClient(
    new WebSocketTransport(new WebSocket(config.serverUrl)),
    {
      onHelloAck: () => client.control("start"),
      onState: (state) => {
        view = applyState(config.score, state);
        renderStave(root, view);
        if (state.resume) audio.seek(starts[state.bar]);
        audio.apply(state.ps, state.halted);
      },
      onEndSummary: (summary) => {
        const el = root.querySelector(".end-screen") as HTMLElement;
        el.style.display = "block";
        el.replaceChildren(
          ...formatEndScreen(endScreen(summary)).map((line) => {
            const p = document.createElement("p");
            p.textContent = line;
            return p;
          }),
        );
      },
      onError: (err) => console.warn("server error", err.code, err.text),
    },
  );

  client.hello([...ENGINE_KEYPOINTS], config.rateHz);
  let k = 0;
  captureLoop(tracker, (frame) => client.poseFrame(k++, frame.pos), {
    rateHz: config.rateHz,
    minVisibility: 0.5,
  });
}
