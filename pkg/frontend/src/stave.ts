/**
 * Stave view model: the scrolling bar strip, tempo indicator, fermata
 * banner, and end screen, all computed purely from server messages.
 * Rendering binds this state to DOM elsewhere; tests assert on the
 * state itself.
 */

import { EndSummaryMessage, StateMessage } from "./protocol.js";

export interface ScoreInfo {
  barCount: number;
  /** seconds on the original timeline, one per bar */
  barDurations: number[];
  fermataBars: number[];
}

export interface BarCell {
  bar: number;
  fermata: boolean;
  /** horizontal offset in bar-widths relative to the playhead marker */
  offset: number;
  current: boolean;
}

export interface StaveViewState {
  bar: number;
  /** fraction of the current bar already played, in [0, 1) */
  barProgress: number;
  /** numeric tempo indicator: percent of the original tempo */
  tempoPercent: number | null;
  fermataBanner: boolean;
  halted: boolean;
  beatFlash: "" | "upbeat" | "downbeat";
  cells: BarCell[];
}

export interface EndScreenState {
  originalDuration: number;
  conductedDuration: number | null;
  pctDifference: number | null;
  finished: boolean;
}

export function initialView(score: ScoreInfo, window = 8): StaveViewState {
  return {
    bar: 0,
    barProgress: 0,
    tempoPercent: null,
    fermataBanner: false,
    halted: false,
    beatFlash: "",
    cells: cellsAround(score, 0, 0, window),
  };
}

function cellsAround(
  score: ScoreInfo,
  bar: number,
  barProgress: number,
  window: number,
): BarCell[] {
  const cells: BarCell[] = [];
  const first = Math.max(0, bar - 1);
  const last = Math.min(score.barCount - 1, bar + window);
  for (let b = first; b <= last; b++) {
    cells.push({
      bar: b,
      fermata: score.fermataBars.includes(b),
      offset: b - bar - barProgress,
      current: b === bar,
    });
  }
  return cells;
}

/**
 * Fold one state message into the view. The displayed bar is always
 * the message's bar; progress comes from the playhead against the
 * score's cumulative bar boundaries.
 */
export function applyState(
  score: ScoreInfo,
  message: StateMessage,
  window = 8,
): StaveViewState {
  let start = 0;
  for (let b = 0; b < message.bar; b++) start += score.barDurations[b];
  const duration = score.barDurations[message.bar] ?? 1;
  const progress = Math.min(Math.max((message.playhead - start) / duration, 0), 0.999999);
  return {
    bar: message.bar,
    barProgress: progress,
    tempoPercent: message.ps > 0 ? 100 / message.ps : null,
    fermataBanner: message.fermata,
    halted: message.halted,
    beatFlash: (message.beat as "" | "upbeat" | "downbeat") ?? "",
    cells: cellsAround(score, message.bar, progress, window),
  };
}

/** End screen fields come from the server verbatim; nothing recomputed. */
export function endScreen(message: EndSummaryMessage): EndScreenState {
  return {
    originalDuration: message.original_duration,
    conductedDuration: message.conducted_duration,
    pctDifference: message.pct_difference,
    finished: message.finished,
  };
}

export function formatEndScreen(state: EndScreenState): string[] {
  const lines = [`Original recording: ${state.originalDuration.toFixed(1)} s`];
  if (state.conductedDuration !== null) {
    lines.push(`Your performance: ${state.conductedDuration.toFixed(1)} s`);
  }
  if (state.pctDifference !== null) {
    const sign = state.pctDifference >= 0 ? "+" : "";
    lines.push(`Difference: ${sign}${state.pctDifference.toFixed(1)}%`);
  }
  return lines;
}
