/**
 * Variable-rate audio playback driven by server speed factors.
 *
 * The server's `s` is a duration stretch, so the element's playback
 * rate is 1/s; s = 0 (waiting, sleep, halted) pauses. Native pitch
 * preservation is enabled where the platform supports it; artifacts at
 * extreme rates are accepted.
 */

export interface AudioElementLike {
  playbackRate: number;
  currentTime: number;
  paused: boolean;
  play(): unknown;
  pause(): void;
  preservesPitch?: boolean;
}

export class AudioRateController {
  constructor(private element: AudioElementLike) {
    // harmless where unsupported; browsers that know the property keep
    // pitch constant across rate changes
    element.preservesPitch = true;
  }

  /** Apply one server state: stretch factor + halted flag. */
  apply(stretch: number, halted: boolean): void {
    if (halted || stretch <= 0) {
      if (!this.element.paused) this.element.pause();
      return;
    }
    this.element.playbackRate = 1 / stretch;
    if (this.element.paused) this.element.play();
  }

  /** Resume jumps land exactly on a bar line; seek the audio there. */
  seek(seconds: number): void {
    this.element.currentTime = seconds;
  }
}
