/**
 * Webcam pose capture: maps an in-browser pose tracker's landmark list
 * onto the engine's 9-point upper-body set and emits hip-centered
 * frames at the session rate.
 *
 * The tracker itself is an external component behind the PoseTracker
 * interface; any model exposing the standard 33-landmark body layout
 * works. Landmarks use image coordinates (x right, y down, visibility
 * in [0,1]); engine frames use the subject's frame (x to the
 * subject's right, y up, origin at the hip center).
 */

export interface Landmark {
  x: number;
  y: number;
  visibility?: number;
}

export interface PoseTracker {
  /** Latest landmark list, or null while tracking is lost. */
  detect(): Landmark[] | null;
}

export const ENGINE_KEYPOINTS = [
  "r_shoulder",
  "l_shoulder",
  "r_elbow",
  "l_elbow",
  "r_wrist",
  "l_wrist",
  "r_hand",
  "l_hand",
  "hip_center",
] as const;

// standard 33-landmark body layout indices
const LM = {
  l_shoulder: 11, r_shoulder: 12,
  l_elbow: 13, r_elbow: 14,
  l_wrist: 15, r_wrist: 16,
  l_pinky: 17, r_pinky: 18,
  l_index: 19, r_index: 20,
  l_thumb: 21, r_thumb: 22,
  l_hip: 23, r_hip: 24,
};

const REQUIRED = [
  LM.l_shoulder, LM.r_shoulder, LM.l_elbow, LM.r_elbow,
  LM.l_wrist, LM.r_wrist, LM.l_hip, LM.r_hip,
];

export interface MappedFrame {
  /** 9 x 2 hip-centered coordinates in engine axis convention */
  pos: number[][];
}

export interface CaptureConfig {
  rateHz: number;
  /** frames with any required landmark below this are flagged, not sent */
  minVisibility: number;
}

export const DEFAULT_CAPTURE: CaptureConfig = { rateHz: 20, minVisibility: 0.5 };

function mean2(a: Landmark, b: Landmark): [number, number] {
  return [(a.x + b.x) / 2, (a.y + b.y) / 2];
}

/**
 * Map one landmark list to an engine frame, or null when tracking
 * confidence is too low. The hand point is the wrist-adjacent hand
 * center: the mean of pinky, index, and thumb roots, falling back to
 * the wrist when the fingers are not tracked.
 */
export function mapLandmarks(
  landmarks: Landmark[],
  minVisibility: number = DEFAULT_CAPTURE.minVisibility,
): MappedFrame | null {
  if (landmarks.length < 25) return null;
  for (const idx of REQUIRED) {
    const vis = landmarks[idx].visibility;
    if (vis !== undefined && vis < minVisibility) return null;
  }
  const hip = mean2(landmarks[LM.l_hip], landmarks[LM.r_hip]);

  // subject frame: x to the subject's right (image -x for a camera-facing
  // subject), y up (image -y), origin at the hip center
  const point = (lm: Landmark): [number, number] => [-(lm.x - hip[0]), -(lm.y - hip[1])];

  const hand = (side: "l" | "r"): [number, number] => {
    const fingers = [LM[`${side}_pinky`], LM[`${side}_index`], LM[`${side}_thumb`]]
      .map((i) => landmarks[i])
      .filter((lm) => lm.visibility === undefined || lm.visibility >= minVisibility);
    if (fingers.length === 0) return point(landmarks[LM[`${side}_wrist`]]);
    const cx = fingers.reduce((acc, lm) => acc + lm.x, 0) / fingers.length;
    const cy = fingers.reduce((acc, lm) => acc + lm.y, 0) / fingers.length;
    return point({ x: cx, y: cy });
  };

  return {
    pos: [
      point(landmarks[LM.r_shoulder]),
      point(landmarks[LM.l_shoulder]),
      point(landmarks[LM.r_elbow]),
      point(landmarks[LM.l_elbow]),
      point(landmarks[LM.r_wrist]),
      point(landmarks[LM.l_wrist]),
      hand("r"),
      hand("l"),
      [0, 0],
    ],
  };
}

export interface CaptureStats {
  sent: number;
  flagged: number;
}

/**
 * Emit mapped frames at the configured rate. Low-confidence frames are
 * counted as flagged and skipped; the engine handles missing steps.
 * Returns a stop function.
 */
export function captureLoop(
  tracker: PoseTracker,
  onFrame: (frame: MappedFrame) => void,
  config: CaptureConfig = DEFAULT_CAPTURE,
  stats?: CaptureStats,
  schedule: (cb: () => void, ms: number) => unknown = setTimeout,
): () => void {
  let running = true;
  const period = 1000 / config.rateHz;
  const tick = () => {
    if (!running) return;
    const landmarks = tracker.detect();
    const mapped = landmarks ? mapLandmarks(landmarks, config.minVisibility) : null;
    if (mapped) {
      if (stats) stats.sent += 1;
      onFrame(mapped);
    } else if (stats) {
      stats.flagged += 1;
    }
    schedule(tick, period);
  };
  schedule(tick, period);
  return () => {
    running = false;
  };
}
