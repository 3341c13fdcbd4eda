// Payload shapes mirror the gateway's wire-protocol variants one-to-one.

export interface Reading {
  p_h: number;
  p_v: number;
  p_d: number;
  p_a: number;
  angle_deg: number;
}

export interface CalibrationStatus {
  complete: boolean;
  calibrating: boolean;
  coverage_deg: number;
}

export interface ResultPayload {
  s_value: number;
  sigma_s: number;
  e_terms: [number, number][];
  settings: {
    a: number;
    a_prime: number;
    b: number;
    b_prime: number;
    delta: number;
  };
  live: boolean;
  wall_time: number;
}

export interface FrameEvent {
  type: "FRAME";
  frame: { r_h: number; r_v: number; r_d: number; r_a: number };
  reading?: Reading;
  calibration?: CalibrationStatus;
}

export interface ProgressEvent {
  type: "PROGRESS";
  session_id: string;
  step: number;
  of: number;
}

export interface ResultEvent {
  type: "CHSH_RESULT";
  session_id: string;
  result: ResultPayload;
}

export interface ErrorEvent {
  type: "ERROR";
  code: string;
  detail?: string;
}

export interface CalibrateEvent extends CalibrationStatus {
  type: "CALIBRATE";
  action: "reset" | "done";
  accepted?: boolean;
}

export type GatewayEvent =
  | FrameEvent
  | ProgressEvent
  | ResultEvent
  | ErrorEvent
  | CalibrateEvent;

export interface StatePayload {
  phase: string;
  wheel_angle_deg: number;
  reading: Reading | null;
  calibration: CalibrationStatus;
  last_result: ResultPayload | null;
  fallback_ready: boolean;
}

export interface ReferenceCurve {
  rows: [number, number, number][]; // delta_deg, s_value, sigma_s
}
