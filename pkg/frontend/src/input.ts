/** Keyboard → (v, omega) with smooth ramping.
 *
 * Held keys slew the command toward its target at a fixed rate: full forward
 * (1.5 m/s) is reached in 0.5 s, and releasing everything decays both axes
 * back to zero within 0.5 s. The DOM layer owns key events; this module is
 * pure state + time so the dynamics are testable with a fake clock.
 */

export const DRIVE_SPEED = 1.5; // m/s, console cruising target
export const TURN_RATE = 1.5; // rad/s, matches the simulator's yaw clamp
const RAMP_TIME_S = 0.5;

export interface KeyState {
  forward: boolean;
  back: boolean;
  left: boolean;
  right: boolean;
}

export function emptyKeys(): KeyState {
  return { forward: false, back: false, left: false, right: false };
}

/** Map a KeyboardEvent.key value onto a drive axis, or null. */
export function keyAxis(key: string): keyof KeyState | null {
  switch (key) {
    case "w":
    case "W":
    case "ArrowUp":
      return "forward";
    case "s":
    case "S":
    case "ArrowDown":
      return "back";
    case "a":
    case "A":
    case "ArrowLeft":
      return "left";
    case "d":
    case "D":
    case "ArrowRight":
      return "right";
    default:
      return null;
  }
}

function slew(current: number, target: number, maxDelta: number): number {
  const d = target - current;
  if (Math.abs(d) <= maxDelta) return target;
  return current + Math.sign(d) * maxDelta;
}

export class ControlRamp {
  v = 0;
  omega = 0;

  /** Advance the command by dt seconds under the given key state. */
  step(keys: KeyState, dt: number): { v: number; omega: number } {
    const vTarget = DRIVE_SPEED * ((keys.forward ? 1 : 0) - (keys.back ? 1 : 0));
    // left turn is +omega (counter-clockwise, matching the sim's frame)
    const wTarget = TURN_RATE * ((keys.left ? 1 : 0) - (keys.right ? 1 : 0));
    this.v = slew(this.v, vTarget, (DRIVE_SPEED / RAMP_TIME_S) * dt);
    this.omega = slew(this.omega, wTarget, (TURN_RATE / RAMP_TIME_S) * dt);
    return { v: this.v, omega: this.omega };
  }

  reset(): void {
    this.v = 0;
    this.omega = 0;
  }
}
