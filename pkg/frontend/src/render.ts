/** Top-down canvas renderer.
 *
 * Pure draw-from-model: no state of its own beyond the 2D context. The
 * roadbook arrives in the agent frame, so waypoints are rotated out by the
 * agent pose before plotting.
 */

import { Camera } from "./camera.js";
import { ConsoleModel } from "./viewmodel.js";

export function egoToWorld(
  pts: [number, number][],
  agent: [number, number, number],
): [number, number][] {
  const [ax, ay, th] = agent;
  const c = Math.cos(th);
  const s = Math.sin(th);
  return pts.map(([x, y]) => [ax + c * x - s * y, ay + s * x + c * y]);
}

const COLORS = {
  bg: "#14161a",
  walkable: "#2a2f36",
  walkableEdge: "#3a414b",
  obstacle: "#4e555f",
  route: "#4f8ac9",
  trail: "#8bc34a",
  roadbook: "#ffc857",
  agent: "#e8eaed",
  pedestrian: "#e07a5f",
  goal: "#66bb6a",
  flash: "rgba(229, 57, 53, 0.28)",
};

function poly(ctx: CanvasRenderingContext2D, cam: Camera, pts: [number, number][], w: number, h: number): void {
  ctx.beginPath();
  pts.forEach(([x, y], i) => {
    const [sx, sy] = cam.toScreen(x, y, w, h);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
}

function polyline(ctx: CanvasRenderingContext2D, cam: Camera, pts: [number, number][], w: number, h: number): void {
  ctx.beginPath();
  pts.forEach(([x, y], i) => {
    const [sx, sy] = cam.toScreen(x, y, w, h);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
}

function dot(ctx: CanvasRenderingContext2D, cam: Camera, x: number, y: number, rPx: number, w: number, h: number): void {
  const [sx, sy] = cam.toScreen(x, y, w, h);
  ctx.beginPath();
  ctx.arc(sx, sy, rPx, 0, 2 * Math.PI);
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  model: ConsoleModel,
  cam: Camera,
  w: number,
  h: number,
  now: number,
): void {
  ctx.fillStyle = COLORS.bg;
  ctx.fillRect(0, 0, w, h);

  const scene = model.scene;
  if (scene) {
    ctx.fillStyle = COLORS.walkable;
    ctx.strokeStyle = COLORS.walkableEdge;
    ctx.lineWidth = 1;
    for (const p of scene.walkable) {
      poly(ctx, cam, p, w, h);
      ctx.fill();
    }

    // ground-truth route, dashed, under everything dynamic
    ctx.strokeStyle = COLORS.route;
    ctx.lineWidth = 2;
    ctx.setLineDash([8, 6]);
    polyline(ctx, cam, scene.route, w, h);
    ctx.stroke();
    ctx.setLineDash([]);

    ctx.fillStyle = COLORS.goal;
    ctx.globalAlpha = 0.25;
    dot(ctx, cam, scene.goal[0], scene.goal[1], scene.goal_radius * cam.scale, w, h);
    ctx.fill();
    ctx.globalAlpha = 1;
    dot(ctx, cam, scene.goal[0], scene.goal[1], 4, w, h);
    ctx.fill();

    ctx.fillStyle = COLORS.obstacle;
    for (const [bx0, by0, bx1, by1] of scene.boxes) {
      poly(ctx, cam, [[bx0, by0], [bx1, by0], [bx1, by1], [bx0, by1]], w, h);
      ctx.fill();
    }
    for (const [cx, cy, r] of scene.circles) {
      dot(ctx, cam, cx, cy, r * cam.scale, w, h);
      ctx.fill();
    }
  }

  // driven trail
  if (model.trail.length > 1) {
    ctx.strokeStyle = COLORS.trail;
    ctx.lineWidth = 2;
    ctx.globalAlpha = 0.8;
    polyline(ctx, cam, model.trail, w, h);
    ctx.stroke();
    ctx.globalAlpha = 1;
  }

  const st = model.latest;
  if (st) {
    // roadbook waypoints, rotated into the world frame
    const wps = egoToWorld(st.roadbook.waypoints, st.agent);
    ctx.strokeStyle = COLORS.roadbook;
    ctx.lineWidth = 1.5;
    ctx.globalAlpha = 0.9;
    polyline(ctx, cam, wps, w, h);
    ctx.stroke();
    ctx.fillStyle = COLORS.roadbook;
    for (const [x, y] of wps) {
      dot(ctx, cam, x, y, 3, w, h);
      ctx.fill();
    }
    ctx.globalAlpha = 1;

    ctx.fillStyle = COLORS.pedestrian;
    for (const [px, py] of st.pedestrians) {
      dot(ctx, cam, px, py, Math.max(0.3 * cam.scale, 3), w, h);
      ctx.fill();
    }

    // agent: heading triangle
    const [ax, ay, th] = st.agent;
    const tri = egoToWorld(
      [
        [0.45, 0],
        [-0.25, 0.25],
        [-0.25, -0.25],
      ],
      [ax, ay, th],
    );
    ctx.fillStyle = COLORS.agent;
    poly(ctx, cam, tri, w, h);
    ctx.fill();
  }

  if (model.flashing(now)) {
    ctx.fillStyle = COLORS.flash;
    ctx.fillRect(0, 0, w, h);
  }

  model.counters.framesDrawn += 1;
}
